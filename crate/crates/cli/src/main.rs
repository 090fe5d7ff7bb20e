use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tlc_core::control::StrategyKind;
use tlc_core::harness::{
    benchmark_grid, load_scenario, partition_at, run_experiment, write_metrics, write_summary,
    BenchmarkOptions, ControlConfig, Scenario, ScenarioError,
};
use tlc_core::par::Execution;

#[derive(Parser, Debug)]
#[command(name = "tlc", version, about = "Closed-loop traffic signal control simulator")]
struct Cli {
    /// Print the effective configuration (defaults filled in) and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run strategies through the closed loop and write per-cycle metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated: pretimed, scats, optimized, hybrid.
        #[arg(long, value_delimiter = ',', default_value = "pretimed,scats,optimized,hybrid")]
        strategies: Vec<StrategyKind>,
        /// Override the scenario's simulation length.
        #[arg(long)]
        steps: Option<u64>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Add per-boundary-link coordination residual columns.
        #[arg(long)]
        verbose: bool,
        /// Disable data-parallel loops.
        #[arg(long)]
        sequential: bool,
    },
    /// Load a scenario and report whether it satisfies every invariant.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the hybrid controller's partition in force at a given step.
    Partition {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        at_step: u64,
    },
    /// Write the 3x3 benchmark grid scenario.
    Benchmark {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Scenario problems exit with 1, everything else with 2.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(|e: ScenarioError| Failure {
        code: if e.is_invalid_input() { 1 } else { 2 },
        error: anyhow::Error::new(e).context(format!("loading {}", path.display())),
    })
}

fn scenario_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Simulate { scenario, .. }
        | Command::Validate { scenario }
        | Command::Partition { scenario, .. } => Some(scenario),
        Command::Benchmark { .. } => None,
    }
}

fn print_config(cmd: Option<&Command>) -> Result<(), Failure> {
    match cmd.and_then(scenario_path) {
        Some(path) => println!("{}", load(path)?.echo()),
        None => {
            let defaults = serde_json::json!({
                "dt_s": 1.0,
                "seed": 0,
                "signals": { "cycle_s": 60.0 },
                "demand": { "noise": 0.0 },
                "control": ControlConfig::default(),
            });
            println!("{}", serde_json::to_string_pretty(&defaults).context("serializing defaults")?);
        }
    }
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.print_config {
        return print_config(cli.command.as_ref());
    }
    let Some(command) = cli.command else {
        return Err(anyhow::anyhow!("no command given; see --help").into());
    };
    match command {
        Command::Simulate {
            scenario,
            strategies,
            steps,
            seed,
            out,
            verbose,
            sequential,
        } => {
            let mut file = load(&scenario)?.file;
            if let Some(s) = steps {
                file.steps = s;
            }
            if let Some(s) = seed {
                file.seed = s;
            }
            if sequential {
                file.control.execution = Execution::Sequential;
            }
            let scn = Scenario::from_file(file).map_err(|e| Failure {
                code: 1,
                error: anyhow::Error::new(e).context("applying overrides"),
            })?;
            if strategies.is_empty() {
                return Err(anyhow::anyhow!("no strategies selected").into());
            }
            let traces = run_experiment(&scn, &strategies);
            write_metrics(&traces, &out, verbose)
                .with_context(|| format!("writing {}", out.display()))?;
            let summary = summary_path(&out);
            write_summary(&traces, &summary)
                .with_context(|| format!("writing {}", summary.display()))?;
            for t in &traces {
                println!(
                    "{:<9} cumulative delay {:>14.1} veh*s  throughput {:>8.1} veh  controller {:>9.3} s",
                    t.strategy.name(),
                    t.cumulative_delay(),
                    t.throughput(),
                    t.controller_wall_s()
                );
            }
            println!("metrics: {}\nsummary: {}", out.display(), summary.display());
        }
        Command::Validate { scenario } => {
            let scn = load(&scenario)?;
            println!(
                "{}: ok ({} links, {} intersections, {} movements, {} steps of {} s, cycle {} s)",
                scenario.display(),
                scn.network.links().len(),
                scn.network.intersections().len(),
                scn.network.movements().len(),
                scn.steps,
                scn.dt,
                scn.cycle
            );
        }
        Command::Partition { scenario, at_step } => {
            let scn = load(&scenario)?;
            if at_step >= scn.steps {
                return Err(Failure {
                    code: 1,
                    error: anyhow::anyhow!("step {at_step} is beyond the {}-step simulation", scn.steps),
                });
            }
            let p = partition_at(&scn, at_step);
            println!("{}", serde_json::to_string_pretty(&p).context("serializing partition")?);
        }
        Command::Benchmark { out, steps, seed } => {
            let mut o = BenchmarkOptions::default();
            if let Some(s) = steps {
                o.steps = s;
            }
            if let Some(s) = seed {
                o.seed = s;
            }
            let file = benchmark_grid(&o);
            let text = serde_json::to_string_pretty(&file).context("serializing scenario")?;
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
