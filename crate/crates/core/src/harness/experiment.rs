use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::{PredictorConfig, Scenario};
use crate::congestion::{
    cluster_links, identify_level, predict, train_recurrent, CongestionLevel, LinkObservation,
    Partition, Predictor, SmoothingPredictor, TrainConfig,
};
use crate::control::{decide_all, hybrid_assign, ControlDecision, IntersectionPlan, StrategyKind};
use crate::coordination::{run_control_cycle, CycleInputs, MultiplierState};
use crate::estimation::{estimate_error, BranchingEstimate, TurningObservation};
use crate::network::{advance, IntersectionId, LinkId, Network, Signal, SimState, StepScratch};
use crate::par::{map_ordered, Execution};

/// One control cycle of one strategy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleRecord {
    pub strategy: StrategyKind,
    pub cycle: usize,
    /// Simulated time at the end of the cycle, seconds.
    pub time_s: f64,
    /// Vehicle-seconds of queueing during the cycle.
    pub delay_increment: f64,
    pub cumulative_delay: f64,
    /// Vehicles that left the network during the cycle.
    pub throughput: f64,
    /// Seconds spent in estimation, forecasting, partitioning and control.
    pub controller_wall_s: f64,
    /// Largest turning-ratio error after this cycle's update.
    pub estimator_error: Option<f64>,
    pub partition: String,
    /// Final coordination residual per coupled boundary link.
    pub residuals: BTreeMap<LinkId, f64>,
    pub coordination_iterations: usize,
    /// Largest conservation error over the cycle's steps.
    pub conservation_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsTrace {
    pub strategy: StrategyKind,
    pub records: Vec<CycleRecord>,
    /// Indication of every intersection at every simulated step.
    #[serde(skip)]
    pub signals: Vec<Vec<Signal>>,
    /// Partition in force during the last simulated cycle.
    #[serde(skip)]
    pub final_partition: Option<Partition>,
}

impl MetricsTrace {
    pub fn cumulative_delay(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_delay)
    }

    pub fn controller_wall_s(&self) -> f64 {
        self.records.iter().map(|r| r.controller_wall_s).sum()
    }

    pub fn throughput(&self) -> f64 {
        self.records.iter().map(|r| r.throughput).sum()
    }

    pub fn max_conservation_error(&self) -> f64 {
        self.records.iter().map(|r| r.conservation_error).fold(0.0, f64::max)
    }
}

/// Exogenous arrivals per step and source, shared by every strategy.
pub fn demand_realization(scenario: &Scenario) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let dt = scenario.dt;
    (0..scenario.warmup_steps + scenario.steps)
        .map(|k| {
            let t = k as f64 * dt;
            scenario
                .network
                .sources()
                .iter()
                .map(|s| {
                    let base = s.profile.vehicles_between(t, t + dt);
                    if scenario.demand_noise > 0.0 {
                        let u: f64 = rng.gen_range(-1.0..=1.0);
                        base * (1.0 + scenario.demand_noise * u)
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect()
}

/// Runs every requested strategy on the same scenario and demand
/// realization. Traces come back in the order requested.
pub fn run_experiment(scenario: &Scenario, strategies: &[StrategyKind]) -> Vec<MetricsTrace> {
    assert!(!strategies.is_empty(), "at least one strategy");
    let arrivals = demand_realization(scenario);
    let exec = if scenario.control.parallel_strategies {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    map_ordered(exec, strategies, |&kind| {
        ClosedLoop::new(scenario, kind, &arrivals).run(None).0
    })
}

/// Partition the hybrid controller uses during the cycle containing `step`.
pub fn partition_at(scenario: &Scenario, step: u64) -> Partition {
    let arrivals = demand_realization(scenario);
    ClosedLoop::new(scenario, StrategyKind::Hybrid, &arrivals)
        .run(Some(step))
        .1
        .expect("hybrid always partitions")
}

struct ClosedLoop<'a> {
    scenario: &'a Scenario,
    kind: StrategyKind,
    arrivals: &'a [Vec<f64>],
}

impl<'a> ClosedLoop<'a> {
    fn new(scenario: &'a Scenario, kind: StrategyKind, arrivals: &'a [Vec<f64>]) -> Self {
        ClosedLoop {
            scenario,
            kind,
            arrivals,
        }
    }

    fn fixed_partition(&self) -> Option<Partition> {
        let level = match self.kind {
            StrategyKind::PreTimed => CongestionLevel::Free,
            StrategyKind::ScatsLike => CongestionLevel::Moderate,
            StrategyKind::Optimized => CongestionLevel::Congested,
            StrategyKind::Hybrid => return None,
        };
        Some(Partition::single(&self.scenario.network, level))
    }

    /// Simulates the warm-up under the base plans, then the measured period
    /// to the end, or until the cycle containing measured step `stop_at` has
    /// been planned. Returns the trace and the partition last in force.
    fn run(&self, stop_at: Option<u64>) -> (MetricsTrace, Option<Partition>) {
        let scn = self.scenario;
        let net = &scn.network;
        let cfg = &scn.control;
        let mut optimizer = cfg.optimizer.clone();
        optimizer.execution = cfg.execution;
        let per_cycle = scn.steps_per_cycle();
        let end = scn.warmup_steps + scn.steps;

        let mut state = SimState::empty(net, scn.dt);
        let mut scratch = StepScratch::new(net);
        let mut obs = Observations::new(net, cfg.window);
        let mut plans: Vec<IntersectionPlan> = scn.base_plans.clone();
        let mut multipliers = MultiplierState::new(cfg.coordination.alpha0);
        let mut partition = self.fixed_partition();

        let mut trace = MetricsTrace {
            strategy: self.kind,
            records: Vec::new(),
            signals: Vec::with_capacity(scn.steps as usize),
            final_partition: None,
        };

        let mut warm_conservation: f64 = 0.0;
        while state.step() < scn.warmup_steps {
            let steps = per_cycle.min((scn.warmup_steps - state.step()) as usize);
            let decisions = decide_all(&scn.base_plans, state.step(), steps, scn.dt);
            let played = self.play(&mut state, &mut scratch, &decisions, steps, &mut obs, None);
            warm_conservation = warm_conservation.max(played.conservation);
            obs.record_turns(net);
        }

        let mut cumulative = 0.0;
        let mut cycle = 0;
        while state.step() < end {
            let clock = Instant::now();
            let estimate = obs.estimator.ratios();
            // Without a warm-up, cycle 0 only sees the initial state, so the
            // first cycle of observations triggers an early repartition.
            let due = cycle % cfg.repartition_every == 0 || (cycle == 1 && scn.warmup_steps == 0);
            if self.kind == StrategyKind::Hybrid && due {
                let next = self.repartition(&state, &obs.history);
                if partition.as_ref() != Some(&next) {
                    multipliers.reset();
                }
                partition = Some(next);
            }
            let part = partition.as_ref().expect("partition set");
            let assignments = match self.kind {
                StrategyKind::Hybrid => hybrid_assign(part),
                other => vec![other],
            };
            let out = run_control_cycle(
                &CycleInputs {
                    network: net,
                    state: &state,
                    ratios: &estimate,
                    partition: part,
                    assignments: &assignments,
                    base_plans: &scn.base_plans,
                    current_plans: &plans,
                    phase_counts: &obs.phase_counts,
                    last_inflows: &obs.last_inflows,
                },
                &mut multipliers,
                &optimizer,
                &cfg.coordination,
            );
            let mut wall = clock.elapsed().as_secs_f64();
            let measured = state.step() - scn.warmup_steps;
            if stop_at.is_some_and(|k| k < measured + per_cycle as u64) {
                trace.final_partition = partition.clone();
                return (trace, partition);
            }
            plans = out.plans;

            let start_step = state.step();
            let steps = per_cycle.min((end - start_step) as usize);
            let exited_before = state.cumulative_exited();
            let mut played =
                self.play(&mut state, &mut scratch, &out.decisions, steps, &mut obs, Some(&mut trace.signals));
            if cycle == 0 {
                played.conservation = played.conservation.max(warm_conservation);
            }

            let clock = Instant::now();
            obs.record_turns(net);
            wall += clock.elapsed().as_secs_f64();
            let error = estimate_error(&obs.estimator.ratios(), &scn.true_ratios).ok();

            cumulative += played.delay;
            let report = out.report.as_ref();
            trace.records.push(CycleRecord {
                strategy: self.kind,
                cycle,
                time_s: (state.step() - scn.warmup_steps) as f64 * scn.dt,
                delay_increment: played.delay,
                cumulative_delay: cumulative,
                throughput: state.cumulative_exited() - exited_before,
                controller_wall_s: wall,
                estimator_error: error,
                partition: part.summary(),
                residuals: report.map(|r| r.link_residuals.clone()).unwrap_or_default(),
                coordination_iterations: report.map_or(0, |r| r.iterations),
                conservation_error: played.conservation,
            });
            debug_assert_eq!(state.step(), start_step + steps as u64);
            cycle += 1;
        }
        trace.final_partition = partition.clone();
        (trace, partition)
    }

    /// Applies `decisions` for `steps` steps and folds what was seen into
    /// `obs`, apart from the turning counts.
    fn play(
        &self,
        state: &mut SimState,
        scratch: &mut StepScratch,
        decisions: &[ControlDecision],
        steps: usize,
        obs: &mut Observations,
        mut signals_out: Option<&mut Vec<Vec<Signal>>>,
    ) -> Played {
        let scn = self.scenario;
        let net = &scn.network;
        let n_links = net.links().len();
        obs.discharged_before = state.discharged().to_vec();
        let inflow_before = state.link_inflow().to_vec();
        for counts in obs.phase_counts.iter_mut() {
            counts.iter_mut().for_each(|c| *c = 0.0);
        }
        let mut speed_sum = vec![0.0; n_links];
        let mut density_sum = vec![0.0; n_links];
        let mut played = Played::default();
        let mut signals = vec![Signal::AllRed; net.intersections().len()];
        for j in 0..steps {
            for (s, d) in signals.iter_mut().zip(decisions) {
                *s = d.signals[j];
            }
            let k = state.step() as usize;
            advance(net, state, &signals, &scn.true_ratios, &self.arrivals[k], scratch);
            played.delay += state.queued_vehicles() * scn.dt;
            played.conservation = played.conservation.max(state.conservation_error());
            for (i, s) in signals.iter().enumerate() {
                if let Signal::Green(p) = *s {
                    let node = net.intersection(IntersectionId(i));
                    obs.phase_counts[i][p] +=
                        node.phases[p].iter().map(|m| state.movement_outflow()[m.0]).sum::<f64>();
                }
            }
            for l in 0..n_links {
                speed_sum[l] += state.link_speed()[l];
                density_sum[l] += state.link_density(net, LinkId(l));
            }
            if let Some(out) = signals_out.as_deref_mut() {
                out.push(signals.clone());
            }
        }
        for l in 0..n_links {
            obs.last_inflows[l] = state.link_inflow()[l] - inflow_before[l];
            obs.history[l].push(LinkObservation {
                link: LinkId(l),
                step: state.step(),
                speed: speed_sum[l] / steps as f64,
                density: density_sum[l] / steps as f64,
            });
        }
        obs.discharged_after = state.discharged().to_vec();
        played
    }

    fn repartition(&self, state: &SimState, history: &[Vec<LinkObservation>]) -> Partition {
        let scn = self.scenario;
        let net = &scn.network;
        let cfg = &scn.control;
        let max_size = cfg.max_region_size.unwrap_or(usize::MAX);
        let levels: Vec<CongestionLevel> = match cfg.level_override {
            Some(level) => vec![level; net.links().len()],
            None => {
                let links: Vec<usize> = (0..net.links().len()).collect();
                map_ordered(cfg.execution, &links, |&l| {
                    forecast_level(net, state, &history[l], l, scn)
                })
            }
        };
        cluster_links(net, &levels, max_size)
    }
}

#[derive(Default)]
struct Played {
    delay: f64,
    conservation: f64,
}

/// What the controller has learned from the simulation so far.
struct Observations {
    estimator: BranchingEstimate,
    history: Vec<Vec<LinkObservation>>,
    /// Vehicles served per phase during the last cycle.
    phase_counts: Vec<Vec<f64>>,
    /// Vehicles entering each link during the last cycle.
    last_inflows: Vec<f64>,
    discharged_before: Vec<f64>,
    discharged_after: Vec<f64>,
    /// Cycles recorded by the estimator.
    cycles: u64,
}

impl Observations {
    fn new(net: &Network, window: usize) -> Self {
        Observations {
            estimator: BranchingEstimate::new(net, window),
            history: vec![Vec::new(); net.links().len()],
            phase_counts: net.intersections().iter().map(|i| vec![0.0; i.phase_count()]).collect(),
            last_inflows: vec![0.0; net.links().len()],
            discharged_before: Vec::new(),
            discharged_after: Vec::new(),
            cycles: 0,
        }
    }

    /// Feeds the last cycle's discharged counts to the estimator.
    fn record_turns(&mut self, net: &Network) {
        for node in net.intersections() {
            let counts = node
                .movements
                .iter()
                .map(|m| self.discharged_after[m.0] - self.discharged_before[m.0])
                .collect();
            self.estimator
                .record_cycle(&TurningObservation {
                    intersection: node.id,
                    cycle: self.cycles,
                    counts,
                })
                .expect("counts match the network");
        }
        self.cycles += 1;
    }
}

/// Level from the mean of the forecast horizon.
fn forecast_level(
    net: &Network,
    state: &SimState,
    history: &[LinkObservation],
    link: usize,
    scn: &Scenario,
) -> CongestionLevel {
    let thresholds = &scn.control.thresholds;
    if history.is_empty() {
        let l = LinkId(link);
        return identify_level(state.link_speed()[link], state.link_density(net, l), thresholds);
    }
    let fallback = |horizon| SmoothingPredictor::new(0.5, horizon);
    let forecast = match &scn.control.predictor {
        PredictorConfig::Smoothing { alpha, horizon } => {
            let p = SmoothingPredictor::new(*alpha, *horizon);
            predict(&p, &p, history)
        }
        PredictorConfig::Recurrent {
            hidden,
            truncation,
            horizon,
            epochs,
            learning_rate,
            history: keep,
        } => {
            let recent = &history[history.len().saturating_sub(*keep)..];
            let config = TrainConfig {
                hidden: *hidden,
                horizon: *horizon,
                truncation: *truncation,
                epochs: *epochs,
                learning_rate: *learning_rate,
                seed: scn.seed ^ (link as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            };
            let speeds: Vec<f64> = recent.iter().map(|o| o.speed).collect();
            let densities: Vec<f64> = recent.iter().map(|o| o.density).collect();
            match (train_recurrent(&speeds, &config), train_recurrent(&densities, &config)) {
                (Ok((v, _)), Ok((d, _))) => predict(&v as &dyn Predictor, &d as &dyn Predictor, recent),
                _ => {
                    let p = fallback(*horizon);
                    predict(&p, &p, history)
                }
            }
        }
    };
    let pairs = forecast.expect("history is non-empty and horizons agree");
    let n = pairs.len() as f64;
    let speed = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let density = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    identify_level(speed, density, thresholds)
}
