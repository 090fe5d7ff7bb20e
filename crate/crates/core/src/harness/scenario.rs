use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::{CongestionLevel, Thresholds, DEFAULT_HIDDEN, DEFAULT_TRUNCATION};
use crate::control::{IntersectionPlan, OptimizerConfig};
use crate::coordination::CoordinationConfig;
use crate::estimation::DEFAULT_WINDOW;
use crate::network::{
    CellParams, DemandProfile, IntersectionDef, IntersectionId, Link, LinkId, Movement,
    MovementId, Network, RatioError, Source, TurningRatios,
};
use crate::par::Execution;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario ({invariant}): {detail}")]
    Validation { invariant: String, detail: String },
    #[error("bad unit value for {field}: {detail}")]
    Unit { field: String, detail: String },
}

impl ScenarioError {
    fn validation(invariant: &str, detail: impl Into<String>) -> Self {
        ScenarioError::Validation {
            invariant: invariant.to_string(),
            detail: detail.into(),
        }
    }

    fn unit(field: impl Into<String>, detail: impl Into<String>) -> Self {
        ScenarioError::Unit {
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// True for errors that mean the file content is wrong, as opposed to
    /// not being readable.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(self, ScenarioError::Io { .. })
    }
}

/// Scenario file, as written on disk. Rates are per hour and durations in
/// seconds; [`Scenario::from_file`] converts them to per-step values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub steps: u64,
    /// Steps simulated under the base plans before measurement starts,
    /// shared by every strategy. A whole number of cycles.
    #[serde(default)]
    pub warmup_steps: u64,
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkSpec,
    #[serde(default)]
    pub demand: DemandSpec,
    #[serde(default)]
    pub signals: SignalSpec,
    /// Ground-truth turning ratios; approaches not listed split uniformly.
    #[serde(default)]
    pub branching: Vec<BranchingSpec>,
    #[serde(default)]
    pub control: ControlConfig,
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub intersections: Vec<IntersectionSpec>,
    pub sinks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: usize,
    #[serde(default = "one_lane")]
    pub lanes: u32,
    pub cells: Vec<CellSpec>,
}

fn one_lane() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Holding capacity, vehicles.
    pub n_max: f64,
    /// Maximum flow, vehicles per hour.
    pub q_max_veh_h: f64,
    /// Backward-to-forward wave speed ratio, in (0, 1].
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSpec {
    pub id: usize,
    pub movements: Vec<MovementSpec>,
    /// Movement ids per phase.
    pub phases: Vec<Vec<usize>>,
    #[serde(default)]
    pub lost_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementSpec {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Seconds per vehicle per lane at saturation.
    pub headway_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    /// Relative amplitude of seeded multiplicative noise on arrivals.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub link: usize,
    /// `(start time s, vehicles per hour)`, piecewise constant.
    pub rates_veh_h: Vec<(f64, f64)>,
    #[serde(default)]
    pub period_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    #[serde(default = "default_cycle")]
    pub cycle_s: f64,
    /// Base plans; intersections not listed get an equal split.
    #[serde(default)]
    pub plans: Vec<PlanSpec>,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            cycle_s: default_cycle(),
            plans: Vec::new(),
        }
    }
}

fn default_cycle() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub intersection: usize,
    pub greens_s: Vec<f64>,
    #[serde(default)]
    pub offset_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingSpec {
    pub intersection: usize,
    /// One ratio per movement, in the intersection's movement order.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum PredictorConfig {
    Smoothing {
        alpha: f64,
        horizon: usize,
    },
    Recurrent {
        hidden: usize,
        truncation: usize,
        horizon: usize,
        epochs: usize,
        learning_rate: f64,
        /// Most recent cycles used for training.
        history: usize,
    },
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::Smoothing {
            alpha: 0.5,
            horizon: 3,
        }
    }
}

impl PredictorConfig {
    pub fn recurrent_default() -> Self {
        PredictorConfig::Recurrent {
            hidden: DEFAULT_HIDDEN,
            truncation: DEFAULT_TRUNCATION,
            horizon: 3,
            epochs: 50,
            learning_rate: 0.05,
            history: 60,
        }
    }
}

/// Strategy parameters shared by every controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub optimizer: OptimizerConfig,
    pub coordination: CoordinationConfig,
    /// Moving-average window of the turning-ratio estimator, in cycles.
    pub window: usize,
    /// Repartition every this many cycles.
    pub repartition_every: usize,
    /// Largest region in links; unlimited when absent.
    pub max_region_size: Option<usize>,
    pub thresholds: Thresholds,
    pub predictor: PredictorConfig,
    /// Forces every link to this level instead of forecasting.
    pub level_override: Option<CongestionLevel>,
    /// Inner data-parallel loops.
    pub execution: Execution,
    /// Run the strategies of one experiment concurrently. Off by default so
    /// controller wall times are not inflated by competing threads.
    pub parallel_strategies: bool,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            optimizer: OptimizerConfig::default(),
            coordination: CoordinationConfig::default(),
            window: DEFAULT_WINDOW,
            repartition_every: 5,
            max_region_size: None,
            thresholds: Thresholds::default(),
            predictor: PredictorConfig::default(),
            level_override: None,
            execution: Execution::default(),
            parallel_strategies: false,
        }
    }
}

/// A loaded, unit-converted and validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Network,
    pub dt: f64,
    /// Measured steps, after the warm-up.
    pub steps: u64,
    pub warmup_steps: u64,
    pub seed: u64,
    pub cycle: f64,
    pub base_plans: Vec<IntersectionPlan>,
    pub true_ratios: TurningRatios,
    pub demand_noise: f64,
    pub control: ControlConfig,
    /// The file with every default filled in.
    pub file: ScenarioFile,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

fn finite_nonneg(field: impl Into<String>, x: f64) -> Result<f64, ScenarioError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(ScenarioError::unit(field, format!("{x} is not a finite non-negative value")))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let dt = file.dt_s;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ScenarioError::unit("dt_s", format!("{dt} must be positive")));
        }
        let network = build_network(&file, dt)?;

        let cycle = file.signals.cycle_s;
        if !(cycle.is_finite() && cycle >= dt) {
            return Err(ScenarioError::unit(
                "signals.cycle_s",
                format!("{cycle} must be at least one step ({dt} s)"),
            ));
        }
        if (cycle / dt - (cycle / dt).round()).abs() > 1e-9 {
            return Err(ScenarioError::validation(
                "cycle is a whole number of steps",
                format!("cycle {cycle} s is not a multiple of dt {dt} s"),
            ));
        }
        if (file.steps as f64) * dt < cycle {
            return Err(ScenarioError::validation(
                "simulation covers at least one cycle",
                format!("{} steps of {dt} s is shorter than the {cycle} s cycle", file.steps),
            ));
        }

        let per_cycle = (cycle / dt).round() as u64;
        if !file.warmup_steps.is_multiple_of(per_cycle) {
            return Err(ScenarioError::validation(
                "warm-up is a whole number of cycles",
                format!("{} warm-up steps is not a multiple of {per_cycle}", file.warmup_steps),
            ));
        }

        let g_min = file.control.optimizer.g_min;
        let mut base_plans = Vec::with_capacity(network.intersections().len());
        for node in network.intersections() {
            let spec = file.signals.plans.iter().find(|p| p.intersection == node.id.0);
            let lost = node.lost_time_per_phase;
            let plan = match spec {
                Some(p) => IntersectionPlan::new(cycle, p.greens_s.clone(), p.offset_s, lost, g_min),
                None => IntersectionPlan::uniform(cycle, node.phase_count(), 0.0, lost, g_min),
            }
            .map_err(|e| {
                ScenarioError::validation("signal plan feasibility", format!("intersection {}: {e}", node.id))
            })?;
            if plan.phase_count() != node.phase_count() {
                return Err(ScenarioError::validation(
                    "one green per phase",
                    format!(
                        "intersection {} has {} phases but its plan has {} greens",
                        node.id,
                        node.phase_count(),
                        plan.phase_count()
                    ),
                ));
            }
            base_plans.push(plan);
        }
        for p in &file.signals.plans {
            if p.intersection >= network.intersections().len() {
                return Err(ScenarioError::validation(
                    "plans refer to existing intersections",
                    format!("plan for unknown intersection {}", p.intersection),
                ));
            }
        }

        let true_ratios = build_ratios(&file, &network)?;

        let c = &file.control;
        let o = &c.optimizer;
        if o.horizon == 0 || o.budget == 0 || !(o.g_step > 0.0) || !(o.inflow_step > 0.0) || o.g_min < 0.0 {
            return Err(ScenarioError::validation(
                "optimizer parameters",
                "horizon, budget, g_step and inflow_step must be positive and g_min non-negative",
            ));
        }
        let k = &c.coordination;
        if !(k.tol > 0.0) || !(k.alpha0 > 0.0) || k.max_iters == 0 {
            return Err(ScenarioError::validation(
                "coordination parameters",
                "tol, alpha0 and max_iters must be positive",
            ));
        }
        if c.window == 0 || c.repartition_every == 0 || c.max_region_size == Some(0) {
            return Err(ScenarioError::validation(
                "control parameters",
                "window, repartition_every and max_region_size must be positive",
            ));
        }
        match c.predictor {
            PredictorConfig::Smoothing { alpha, horizon } => {
                if !(alpha > 0.0 && alpha <= 1.0) || horizon == 0 {
                    return Err(ScenarioError::validation(
                        "predictor parameters",
                        "smoothing alpha must be in (0, 1] and horizon positive",
                    ));
                }
            }
            PredictorConfig::Recurrent {
                hidden,
                truncation,
                horizon,
                history,
                learning_rate,
                ..
            } => {
                if hidden == 0 || truncation == 0 || horizon == 0 || history < truncation + horizon || !(learning_rate > 0.0) {
                    return Err(ScenarioError::validation(
                        "predictor parameters",
                        "recurrent sizes must be positive and history must cover truncation + horizon",
                    ));
                }
            }
        }
        let noise = finite_nonneg("demand.noise", file.demand.noise)?;
        if noise > 1.0 {
            return Err(ScenarioError::unit("demand.noise", "relative amplitude above 1"));
        }

        Ok(Scenario {
            network,
            dt,
            steps: file.steps,
            warmup_steps: file.warmup_steps,
            seed: file.seed,
            cycle,
            base_plans,
            true_ratios,
            demand_noise: noise,
            control: file.control.clone(),
            file,
        })
    }

    pub fn steps_per_cycle(&self) -> usize {
        (self.cycle / self.dt).round() as usize
    }

    /// The scenario with every default written out.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }
}

fn build_network(file: &ScenarioFile, dt: f64) -> Result<Network, ScenarioError> {
    let spec = &file.network;
    let mut links = Vec::with_capacity(spec.links.len());
    for l in &spec.links {
        let mut cells = Vec::with_capacity(l.cells.len());
        for (k, c) in l.cells.iter().enumerate() {
            let field = format!("network.links[{}].cells[{k}]", l.id);
            let q = finite_nonneg(format!("{field}.q_max_veh_h"), c.q_max_veh_h)?;
            let n_max = finite_nonneg(format!("{field}.n_max"), c.n_max)?;
            let q_step = q * dt / SECONDS_PER_HOUR;
            let params = CellParams::new(n_max, q_step, c.delta)
                .map_err(|e| ScenarioError::validation("cell parameters", format!("{field}: {e}")))?;
            cells.push(params);
        }
        links.push(Link {
            id: LinkId(l.id),
            cells,
            lanes: l.lanes,
        });
    }

    let mut defs = Vec::with_capacity(spec.intersections.len());
    for node in &spec.intersections {
        let mut movements = Vec::with_capacity(node.movements.len());
        for m in &node.movements {
            let field = format!("network.intersections[{}].movements[{}].headway_s", node.id, m.id);
            let h = finite_nonneg(&field, m.headway_s)?;
            if h == 0.0 {
                return Err(ScenarioError::unit(field, "headway must be positive"));
            }
            let lanes = spec
                .links
                .iter()
                .find(|l| l.id == m.from)
                .map(|l| l.lanes)
                .ok_or_else(|| {
                    ScenarioError::validation(
                        "movements join existing links",
                        format!("movement {} leaves unknown link {}", m.id, m.from),
                    )
                })?;
            movements.push(Movement {
                id: MovementId(m.id),
                from_link: LinkId(m.from),
                to_link: LinkId(m.to),
                saturation_flow: lanes as f64 / h,
                discharge_headway: h,
            });
        }
        let lost = finite_nonneg(format!("network.intersections[{}].lost_time_s", node.id), node.lost_time_s)?;
        defs.push(IntersectionDef {
            id: IntersectionId(node.id),
            movements,
            phases: node
                .phases
                .iter()
                .map(|p| p.iter().map(|&m| MovementId(m)).collect())
                .collect(),
            lost_time_per_phase: lost,
        });
    }

    let mut sources = Vec::with_capacity(file.demand.sources.len());
    for s in &file.demand.sources {
        let field = format!("demand.sources[link {}]", s.link);
        let mut breakpoints = Vec::with_capacity(s.rates_veh_h.len());
        for &(t, r) in &s.rates_veh_h {
            let r = finite_nonneg(format!("{field}.rates_veh_h"), r)?;
            breakpoints.push((t, r / SECONDS_PER_HOUR));
        }
        let profile = DemandProfile::new(breakpoints, s.period_s)
            .map_err(|e| ScenarioError::validation("demand profile", format!("{field}: {e}")))?;
        sources.push(Source {
            link: LinkId(s.link),
            profile,
        });
    }
    let sinks: BTreeSet<LinkId> = spec.sinks.iter().map(|&l| LinkId(l)).collect();
    Network::new(links, defs, sources, sinks)
        .map_err(|e| ScenarioError::validation("network topology", e.to_string()))
}

fn build_ratios(file: &ScenarioFile, network: &Network) -> Result<TurningRatios, ScenarioError> {
    let mut raw = TurningRatios::uniform(network).as_slice().to_vec();
    for b in &file.branching {
        let Some(node) = network.intersections().get(b.intersection) else {
            return Err(ScenarioError::validation(
                "branching refers to existing intersections",
                format!("ratios for unknown intersection {}", b.intersection),
            ));
        };
        if b.ratios.len() != node.movements.len() {
            return Err(ScenarioError::validation(
                "one ratio per movement",
                format!(
                    "intersection {} has {} movements but {} ratios",
                    node.id,
                    node.movements.len(),
                    b.ratios.len()
                ),
            ));
        }
        for (m, r) in node.movements.iter().zip(&b.ratios) {
            raw[m.0] = *r;
        }
    }
    TurningRatios::new(network, raw).map_err(|e| match e {
        RatioError::RowSum {
            link,
            intersection,
            sum,
        } => ScenarioError::validation(
            "branching rows sum to 1",
            format!("intersection {intersection}: ratios of approach {link} sum to {sum}"),
        ),
        other => ScenarioError::validation("branching ratios", other.to_string()),
    })
}
