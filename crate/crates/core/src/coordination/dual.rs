use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::congestion::RegionId;
use crate::control::{
    optimize_region, OptimizerConfig, Prices, RegionDecision, RegionModel, RegionProblem,
    RegionSolution, BoundaryFlows,
};
use crate::network::{LinkId, SimState, TurningRatios};
use crate::par::map_ordered;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinationConfig {
    /// Initial subgradient step; step `t` uses `alpha0 / (1 + t)`.
    pub alpha0: f64,
    /// Stop once every boundary residual is below this (vehicles per cycle).
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        CoordinationConfig {
            alpha0: 0.5,
            tol: 0.5,
            max_iters: 20,
        }
    }
}

/// Consistency constraint on one boundary link between two responsive
/// regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoupling {
    pub link: LinkId,
    pub exporter: RegionId,
    pub importer: RegionId,
    /// Largest inflow the importer may assume per cycle.
    pub cap: f64,
    /// Exporter's predicted outflow per horizon cycle.
    pub f_out: Vec<f64>,
    /// Importer's assumed inflow per horizon cycle.
    pub f_in: Vec<f64>,
}

impl BoundaryCoupling {
    pub fn new(link: LinkId, exporter: RegionId, importer: RegionId, cap: f64, horizon: usize) -> Self {
        BoundaryCoupling {
            link,
            exporter,
            importer,
            cap,
            f_out: vec![0.0; horizon],
            f_in: vec![0.0; horizon],
        }
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.f_out.iter().zip(&self.f_in).map(|(o, i)| o - i).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Prices on the coupling constraints plus the residuals that produced them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    pub lambda: Prices,
    /// Updates applied in the current coordination round.
    pub iteration: usize,
    pub alpha0: f64,
    /// Prices at the start of the current round.
    pub initial: Prices,
    /// Residual `f_out - f_in` fed to each update of the current round.
    pub residual_history: Vec<Prices>,
}

impl MultiplierState {
    pub fn new(alpha0: f64) -> Self {
        MultiplierState {
            alpha0,
            ..Default::default()
        }
    }

    pub fn step_size(alpha0: f64, t: usize) -> f64 {
        alpha0 / (1.0 + t as f64)
    }

    /// Zeroes every price.
    pub fn reset(&mut self) {
        self.lambda.clear();
        self.initial.clear();
        self.residual_history.clear();
        self.iteration = 0;
    }

    /// Starts a coordination round over `links`: keeps prices of links that
    /// are still coupled, zeroes new ones, drops the rest.
    pub fn begin_round(&mut self, links: &[LinkId], horizon: usize) {
        let mut next = Prices::new();
        for &l in links {
            let mut v = self.lambda.remove(&l).unwrap_or_default();
            v.resize(horizon, 0.0);
            next.insert(l, v);
        }
        self.lambda = next;
        self.initial = self.lambda.clone();
        self.iteration = 0;
        self.residual_history.clear();
    }

    /// `lambda += alpha_t * residual`, then advances `t`.
    pub fn update(&mut self, residuals: &Prices) {
        let a = Self::step_size(self.alpha0, self.iteration);
        for (l, r) in residuals {
            let lam = self.lambda.entry(*l).or_insert_with(|| vec![0.0; r.len()]);
            for (x, d) in lam.iter_mut().zip(r) {
                *x += a * d;
            }
        }
        self.residual_history.push(residuals.clone());
        self.iteration += 1;
    }

    /// Prices obtained by folding the update rule over `history` from
    /// `initial`.
    pub fn replay(initial: &Prices, alpha0: f64, history: &[Prices]) -> Prices {
        let mut s = MultiplierState::new(alpha0);
        s.lambda = initial.clone();
        for r in history {
            s.update(r);
        }
        s.lambda
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoordinationReport {
    /// Rounds of region solves.
    pub iterations: usize,
    /// `max |f_out - f_in|` of the final iterate.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Final-iterate residual per coupled link.
    pub link_residuals: BTreeMap<LinkId, f64>,
    /// Seconds spent solving each region, summed over rounds.
    pub region_wall_time: Vec<(RegionId, f64)>,
    pub converged: bool,
}

/// A responsive region ready to be optimized, in its own local frame.
#[derive(Clone, Debug)]
pub struct ResponsiveRegion {
    pub id: RegionId,
    pub model: RegionModel,
    pub state: SimState,
    pub ratios: TurningRatios,
    /// Inflows on imported links fixed by staged neighbours.
    pub fixed_inflows: BoundaryFlows,
    pub incumbent: RegionDecision,
}

#[derive(Clone, Debug)]
pub struct CoordinationOutcome {
    /// Indexed like the input regions.
    pub solutions: Vec<RegionSolution>,
    pub couplings: Vec<BoundaryCoupling>,
    pub multipliers: MultiplierState,
    pub report: CoordinationReport,
}

/// Dual decomposition over the coupling constraints `f_out = f_in`.
///
/// Each round solves every region with the current prices (in parallel when
/// configured), reads the exporter's predicted outflow and the importer's
/// assumed inflow on every coupling, stops if the largest gap is below
/// `tol`, and otherwise takes a subgradient step on the prices. Every round
/// warm-starts each region from its previous solution. Without couplings
/// this is a single plain optimization per region with no price update.
pub fn coordinate_responsive(
    regions: &[ResponsiveRegion],
    mut couplings: Vec<BoundaryCoupling>,
    mut multipliers: MultiplierState,
    optimizer: &OptimizerConfig,
    config: &CoordinationConfig,
) -> CoordinationOutcome {
    assert!(config.tol > 0.0, "tolerance must be positive");
    let horizon = optimizer.horizon;
    let links: Vec<LinkId> = couplings.iter().map(|c| c.link).collect();
    multipliers.alpha0 = config.alpha0;
    multipliers.begin_round(&links, horizon);

    let caps: Vec<BTreeMap<LinkId, f64>> = regions
        .iter()
        .map(|r| {
            couplings
                .iter()
                .filter(|c| c.importer == r.id)
                .map(|c| (c.link, c.cap))
                .collect()
        })
        .collect();
    let mut decisions: Vec<RegionDecision> = regions.iter().map(|r| r.incumbent.clone()).collect();
    let mut wall = vec![0.0; regions.len()];
    let mut report = CoordinationReport::default();
    let mut solutions = Vec::new();
    let slots: Vec<usize> = (0..regions.len()).collect();

    for _ in 0..config.max_iters.max(1) {
        let prices = multipliers.lambda.clone();
        let solved: Vec<(RegionSolution, f64)> = map_ordered(optimizer.execution, &slots, |&k| {
            let r = &regions[k];
            let problem = RegionProblem {
                model: &r.model,
                state: &r.state,
                ratios: &r.ratios,
                fixed_inflows: &r.fixed_inflows,
                free_inflow_caps: &caps[k],
                prices: &prices,
            };
            let start = Instant::now();
            let s = optimize_region(&problem, decisions[k].clone(), optimizer)
                .unwrap_or_else(|e| e.into_solution());
            (s, start.elapsed().as_secs_f64())
        });
        report.iterations += 1;
        solutions = Vec::with_capacity(solved.len());
        for (k, (s, secs)) in solved.into_iter().enumerate() {
            wall[k] += secs;
            decisions[k] = s.decision.clone();
            solutions.push(s);
        }

        let index: BTreeMap<RegionId, usize> =
            regions.iter().enumerate().map(|(k, r)| (r.id, k)).collect();
        let mut residuals = Prices::new();
        let mut worst: f64 = 0.0;
        report.link_residuals.clear();
        for c in &mut couplings {
            let exp = &solutions[index[&c.exporter]];
            let imp = &solutions[index[&c.importer]];
            c.f_out = exp.outcome.exports.get(&c.link).cloned().unwrap_or_else(|| vec![0.0; horizon]);
            c.f_in = imp
                .decision
                .free_inflows
                .get(&c.link)
                .cloned()
                .unwrap_or_else(|| vec![0.0; horizon]);
            let r = c.max_residual();
            worst = worst.max(r);
            report.link_residuals.insert(c.link, r);
            residuals.insert(c.link, c.residuals());
        }
        report.residual = worst;
        report.residual_history.push(worst);
        if worst < config.tol {
            report.converged = true;
            break;
        }
        multipliers.update(&residuals);
    }

    report.region_wall_time = regions.iter().zip(wall).map(|(r, w)| (r.id, w)).collect();
    CoordinationOutcome {
        solutions,
        couplings,
        multipliers,
        report,
    }
}
