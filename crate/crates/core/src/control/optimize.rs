use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::{split_candidates, IntersectionPlan, DEFAULT_G_MIN, DEFAULT_G_STEP};
use super::region::RegionModel;
use super::rollout::{rollout_bounded, rollout_objective, BoundaryFlows, Prices, RolloutOutcome};
use crate::network::{LinkId, SimState, TurningRatios};
use crate::par::{map_ordered, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Rollout horizon in cycles.
    pub horizon: usize,
    pub g_min: f64,
    pub g_step: f64,
    /// Maximum rollouts per region solve, the incumbent's included.
    pub budget: usize,
    /// Grid step of free boundary inflows, vehicles per cycle.
    pub inflow_step: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            horizon: 2,
            g_min: DEFAULT_G_MIN,
            g_step: DEFAULT_G_STEP,
            budget: 5_000,
            inflow_step: 1.0,
            execution: Execution::default(),
        }
    }
}

/// One region's optimization inputs, all in the region model's local frame
/// except boundary maps, which are keyed by global link id.
#[derive(Clone, Copy, Debug)]
pub struct RegionProblem<'a> {
    pub model: &'a RegionModel,
    pub state: &'a SimState,
    pub ratios: &'a TurningRatios,
    /// Inflows on imported links that are not decision variables.
    pub fixed_inflows: &'a BoundaryFlows,
    /// Imported links whose per-cycle inflow is a decision variable, with
    /// the largest value on the grid (vehicles per cycle).
    pub free_inflow_caps: &'a BTreeMap<LinkId, f64>,
    pub prices: &'a Prices,
}

/// Decision variables of a region: a plan per local intersection plus the
/// assumed inflow of every free imported link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDecision {
    pub plans: Vec<IntersectionPlan>,
    pub free_inflows: BoundaryFlows,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSolution {
    pub decision: RegionDecision,
    pub outcome: RolloutOutcome,
    pub rollouts: usize,
    pub sweeps: usize,
}

/// The rollout budget ran out; `incumbent` is the best decision found.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("rollout budget exhausted after {} rollouts", incumbent.rollouts)]
pub struct BudgetExhausted {
    pub incumbent: RegionSolution,
}

impl BudgetExhausted {
    pub fn into_solution(self) -> RegionSolution {
        self.incumbent
    }
}

impl<'a> RegionProblem<'a> {
    /// Fixed inflows overlaid with the decision's free ones.
    pub fn inflows(&self, decision: &RegionDecision) -> BoundaryFlows {
        let mut all = self.fixed_inflows.clone();
        for (l, v) in &decision.free_inflows {
            all.insert(*l, v.clone());
        }
        all
    }

    pub fn evaluate(&self, decision: &RegionDecision, horizon: usize) -> RolloutOutcome {
        rollout_objective(
            self.model,
            self.state,
            self.ratios,
            &decision.plans,
            horizon,
            &self.inflows(decision),
            self.prices,
        )
    }

    /// [`Self::evaluate`], or `None` once the objective surely exceeds
    /// `bound`.
    pub fn evaluate_bounded(&self, decision: &RegionDecision, horizon: usize, bound: f64) -> Option<RolloutOutcome> {
        rollout_bounded(
            self.model,
            self.state,
            self.ratios,
            &decision.plans,
            horizon,
            &self.inflows(decision),
            self.prices,
            bound,
        )
    }

    /// Grid of values each free inflow may take.
    fn inflow_grid(&self, link: LinkId, step: f64) -> Vec<f64> {
        let cap = self.free_inflow_caps[&link];
        let n = ((cap + 1e-9) / step).floor() as usize;
        (0..=n).map(|k| k as f64 * step).collect()
    }
}

/// A single coordinate of the search.
#[derive(Clone, Copy, Debug)]
enum Coordinate {
    Split(usize),
    Inflow(LinkId, usize),
}

/// Cyclic coordinate descent over green splits (then free inflows).
///
/// Each coordinate enumerates its whole grid with everything else fixed and
/// moves only on strict improvement; among equally good improving values the
/// first in grid order (lexicographically smallest) wins. Sweeps repeat
/// until one makes no move. The result never scores worse than `incumbent`.
pub fn optimize_region(
    problem: &RegionProblem<'_>,
    incumbent: RegionDecision,
    config: &OptimizerConfig,
) -> Result<RegionSolution, BudgetExhausted> {
    let net = problem.model.network();
    assert_eq!(incumbent.plans.len(), net.intersections().len());
    let mut decision = incumbent;
    for &l in problem.free_inflow_caps.keys() {
        decision
            .free_inflows
            .entry(l)
            .or_insert_with(|| vec![0.0; config.horizon]);
    }

    let mut coords: Vec<Coordinate> = (0..decision.plans.len()).map(Coordinate::Split).collect();
    for &l in problem.free_inflow_caps.keys() {
        coords.extend((0..config.horizon).map(|c| Coordinate::Inflow(l, c)));
    }
    let split_grids: Vec<Vec<Vec<f64>>> = decision
        .plans
        .iter()
        .map(|p| split_candidates(p.phase_count(), p.green_budget(), config.g_min, config.g_step))
        .collect();
    let inflow_grids: BTreeMap<LinkId, Vec<f64>> = problem
        .free_inflow_caps
        .keys()
        .map(|&l| (l, problem.inflow_grid(l, config.inflow_step)))
        .collect();

    let mut best = problem.evaluate(&decision, config.horizon);
    let mut rollouts = 1;
    let mut sweeps = 0;
    let exhausted = |decision, outcome, rollouts, sweeps| BudgetExhausted {
        incumbent: RegionSolution {
            decision,
            outcome,
            rollouts,
            sweeps,
        },
    };

    loop {
        sweeps += 1;
        let mut moved = false;
        for &coord in &coords {
            let candidates: Vec<RegionDecision> = match coord {
                Coordinate::Split(i) => split_grids[i]
                    .iter()
                    .filter(|g| **g != decision.plans[i].greens)
                    .map(|g| {
                        let mut d = decision.clone();
                        d.plans[i].greens = g.clone();
                        d
                    })
                    .collect(),
                Coordinate::Inflow(l, c) => inflow_grids[&l]
                    .iter()
                    .filter(|&&v| v != decision.free_inflows[&l][c])
                    .map(|&v| {
                        let mut d = decision.clone();
                        d.free_inflows.get_mut(&l).expect("free inflow")[c] = v;
                        d
                    })
                    .collect(),
            };
            let remaining = config.budget.saturating_sub(rollouts);
            let truncated = candidates.len() > remaining;
            let candidates = &candidates[..candidates.len().min(remaining)];
            // Rollouts that cannot beat the incumbent stop early; they could
            // never be picked, so the outcome does not depend on it.
            let bar = best.objective;
            let scored = map_ordered(config.execution, candidates, |d| {
                problem.evaluate_bounded(d, config.horizon, bar)
            });
            rollouts += scored.len();
            let mut pick: Option<usize> = None;
            for (k, o) in scored.iter().enumerate() {
                let Some(o) = o else { continue };
                let bar = pick.map_or(best.objective, |j| scored[j].as_ref().expect("picked").objective);
                if o.objective < bar {
                    pick = Some(k);
                }
            }
            if let Some(k) = pick {
                decision = candidates[k].clone();
                best = scored[k].clone().expect("picked");
                moved = true;
            }
            if truncated {
                return Err(exhausted(decision, best, rollouts, sweeps));
            }
        }
        if !moved {
            return Ok(RegionSolution {
                decision,
                outcome: best,
                rollouts,
                sweeps,
            });
        }
    }
}
