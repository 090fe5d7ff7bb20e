use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{IntersectionId, Signal};

pub const DEFAULT_G_MIN: f64 = 5.0;
pub const DEFAULT_G_STEP: f64 = 5.0;

const PLAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan has no phases")]
    NoPhases,
    #[error("cycle length must be positive, got {0}")]
    BadCycle(f64),
    #[error("greens {greens} plus lost time {lost} do not fill cycle {cycle}")]
    CycleMismatch { greens: f64, lost: f64, cycle: f64 },
    #[error("green {green} of phase {phase} outside [{min}, {max}]")]
    GreenOutOfBounds {
        phase: usize,
        green: f64,
        min: f64,
        max: f64,
    },
    #[error("minimum greens {needed} exceed the green budget {budget}")]
    Infeasible { needed: f64, budget: f64 },
}

/// Fixed-time plan of one intersection: phases in order, each followed by
/// `lost_time` seconds of all-red.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPlan {
    pub cycle: f64,
    pub greens: Vec<f64>,
    pub offset: f64,
    pub lost_time: f64,
}

impl IntersectionPlan {
    pub fn new(
        cycle: f64,
        greens: Vec<f64>,
        offset: f64,
        lost_time: f64,
        g_min: f64,
    ) -> Result<Self, PlanError> {
        let plan = IntersectionPlan {
            cycle,
            greens,
            offset,
            lost_time,
        };
        plan.validate(g_min)?;
        Ok(plan)
    }

    /// Equal split of the green budget.
    pub fn uniform(
        cycle: f64,
        phases: usize,
        offset: f64,
        lost_time: f64,
        g_min: f64,
    ) -> Result<Self, PlanError> {
        if phases == 0 {
            return Err(PlanError::NoPhases);
        }
        let budget = cycle - phases as f64 * lost_time;
        Self::new(
            cycle,
            vec![budget / phases as f64; phases],
            offset,
            lost_time,
            g_min,
        )
    }

    pub fn phase_count(&self) -> usize {
        self.greens.len()
    }

    /// Cycle minus total lost time.
    pub fn green_budget(&self) -> f64 {
        self.cycle - self.greens.len() as f64 * self.lost_time
    }

    /// Largest green any phase may take when every other phase gets `g_min`.
    pub fn g_max(&self, g_min: f64) -> f64 {
        self.green_budget() - (self.greens.len() as f64 - 1.0) * g_min
    }

    pub fn validate(&self, g_min: f64) -> Result<(), PlanError> {
        if self.greens.is_empty() {
            return Err(PlanError::NoPhases);
        }
        if !(self.cycle > 0.0 && self.cycle.is_finite()) {
            return Err(PlanError::BadCycle(self.cycle));
        }
        let budget = self.green_budget();
        let needed = g_min * self.greens.len() as f64;
        if needed > budget + PLAN_TOL {
            return Err(PlanError::Infeasible { needed, budget });
        }
        let total: f64 = self.greens.iter().sum();
        if (total - budget).abs() > PLAN_TOL * self.cycle.max(1.0) {
            return Err(PlanError::CycleMismatch {
                greens: total,
                lost: self.lost_time * self.greens.len() as f64,
                cycle: self.cycle,
            });
        }
        let g_max = self.g_max(g_min);
        for (phase, &green) in self.greens.iter().enumerate() {
            if green < g_min - PLAN_TOL || green > g_max + PLAN_TOL {
                return Err(PlanError::GreenOutOfBounds {
                    phase,
                    green,
                    min: g_min,
                    max: g_max,
                });
            }
        }
        Ok(())
    }

    /// Indication at absolute time `t` seconds.
    pub fn phase_at(&self, t: f64) -> Signal {
        let pos = (t - self.offset).rem_euclid(self.cycle);
        let mut edge = 0.0;
        for (p, &g) in self.greens.iter().enumerate() {
            edge += g;
            if pos < edge {
                return Signal::Green(p);
            }
            edge += self.lost_time;
            if pos < edge {
                return Signal::AllRed;
            }
        }
        // Only reachable through rounding at the very end of the cycle.
        Signal::AllRed
    }
}

/// Indication at time `t` under a fixed-time plan.
pub fn pretimed_decide(plan: &IntersectionPlan, t: f64) -> Signal {
    plan.phase_at(t)
}

/// Per-step indications of one intersection over a control cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub intersection: IntersectionId,
    pub start_step: u64,
    pub signals: Vec<Signal>,
}

impl ControlDecision {
    pub fn from_plan(
        intersection: IntersectionId,
        plan: &IntersectionPlan,
        start_step: u64,
        steps: usize,
        dt: f64,
    ) -> Self {
        ControlDecision {
            intersection,
            start_step,
            signals: (0..steps)
                .map(|k| plan.phase_at((start_step + k as u64) as f64 * dt))
                .collect(),
        }
    }
}

/// Decisions for every intersection over the next `steps` steps.
pub fn decide_all(plans: &[IntersectionPlan], start_step: u64, steps: usize, dt: f64) -> Vec<ControlDecision> {
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| ControlDecision::from_plan(IntersectionId(i), p, start_step, steps, dt))
        .collect()
}

/// Every split of `budget` over `phases` phases on the `g_step` grid above
/// `g_min`, in lexicographic order. All but the last phase lie on the grid;
/// the last takes the remainder, which is at least `g_min`.
pub fn split_candidates(phases: usize, budget: f64, g_min: f64, g_step: f64) -> Vec<Vec<f64>> {
    assert!(phases >= 1 && g_step > 0.0);
    let slack = budget - phases as f64 * g_min;
    if slack < -PLAN_TOL {
        return Vec::new();
    }
    let units = ((slack + PLAN_TOL) / g_step).floor() as usize;
    let mut out = Vec::new();
    let mut current = vec![0usize; phases - 1];
    fn rec(
        depth: usize,
        left: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
        budget: f64,
        g_min: f64,
        g_step: f64,
    ) {
        if depth == current.len() {
            let mut split: Vec<f64> = current.iter().map(|&k| g_min + k as f64 * g_step).collect();
            let used: f64 = split.iter().sum();
            split.push(budget - used);
            out.push(split);
            return;
        }
        for k in 0..=left {
            current[depth] = k;
            rec(depth + 1, left - k, current, out, budget, g_min, g_step);
        }
    }
    rec(0, units, &mut current, &mut out, budget, g_min, g_step);
    out
}
