//! Signal plans and the four control strategies.

mod optimize;
mod plan;
mod region;
mod rollout;
mod scats;
mod strategy;

pub use optimize::{
    optimize_region, BudgetExhausted, OptimizerConfig, RegionDecision, RegionProblem,
    RegionSolution,
};
pub use plan::{
    decide_all, pretimed_decide, split_candidates, ControlDecision, IntersectionPlan, PlanError,
    DEFAULT_G_MIN, DEFAULT_G_STEP,
};
pub use region::{Entry, RegionModel};
pub use rollout::{rollout_bounded, rollout_objective, steps_per_cycle, BoundaryFlows, Prices, RolloutOutcome};
pub use scats::{degrees_of_saturation, phase_saturation_flows, scats_like_update};
pub use strategy::{hybrid_assign, strategy_for, StrategyKind, UnknownStrategy};
