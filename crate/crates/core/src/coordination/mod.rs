//! Distributed control layer: fixed-plan regions are simulated first and
//! their boundary outflows become inputs of optimized regions, whose shared
//! boundaries are reconciled by Lagrangian prices.

mod cycle;
mod dual;
mod staging;

pub use cycle::{run_control_cycle, CycleInputs, CycleOutput};
pub use dual::{
    coordinate_responsive, BoundaryCoupling, CoordinationConfig, CoordinationOutcome,
    CoordinationReport, MultiplierState, ResponsiveRegion,
};
pub use staging::stage_pretimed;
