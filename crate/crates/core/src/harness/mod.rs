//! Scenario files, the closed-loop experiment runner and metrics output.

mod benchmark;
mod experiment;
mod metrics;
mod scenario;

pub use benchmark::{benchmark_control, benchmark_grid, BenchmarkOptions};
pub use experiment::{
    demand_realization, partition_at, run_experiment, CycleRecord, MetricsTrace,
};
pub use metrics::{
    format_float, write_metrics, write_metrics_to, write_summary, write_summary_to, FIXED_COLUMNS,
    SUMMARY_COLUMNS,
};
pub use scenario::{
    load_scenario, BranchingSpec, CellSpec, ControlConfig, DemandSpec, IntersectionSpec, LinkSpec,
    MovementSpec, NetworkSpec, PlanSpec, PredictorConfig, Scenario, ScenarioError, ScenarioFile,
    SignalSpec, SourceSpec,
};
