//! Network topology and discrete-time macroscopic dynamics.

pub mod ctm;
mod demand;
mod state;
mod step;
mod topology;

pub use ctm::{intersection_outflow, receiving_capacity, sending_capacity};
pub use demand::DemandProfile;
pub use state::{CompensatedSum, RatioError, Signal, SimState, TurningRatios};
pub use step::{advance, step, total_queue_delay, StepScratch};
pub use topology::{
    CellParams, Intersection, IntersectionDef, IntersectionId, Link, LinkId, Movement,
    MovementId, Network, Phase, Source, TopologyError,
};
