//! Congestion forecasting, level identification and link clustering.

mod level;
mod partition;
mod predictor;
mod recurrent;

pub use level::{identify_level, CongestionLevel, InvalidThresholds, Thresholds};
pub use partition::{
    cluster_links, regions_by_intersection, BoundaryLink, Partition, Region, RegionId,
};
pub use predictor::{predict, LinkObservation, PredictError, Predictor, SmoothingPredictor};
pub use recurrent::{
    fit, train_recurrent, RecurrentPredictor, TrainConfig, TrainError, TrainingSummary,
    DEFAULT_HIDDEN, DEFAULT_TRUNCATION, MIN_SERIES_LEN,
};
