use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::LinkId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("prediction needs at least one observation")]
    EmptyHistory,
    #[error("speed and density predictors disagree on horizon ({speed} vs {density})")]
    HorizonMismatch { speed: usize, density: usize },
}

/// Per-link traffic state proxies, both normalized to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkObservation {
    pub link: LinkId,
    pub step: u64,
    /// Fraction of free-flow speed.
    pub speed: f64,
    /// Occupancy over holding capacity.
    pub density: f64,
}

/// Forecasts the next `horizon` values of a [0, 1]-valued series.
pub trait Predictor: Send + Sync {
    fn horizon(&self) -> usize;

    /// Forecasts, each clamped to [0, 1].
    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>, PredictError>;
}

/// Exponential smoothing; every horizon gets the smoothed level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPredictor {
    pub alpha: f64,
    pub horizon: usize,
}

impl SmoothingPredictor {
    pub fn new(alpha: f64, horizon: usize) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "smoothing factor must be in (0, 1]");
        assert!(horizon >= 1);
        SmoothingPredictor { alpha, horizon }
    }
}

impl Predictor for SmoothingPredictor {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>, PredictError> {
        let (first, rest) = history.split_first().ok_or(PredictError::EmptyHistory)?;
        let level = rest
            .iter()
            .fold(*first, |level, x| self.alpha * x + (1.0 - self.alpha) * level);
        Ok(vec![level.clamp(0.0, 1.0); self.horizon])
    }
}

/// Speed and density forecasts for one link, as `(speed, density)` pairs.
pub fn predict(
    speed: &dyn Predictor,
    density: &dyn Predictor,
    history: &[LinkObservation],
) -> Result<Vec<(f64, f64)>, PredictError> {
    if history.is_empty() {
        return Err(PredictError::EmptyHistory);
    }
    if speed.horizon() != density.horizon() {
        return Err(PredictError::HorizonMismatch {
            speed: speed.horizon(),
            density: density.horizon(),
        });
    }
    let v: Vec<f64> = history.iter().map(|o| o.speed).collect();
    let d: Vec<f64> = history.iter().map(|o| o.density).collect();
    let vs = speed.forecast(&v)?;
    let ds = density.forecast(&d)?;
    Ok(vs.into_iter().zip(ds).collect())
}
