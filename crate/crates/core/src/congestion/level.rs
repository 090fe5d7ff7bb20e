use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CongestionLevel {
    Free = 0,
    Moderate = 1,
    Congested = 2,
}

impl CongestionLevel {
    pub fn code(self) -> char {
        match self {
            CongestionLevel::Free => 'F',
            CongestionLevel::Moderate => 'M',
            CongestionLevel::Congested => 'C',
        }
    }
}

impl fmt::Display for CongestionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CongestionLevel::Free => "free",
            CongestionLevel::Moderate => "moderate",
            CongestionLevel::Congested => "congested",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid thresholds: {0}")]
pub struct InvalidThresholds(pub String);

/// Two-sided density and speed thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholds", into = "RawThresholds")]
pub struct Thresholds {
    density_low: f64,
    density_high: f64,
    speed_low: f64,
    speed_high: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    density_low: f64,
    density_high: f64,
    speed_low: f64,
    speed_high: f64,
}

impl TryFrom<RawThresholds> for Thresholds {
    type Error = InvalidThresholds;

    fn try_from(r: RawThresholds) -> Result<Self, Self::Error> {
        Thresholds::new(r.density_low, r.density_high, r.speed_low, r.speed_high)
    }
}

impl From<Thresholds> for RawThresholds {
    fn from(t: Thresholds) -> Self {
        RawThresholds {
            density_low: t.density_low,
            density_high: t.density_high,
            speed_low: t.speed_low,
            speed_high: t.speed_high,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            density_low: 0.2,
            density_high: 0.5,
            speed_low: 0.3,
            speed_high: 0.6,
        }
    }
}

impl Thresholds {
    pub fn new(
        density_low: f64,
        density_high: f64,
        speed_low: f64,
        speed_high: f64,
    ) -> Result<Self, InvalidThresholds> {
        if !(density_low < density_high) {
            return Err(InvalidThresholds(format!(
                "density_low {density_low} must be below density_high {density_high}"
            )));
        }
        if !(speed_low < speed_high) {
            return Err(InvalidThresholds(format!(
                "speed_low {speed_low} must be below speed_high {speed_high}"
            )));
        }
        Ok(Thresholds {
            density_low,
            density_high,
            speed_low,
            speed_high,
        })
    }
}

/// Congested if dense or slow, free if sparse and fast, moderate otherwise.
pub fn identify_level(speed: f64, density: f64, t: &Thresholds) -> CongestionLevel {
    if density > t.density_high || speed < t.speed_low {
        CongestionLevel::Congested
    } else if density < t.density_low && speed > t.speed_high {
        CongestionLevel::Free
    } else {
        CongestionLevel::Moderate
    }
}
