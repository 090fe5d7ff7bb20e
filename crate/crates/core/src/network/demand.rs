use serde::{Deserialize, Serialize};

/// Piecewise-constant inflow rate in vehicles per second.
///
/// Segment `i` starts at `breakpoints[i].0` seconds and holds rate
/// `breakpoints[i].1` until the next breakpoint. With a period the profile
/// repeats every `period` seconds; without one the last rate holds forever.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct DemandProfile {
    breakpoints: Vec<(f64, f64)>,
    period: Option<f64>,
    #[serde(skip)]
    period_volume: f64,
}

impl DemandProfile {
    pub fn new(breakpoints: Vec<(f64, f64)>, period: Option<f64>) -> Result<Self, String> {
        let Some(&(t0, _)) = breakpoints.first() else {
            return Err("demand profile has no breakpoints".into());
        };
        if t0 != 0.0 {
            return Err(format!("first breakpoint must be at t=0, got {t0}"));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(format!(
                    "breakpoints must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                ));
            }
        }
        if let Some(&(t, r)) = breakpoints.iter().find(|(t, r)| !(t.is_finite() && r.is_finite() && *r >= 0.0)) {
            return Err(format!("invalid breakpoint ({t}, {r}): rates must be finite and >= 0"));
        }
        if let Some(p) = period {
            let last = breakpoints.last().unwrap().0;
            if !(p.is_finite() && p > last) {
                return Err(format!("period {p} must exceed the last breakpoint {last}"));
            }
        }
        let mut profile = DemandProfile {
            breakpoints,
            period,
            period_volume: 0.0,
        };
        if let Some(p) = period {
            profile.period_volume = profile.volume_within(p);
        }
        Ok(profile)
    }

    pub fn constant(rate: f64) -> Self {
        Self::new(vec![(0.0, rate)], None).expect("constant rate must be finite and >= 0")
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let t = match self.period {
            Some(p) => t.rem_euclid(p),
            None => t,
        };
        let idx = self.breakpoints.partition_point(|(b, _)| *b <= t);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    /// Vehicles arriving in `[t0, t1)`.
    pub fn vehicles_between(&self, t0: f64, t1: f64) -> f64 {
        debug_assert!(t1 >= t0);
        (self.cumulative(t1) - self.cumulative(t0)).max(0.0)
    }

    fn cumulative(&self, t: f64) -> f64 {
        match self.period {
            Some(p) => {
                let whole = (t / p).floor();
                whole * self.period_volume + self.volume_within(t - whole * p)
            }
            None => self.volume_within(t),
        }
    }

    // Integral over [0, t] without periodic wrap.
    fn volume_within(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for (i, &(start, rate)) in self.breakpoints.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = self
                .breakpoints
                .get(i + 1)
                .map_or(t, |(next, _)| next.min(t));
            total += rate * (end - start);
        }
        total
    }

}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    breakpoints: Vec<(f64, f64)>,
    period: Option<f64>,
}

impl TryFrom<RawProfile> for DemandProfile {
    type Error = String;

    fn try_from(r: RawProfile) -> Result<Self, String> {
        DemandProfile::new(r.breakpoints, r.period)
    }
}
