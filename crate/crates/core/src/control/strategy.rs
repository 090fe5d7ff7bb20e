use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::congestion::{CongestionLevel, Partition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    PreTimed,
    #[serde(rename = "scats")]
    ScatsLike,
    Optimized,
    Hybrid,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::PreTimed,
        StrategyKind::ScatsLike,
        StrategyKind::Optimized,
        StrategyKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::PreTimed => "pretimed",
            StrategyKind::ScatsLike => "scats",
            StrategyKind::Optimized => "optimized",
            StrategyKind::Hybrid => "hybrid",
        }
    }

    /// Whether regions under this strategy take part in the multiplier
    /// coordination rather than being staged.
    pub fn is_responsive(self) -> bool {
        self == StrategyKind::Optimized
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unknown strategy `{0}` (expected pretimed, scats, optimized or hybrid)")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pretimed" | "pre-timed" | "fixed" => Ok(StrategyKind::PreTimed),
            "scats" | "scats-like" | "scatslike" => Ok(StrategyKind::ScatsLike),
            "optimized" | "optimised" => Ok(StrategyKind::Optimized),
            "hybrid" => Ok(StrategyKind::Hybrid),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

/// Controller for a region of the given level.
pub fn strategy_for(level: CongestionLevel) -> StrategyKind {
    match level {
        CongestionLevel::Congested => StrategyKind::Optimized,
        CongestionLevel::Moderate => StrategyKind::ScatsLike,
        CongestionLevel::Free => StrategyKind::PreTimed,
    }
}

/// Per-region controller, indexed like `partition.regions`.
pub fn hybrid_assign(partition: &Partition) -> Vec<StrategyKind> {
    partition.regions.iter().map(|r| strategy_for(r.level)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::{Region, RegionId};

    fn partition(levels: &[CongestionLevel]) -> Partition {
        Partition {
            regions: levels
                .iter()
                .enumerate()
                .map(|(i, &level)| Region {
                    id: RegionId(i),
                    links: vec![],
                    intersections: vec![],
                    level,
                })
                .collect(),
            boundary_links: vec![],
            link_region: vec![],
            intersection_region: vec![],
        }
    }

    #[test]
    fn level_rule() {
        use CongestionLevel::*;
        assert_eq!(hybrid_assign(&partition(&[Free, Free])), vec![StrategyKind::PreTimed; 2]);
        assert_eq!(
            hybrid_assign(&partition(&[Congested; 3])),
            vec![StrategyKind::Optimized; 3]
        );
        assert_eq!(
            hybrid_assign(&partition(&[Free, Congested, Moderate])),
            vec![StrategyKind::PreTimed, StrategyKind::Optimized, StrategyKind::ScatsLike]
        );
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("max-pressure".parse::<StrategyKind>().is_err());
    }
}
