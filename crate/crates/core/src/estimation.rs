//! Closed-loop branching-ratio estimation.
//!
//! Each intersection keeps a ring buffer of the last `W` per-cycle turning
//! counts. The estimate for a movement is its windowed count divided by the
//! windowed count of every movement leaving the same approach, so busy
//! cycles weigh more than near-empty ones.

use std::collections::VecDeque;

use thiserror::Error;

use crate::network::{IntersectionId, LinkId, MovementId, Network, TurningRatios};

pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("index mismatch: expected {expected} entries, got {found}")]
    IndexMismatch { expected: usize, found: usize },
    #[error("observation for intersection {0} does not exist")]
    UnknownIntersection(IntersectionId),
    #[error("negative turning count {count} for movement {movement}")]
    NegativeCount { movement: MovementId, count: f64 },
}

/// Per-movement discharged vehicles at one intersection over one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct TurningObservation {
    pub intersection: IntersectionId,
    pub cycle: u64,
    /// Ordered like the intersection's movement list.
    pub counts: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Approach {
    /// Positions within the intersection's movement list.
    slots: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct IntersectionEstimator {
    intersection: IntersectionId,
    movements: Vec<MovementId>,
    approaches: Vec<Approach>,
    ratios: Vec<f64>,
    window: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl IntersectionEstimator {
    fn new(network: &Network, node: IntersectionId, capacity: usize) -> Self {
        let movements = network.intersection(node).movements.clone();
        let mut approaches: Vec<(LinkId, Approach)> = Vec::new();
        for (slot, m) in movements.iter().enumerate() {
            let from = network.movement(*m).from_link;
            match approaches.iter_mut().find(|(l, _)| *l == from) {
                Some((_, a)) => a.slots.push(slot),
                None => approaches.push((from, Approach { slots: vec![slot] })),
            }
        }
        let mut ratios = vec![0.0; movements.len()];
        for (_, a) in &approaches {
            for &s in &a.slots {
                ratios[s] = 1.0 / a.slots.len() as f64;
            }
        }
        IntersectionEstimator {
            intersection: node,
            movements,
            approaches: approaches.into_iter().map(|(_, a)| a).collect(),
            ratios,
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn intersection(&self) -> IntersectionId {
        self.intersection
    }

    /// Current estimates, ordered like the intersection's movements.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn record_cycle(&mut self, observation: &TurningObservation) -> Result<(), EstimationError> {
        if observation.counts.len() != self.movements.len() {
            return Err(EstimationError::IndexMismatch {
                expected: self.movements.len(),
                found: observation.counts.len(),
            });
        }
        if let Some((i, &c)) = observation
            .counts
            .iter()
            .enumerate()
            .find(|(_, c)| !(**c >= 0.0 && c.is_finite()))
        {
            return Err(EstimationError::NegativeCount {
                movement: self.movements[i],
                count: c,
            });
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(observation.counts.clone());

        let mut totals = vec![0.0; self.movements.len()];
        for counts in &self.window {
            for (t, c) in totals.iter_mut().zip(counts) {
                *t += c;
            }
        }
        for approach in &self.approaches {
            let denom: f64 = approach.slots.iter().map(|&s| totals[s]).sum();
            if denom > 0.0 {
                for &s in &approach.slots {
                    self.ratios[s] = totals[s] / denom;
                }
            }
        }
        Ok(())
    }
}

/// Branching-ratio estimates for every intersection.
#[derive(Clone, Debug)]
pub struct BranchingEstimate {
    estimators: Vec<IntersectionEstimator>,
    movement_count: usize,
}

impl BranchingEstimate {
    /// Cold start: uniform over each approach's movements.
    pub fn new(network: &Network, window: usize) -> Self {
        assert!(window >= 1, "moving-average window must hold at least one cycle");
        BranchingEstimate {
            estimators: network
                .intersections()
                .iter()
                .map(|i| IntersectionEstimator::new(network, i.id, window))
                .collect(),
            movement_count: network.movements().len(),
        }
    }

    pub fn estimators(&self) -> &[IntersectionEstimator] {
        &self.estimators
    }

    pub fn record_cycle(&mut self, observation: &TurningObservation) -> Result<(), EstimationError> {
        self.estimators
            .get_mut(observation.intersection.0)
            .ok_or(EstimationError::UnknownIntersection(observation.intersection))?
            .record_cycle(observation)
    }

    /// Current estimates as a network-wide ratio table.
    pub fn ratios(&self) -> TurningRatios {
        let mut out = vec![0.0; self.movement_count];
        for est in &self.estimators {
            for (m, r) in est.movements.iter().zip(&est.ratios) {
                out[m.0] = *r;
            }
        }
        TurningRatios::from_raw(out)
    }
}

/// Largest absolute difference between two ratio tables.
pub fn estimate_error(
    estimate: &TurningRatios,
    truth: &TurningRatios,
) -> Result<f64, EstimationError> {
    let (a, b) = (estimate.as_slice(), truth.as_slice());
    if a.len() != b.len() {
        return Err(EstimationError::IndexMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}
