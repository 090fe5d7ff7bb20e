use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::topology::{IntersectionId, LinkId, MovementId, Network};

/// Signal indication of one intersection for one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    /// Phase index (into the intersection's phase list) showing green.
    Green(usize),
    /// Lost time between phases.
    AllRed,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatioError {
    #[error("expected {expected} ratios, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("ratio of movement {movement} is {value}, outside [0, 1]")]
    OutOfRange { movement: MovementId, value: f64 },
    #[error("ratios leaving link {link} at intersection {intersection} sum to {sum}")]
    RowSum {
        link: LinkId,
        intersection: IntersectionId,
        sum: f64,
    },
}

/// Fraction of each link's arrivals joining each of its movements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningRatios(Vec<f64>);

impl TurningRatios {
    /// Uniform split over each link's movements.
    pub fn uniform(network: &Network) -> Self {
        let mut ratios = vec![0.0; network.movements().len()];
        for link in network.links() {
            let ms = network.movements_from(link.id);
            for m in ms {
                ratios[m.0] = 1.0 / ms.len() as f64;
            }
        }
        TurningRatios(ratios)
    }

    pub fn new(network: &Network, ratios: Vec<f64>) -> Result<Self, RatioError> {
        if ratios.len() != network.movements().len() {
            return Err(RatioError::LengthMismatch {
                expected: network.movements().len(),
                found: ratios.len(),
            });
        }
        for (i, &r) in ratios.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(RatioError::OutOfRange {
                    movement: MovementId(i),
                    value: r,
                });
            }
        }
        for link in network.links() {
            let ms = network.movements_from(link.id);
            if ms.is_empty() {
                continue;
            }
            let sum: f64 = ms.iter().map(|m| ratios[m.0]).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(RatioError::RowSum {
                    link: link.id,
                    intersection: network.owner(ms[0]),
                    sum,
                });
            }
        }
        Ok(TurningRatios(ratios))
    }

    /// Wraps ratios already known to be row-stochastic.
    pub(crate) fn from_raw(ratios: Vec<f64>) -> Self {
        TurningRatios(ratios)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn get(&self, m: MovementId) -> f64 {
        self.0[m.0]
    }
}

/// Mutable per-step simulation state.
///
/// Cell counts are the single source of truth for vehicle totals; the
/// stop-line queues of a link partition the contents of its last cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub(crate) step: u64,
    pub(crate) dt: f64,
    pub(crate) cells: Vec<f64>,
    pub(crate) queues: Vec<f64>,
    pub(crate) source_queues: Vec<f64>,
    pub(crate) active: Vec<Signal>,
    pub(crate) entered: CompensatedSum,
    pub(crate) exited: CompensatedSum,
    pub(crate) initial_total: f64,
    pub(crate) discharged: Vec<f64>,
    pub(crate) movement_outflow: Vec<f64>,
    pub(crate) link_inflow: Vec<f64>,
    pub(crate) link_speed: Vec<f64>,
}

impl SimState {
    pub fn empty(network: &Network, dt: f64) -> Self {
        assert!(dt > 0.0 && dt.is_finite(), "dt must be positive");
        SimState {
            step: 0,
            dt,
            cells: vec![0.0; network.cell_count()],
            queues: vec![0.0; network.movements().len()],
            source_queues: vec![0.0; network.sources().len()],
            active: vec![Signal::AllRed; network.intersections().len()],
            entered: CompensatedSum::default(),
            exited: CompensatedSum::default(),
            initial_total: 0.0,
            discharged: vec![0.0; network.movements().len()],
            movement_outflow: vec![0.0; network.movements().len()],
            link_inflow: vec![0.0; network.links().len()],
            link_speed: vec![1.0; network.links().len()],
        }
    }

    /// State with the given flat cell counts; each queued link's last cell is
    /// split into movement queues by `ratios`.
    pub fn with_cells(
        network: &Network,
        dt: f64,
        cells: Vec<f64>,
        ratios: &TurningRatios,
    ) -> Result<Self, String> {
        if cells.len() != network.cell_count() {
            return Err(format!(
                "expected {} cell counts, got {}",
                network.cell_count(),
                cells.len()
            ));
        }
        for (c, (&n, p)) in cells.iter().zip(network.cell_params()).enumerate() {
            if !(0.0..=p.n_max).contains(&n) {
                return Err(format!("cell {c} count {n} outside [0, {}]", p.n_max));
            }
        }
        let mut state = Self::empty(network, dt);
        for link in network.links() {
            let ms = network.movements_from(link.id);
            let last = cells[network.last_cell(link.id)];
            split_into(ms, ratios, last, &mut state.queues);
        }
        state.initial_total = cells.iter().sum();
        state.cells = cells;
        Ok(state)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Seconds since the start of the run.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn queue(&self, m: MovementId) -> f64 {
        self.queues[m.0]
    }

    pub fn source_queues(&self) -> &[f64] {
        &self.source_queues
    }

    /// Phase shown by each intersection during the last step.
    pub fn active_phases(&self) -> &[Signal] {
        &self.active
    }

    pub fn cumulative_entered(&self) -> f64 {
        self.entered.value()
    }

    pub fn cumulative_exited(&self) -> f64 {
        self.exited.value()
    }

    pub fn initial_total(&self) -> f64 {
        self.initial_total
    }

    /// Vehicles discharged by each movement since the start.
    pub fn discharged(&self) -> &[f64] {
        &self.discharged
    }

    /// Vehicles discharged by each movement during the last step.
    pub fn movement_outflow(&self) -> &[f64] {
        &self.movement_outflow
    }

    /// Vehicles that entered each link's first cell since the start.
    pub fn link_inflow(&self) -> &[f64] {
        &self.link_inflow
    }

    /// Flow each link moved during the last step as a fraction of what it
    /// could have sent unobstructed (red movements send nothing); 1 when it
    /// had nothing to send.
    pub fn link_speed(&self) -> &[f64] {
        &self.link_speed
    }

    pub fn link_vehicles(&self, network: &Network, link: LinkId) -> f64 {
        self.cells[network.cell_range(link)].iter().sum()
    }

    /// Link occupancy as a fraction of its holding capacity.
    pub fn link_density(&self, network: &Network, link: LinkId) -> f64 {
        (self.link_vehicles(network, link) / network.link_capacity(link)).clamp(0.0, 1.0)
    }

    /// Vehicles in cells plus those waiting at network entries.
    pub fn network_total(&self) -> f64 {
        let mut total = CompensatedSum::default();
        for &n in self.cells.iter().chain(&self.source_queues) {
            total.add(n);
        }
        total.value()
    }

    /// Vehicles held at stop lines and network entries; the integrand of
    /// queue delay.
    pub fn queued_vehicles(&self) -> f64 {
        self.queues.iter().sum::<f64>() + self.source_queues.iter().sum::<f64>()
    }

    /// `|total - (initial + entered - exited)|`.
    pub fn conservation_error(&self) -> f64 {
        let mut expected = CompensatedSum::default();
        expected.add(self.initial_total);
        expected.add(self.entered.value());
        expected.add(-self.exited.value());
        (self.network_total() - expected.value()).abs()
    }
}

/// Splits `amount` over `ms` by ratio; the last movement takes the remainder
/// so the parts sum to `amount`.
#[inline]
pub(crate) fn split_into(ms: &[MovementId], ratios: &TurningRatios, amount: f64, out: &mut [f64]) {
    let Some((last, rest)) = ms.split_last() else {
        return;
    };
    let mut assigned = 0.0;
    for m in rest {
        let part = ratios.get(*m) * amount;
        out[m.0] += part;
        assigned += part;
    }
    out[last.0] += (amount - assigned).max(0.0);
}
