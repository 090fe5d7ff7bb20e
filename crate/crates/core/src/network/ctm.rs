//! Per-boundary flow bounds of the cell-transmission model and the
//! signal-gated intersection discharge.

use super::topology::CellParams;

/// Vehicles a cell can emit in one step: `min(n, Q_max)`.
#[inline]
pub fn sending_capacity(cell_count: f64, params: &CellParams) -> f64 {
    debug_assert!(
        (0.0..=params.n_max).contains(&cell_count),
        "cell count {cell_count} outside [0, {}]",
        params.n_max
    );
    cell_count.min(params.q_max)
}

/// Vehicles a cell can absorb in one step: `min(Q_max, delta * (N_max - n))`.
#[inline]
pub fn receiving_capacity(cell_count: f64, params: &CellParams) -> f64 {
    debug_assert!(
        (0.0..=params.n_max).contains(&cell_count),
        "cell count {cell_count} outside [0, {}]",
        params.n_max
    );
    params
        .q_max
        .min(params.delta * (params.n_max - cell_count))
        .max(0.0)
}

/// Movement discharge in one step.
///
/// Zero under red; otherwise the smallest of what is waiting or arriving,
/// the saturation-flow bound over the step, and the downstream space granted
/// to this movement. Piecewise linear in the queue.
#[inline]
pub fn intersection_outflow(
    queue: f64,
    arrivals: f64,
    green: bool,
    saturation_per_step: f64,
    downstream_share: f64,
) -> f64 {
    debug_assert!(queue >= 0.0 && arrivals >= 0.0 && downstream_share >= 0.0);
    if !green {
        return 0.0;
    }
    (queue + arrivals).min(saturation_per_step).min(downstream_share)
}
