use super::ctm::{intersection_outflow, receiving_capacity, sending_capacity};
use super::state::{split_into, Signal, SimState, TurningRatios};
use super::topology::Network;

/// Reusable buffers for [`advance`]. After a call they describe the step
/// that was just taken, which the invariant suites inspect.
#[derive(Clone, Debug, Default)]
pub struct StepScratch {
    /// Per cell, from the pre-step counts.
    pub sending: Vec<f64>,
    /// Per cell, from the pre-step counts.
    pub receiving: Vec<f64>,
    /// Per cell, realized inflow during the step.
    pub inflow: Vec<f64>,
    /// Per cell, realized outflow during the step.
    pub outflow: Vec<f64>,
    /// Per movement, arrivals available for discharge within the step.
    pub arrivals: Vec<f64>,
    /// Per movement, gated discharge demand `min(q + a, s*dt)` (0 on red).
    pub demand: Vec<f64>,
    /// Per movement, downstream space granted.
    pub share: Vec<f64>,
    green: Vec<bool>,
}

impl StepScratch {
    pub fn new(network: &Network) -> Self {
        let mut s = StepScratch::default();
        s.resize(network);
        s
    }

    /// Zeroes the buffers, reallocating only if the network changed size.
    fn resize(&mut self, network: &Network) {
        let cells = network.cell_count();
        let moves = network.movements().len();
        for v in [
            &mut self.sending,
            &mut self.receiving,
            &mut self.inflow,
            &mut self.outflow,
        ] {
            zero(v, cells);
        }
        for v in [&mut self.arrivals, &mut self.demand, &mut self.share] {
            zero(v, moves);
        }
        if self.green.len() == moves {
            self.green.fill(false);
        } else {
            self.green = vec![false; moves];
        }
    }
}

fn zero(v: &mut Vec<f64>, len: usize) {
    if v.len() == len {
        v.fill(0.0);
    } else {
        *v = vec![0.0; len];
    }
}

/// Advances `state` by one step in place.
///
/// `arrivals[s]` is the number of vehicles reaching source `s` during the
/// step. All flows are computed from the pre-step state: intra-link
/// transfers and source injections first, then signal-gated intersection
/// discharge with proportional merging into each downstream first cell,
/// then free discharge at sinks.
pub fn advance(
    network: &Network,
    state: &mut SimState,
    signals: &[Signal],
    ratios: &TurningRatios,
    arrivals: &[f64],
    scratch: &mut StepScratch,
) {
    assert_eq!(
        signals.len(),
        network.intersections().len(),
        "exactly one signal per intersection"
    );
    debug_assert_eq!(arrivals.len(), network.sources().len());
    scratch.resize(network);
    let dt = state.dt;
    let params = network.cell_params();

    for ((n, p), (s, r)) in state
        .cells
        .iter()
        .zip(params)
        .zip(scratch.sending.iter_mut().zip(scratch.receiving.iter_mut()))
    {
        *s = sending_capacity(*n, p);
        *r = receiving_capacity(*n, p);
    }

    // Intra-link transfers; these are the first flows written this step.
    for link in network.links() {
        let range = network.cell_range(link.id);
        for c in range.start..range.end - 1 {
            let y = scratch.sending[c].min(scratch.receiving[c + 1]);
            scratch.outflow[c] = y;
            scratch.inflow[c + 1] = y;
        }
    }

    for (s, src) in network.sources().iter().enumerate() {
        let first = network.first_cell(src.link);
        let waiting = state.source_queues[s] + arrivals[s];
        let injected = waiting.min(scratch.receiving[first]);
        scratch.inflow[first] += injected;
        state.source_queues[s] = (waiting - injected).max(0.0);
        state.entered.add(arrivals[s]);
    }

    // Arrivals at each last cell so far can discharge within this step.
    for link in network.links() {
        let ms = network.movements_from(link.id);
        if !ms.is_empty() {
            let last = network.last_cell(link.id);
            split_into(ms, ratios, scratch.inflow[last], &mut scratch.arrivals);
        }
    }

    // Demand stays 0 on red.
    let movements = network.movements();
    for (node, signal) in network.intersections().iter().zip(signals) {
        if let Signal::Green(p) = *signal {
            for m in &node.phases[p] {
                let m = m.0;
                scratch.green[m] = true;
                scratch.demand[m] =
                    (state.queues[m] + scratch.arrivals[m]).min(movements[m].saturation_flow * dt);
            }
        }
    }

    for link in network.links() {
        let feeders = network.movements_into(link.id);
        if feeders.is_empty() {
            continue;
        }
        let first = network.first_cell(link.id);
        let space = scratch.receiving[first];
        let total: f64 = feeders.iter().map(|m| scratch.demand[m.0]).sum();
        for &mid in feeders {
            let m = mid.0;
            let share = if total <= space {
                scratch.demand[m]
            } else {
                space * scratch.demand[m] / total
            };
            scratch.share[m] = share;
            let out = intersection_outflow(
                state.queues[m],
                scratch.arrivals[m],
                scratch.green[m],
                movements[m].saturation_flow * dt,
                share,
            );
            state.movement_outflow[m] = out;
            state.discharged[m] += out;
            scratch.inflow[first] += out;
            scratch.outflow[network.stop_line_cell(mid)] += out;
        }
    }

    for &sink in network.sink_list() {
        let last = network.last_cell(sink);
        let out = scratch.sending[last];
        scratch.outflow[last] += out;
        state.exited.add(out);
    }

    for link in network.links() {
        let range = network.cell_range(link.id);
        let last = range.end - 1;
        let ms = network.movements_from(link.id);
        // What the link would move with nothing blocking it downstream. At a
        // stop line only green movements may move at all.
        let mut sendable: f64 = scratch.sending[range.start..last].iter().sum();
        if ms.is_empty() {
            // Every link without movements is a sink.
            sendable += scratch.sending[last];
        } else {
            sendable += ms.iter().map(|m| scratch.demand[m.0]).sum::<f64>();
            // Queues absorb everything that entered the last cell this step.
            for m in ms {
                state.queues[m.0] -= state.movement_outflow[m.0];
            }
            split_into(ms, ratios, scratch.inflow[last], &mut state.queues);
            for m in ms {
                if state.queues[m.0] < 0.0 {
                    debug_assert!(state.queues[m.0] > -1e-9, "queue underflow {}", state.queues[m.0]);
                    state.queues[m.0] = 0.0;
                }
            }
        }
        let moved: f64 = scratch.outflow[range.clone()].iter().sum();
        state.link_speed[link.id.0] = if sendable > 1e-12 {
            (moved / sendable).min(1.0)
        } else {
            1.0
        };
        state.link_inflow[link.id.0] += scratch.inflow[range.start];
    }

    for (c, p) in params.iter().enumerate() {
        let n = state.cells[c] + scratch.inflow[c] - scratch.outflow[c];
        debug_assert!(
            n > -1e-9 && n < p.n_max + 1e-9,
            "cell {c} left bounds: {n} not in [0, {}]",
            p.n_max
        );
        state.cells[c] = n.clamp(0.0, p.n_max);
    }

    state.active.copy_from_slice(signals);
    state.step += 1;
}

/// Exogenous arrivals at every source over the step starting at `state`.
pub(crate) fn profile_arrivals(network: &Network, state: &SimState, out: &mut Vec<f64>) {
    out.clear();
    let t = state.time();
    out.extend(
        network
            .sources()
            .iter()
            .map(|s| s.profile.vehicles_between(t, t + state.dt)),
    );
}

/// Returns the state one step later, with source arrivals taken from the
/// network's demand profiles.
pub fn step(
    network: &Network,
    state: &SimState,
    signals: &[Signal],
    ratios: &TurningRatios,
) -> SimState {
    let mut next = state.clone();
    let mut arrivals = Vec::with_capacity(network.sources().len());
    profile_arrivals(network, state, &mut arrivals);
    let mut scratch = StepScratch::new(network);
    advance(network, &mut next, signals, ratios, &arrivals, &mut scratch);
    next
}

/// Sum over the trace of queued vehicles times `dt` (vehicle-seconds).
pub fn total_queue_delay(trace: &[SimState]) -> f64 {
    assert!(!trace.is_empty(), "queue delay needs a non-empty trace");
    trace.iter().map(|s| s.queued_vehicles() * s.dt).sum()
}
