use std::collections::BTreeMap;

use super::plan::IntersectionPlan;
use super::region::{Entry, RegionModel};
use crate::network::{advance, LinkId, Signal, SimState, StepScratch, TurningRatios};

/// Vehicles per horizon cycle on boundary links, keyed by global link id.
pub type BoundaryFlows = BTreeMap<LinkId, Vec<f64>>;

/// Multipliers per horizon cycle on boundary links, keyed by global link id.
pub type Prices = BTreeMap<LinkId, Vec<f64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutOutcome {
    /// Queue delay plus price terms.
    pub objective: f64,
    /// Vehicle-seconds queued over the horizon.
    pub delay: f64,
    /// Per exported link, vehicles entering it per horizon cycle.
    pub exports: BoundaryFlows,
}

/// Steps per control cycle of length `cycle` seconds.
pub fn steps_per_cycle(cycle: f64, dt: f64) -> usize {
    let s = (cycle / dt).round();
    assert!(s >= 1.0, "cycle shorter than one step");
    s as usize
}

/// Simulates the region for `horizon` cycles under `plans` (one per local
/// intersection) and scores it.
///
/// Imported links receive `inflows[link][c]` vehicles spread evenly over
/// cycle `c`; a missing entry means no inflow. The objective is the queue
/// delay plus `prices[b][c] * f_out` for every exported link and minus
/// `prices[b][c] * f_in` for every imported one.
pub fn rollout_objective(
    model: &RegionModel,
    state: &SimState,
    ratios: &TurningRatios,
    plans: &[IntersectionPlan],
    horizon: usize,
    inflows: &BoundaryFlows,
    prices: &Prices,
) -> RolloutOutcome {
    simulate(model, state, ratios, plans, horizon, inflows, prices, f64::INFINITY)
        .expect("an infinite bound never cuts a rollout short")
}

/// [`rollout_objective`], abandoned with `None` as soon as the objective
/// is certain to exceed `bound`.
///
/// Delay only grows over the rollout and each export term is at least
/// `min(price, 0)` times the most the link can take in a cycle, so a
/// partial delay above `bound` minus those floors settles it. A `Some`
/// result is identical to the unbounded one.
#[allow(clippy::too_many_arguments)]
pub fn rollout_bounded(
    model: &RegionModel,
    state: &SimState,
    ratios: &TurningRatios,
    plans: &[IntersectionPlan],
    horizon: usize,
    inflows: &BoundaryFlows,
    prices: &Prices,
    bound: f64,
) -> Option<RolloutOutcome> {
    simulate(model, state, ratios, plans, horizon, inflows, prices, bound)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: &RegionModel,
    state: &SimState,
    ratios: &TurningRatios,
    plans: &[IntersectionPlan],
    horizon: usize,
    inflows: &BoundaryFlows,
    prices: &Prices,
    bound: f64,
) -> Option<RolloutOutcome> {
    let net = model.network();
    assert_eq!(plans.len(), net.intersections().len(), "one plan per intersection");
    let exports = model.exports();
    let mut out = RolloutOutcome {
        objective: 0.0,
        delay: 0.0,
        exports: exports.iter().map(|&(_, g)| (g, vec![0.0; horizon])).collect(),
    };
    if plans.is_empty() || horizon == 0 {
        return Some(out);
    }
    let cycle = plans[0].cycle;
    debug_assert!(plans.iter().all(|p| p.cycle == cycle), "region plans share a cycle");
    let dt = state.dt;
    let per_cycle = steps_per_cycle(cycle, dt);

    let import_term = import_price_term(model, inflows, prices);
    let cutoff = if bound.is_finite() {
        let mut floor = import_term;
        for &(l, g) in exports {
            if let Some(lambda) = prices.get(&g) {
                let most = net.cell_params()[net.first_cell(l)].q_max * per_cycle as f64;
                floor += lambda.iter().map(|x| x.min(0.0) * most).sum::<f64>();
            }
        }
        // Margin for rounding in the price sums.
        bound - floor + 1e-9 * (1.0 + bound.abs() + floor.abs())
    } else {
        f64::INFINITY
    };

    let mut sim = state.clone();
    let mut scratch = StepScratch::new(net);
    let mut signals = vec![Signal::AllRed; plans.len()];
    let mut arrivals = vec![0.0; net.sources().len()];
    let import_rate: Vec<Option<&Vec<f64>>> = model
        .entries()
        .iter()
        .map(|e| match e {
            Entry::Import(l) => inflows.get(l),
            _ => None,
        })
        .collect();

    for c in 0..horizon {
        let before: Vec<f64> = exports.iter().map(|&(l, _)| sim.link_inflow[l.0]).collect();
        for _ in 0..per_cycle {
            let t = sim.time();
            for (s, p) in signals.iter_mut().zip(plans) {
                *s = p.phase_at(t);
            }
            for (k, e) in model.entries().iter().enumerate() {
                arrivals[k] = match *e {
                    Entry::Demand(_) => net.sources()[k].profile.vehicles_between(t, t + dt),
                    Entry::Import(_) => import_rate[k]
                        .and_then(|v| v.get(c))
                        .map_or(0.0, |f| f / per_cycle as f64),
                    Entry::Closed => 0.0,
                };
            }
            advance(net, &mut sim, &signals, ratios, &arrivals, &mut scratch);
            out.delay += sim.queued_vehicles() * dt;
            if out.delay > cutoff {
                return None;
            }
        }
        for (k, &(l, g)) in exports.iter().enumerate() {
            out.exports.get_mut(&g).expect("export registered")[c] = sim.link_inflow[l.0] - before[k];
        }
    }

    let mut priced = import_term;
    for (g, flows) in &out.exports {
        if let Some(lambda) = prices.get(g) {
            priced += lambda.iter().zip(flows).map(|(l, f)| l * f).sum::<f64>();
        }
    }
    out.objective = out.delay + priced;
    Some(out)
}

/// `-sum prices * f_in` over the imported links.
fn import_price_term(model: &RegionModel, inflows: &BoundaryFlows, prices: &Prices) -> f64 {
    let mut term = 0.0;
    for g in model.imports() {
        if let (Some(lambda), Some(flows)) = (prices.get(&g), inflows.get(&g)) {
            term -= lambda.iter().zip(flows).map(|(l, f)| l * f).sum::<f64>();
        }
    }
    term
}
