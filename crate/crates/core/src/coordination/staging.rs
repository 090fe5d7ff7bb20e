use std::collections::BTreeSet;

use crate::congestion::{Partition, RegionId};
use crate::control::{rollout_objective, BoundaryFlows, IntersectionPlan, Prices, RegionModel, StrategyKind};
use crate::network::{LinkId, Network, SimState, TurningRatios};
use crate::par::{map_ordered, Execution};

/// Boundary outflows of staged (non-responsive) regions into responsive ones.
///
/// Every staged region that feeds a responsive region is simulated for
/// `horizon` cycles under its already-fixed plans, with its own imports held
/// at `last_inflows` (vehicles entering each link over the last cycle). Its
/// per-cycle inflow onto each link handed to a responsive region is
/// recorded. Links from staged regions into other staged regions are not.
#[allow(clippy::too_many_arguments)]
pub fn stage_pretimed(
    network: &Network,
    state: &SimState,
    ratios: &TurningRatios,
    partition: &Partition,
    assignments: &[StrategyKind],
    plans: &[IntersectionPlan],
    horizon: usize,
    last_inflows: &[f64],
    execution: Execution,
) -> BoundaryFlows {
    assert_eq!(assignments.len(), partition.regions.len());
    let responsive = |r: RegionId| assignments[r.0].is_responsive();
    let feeding: BTreeSet<RegionId> = partition
        .boundary_links
        .iter()
        .filter(|b| !responsive(b.upstream) && responsive(b.downstream))
        .map(|b| b.upstream)
        .collect();
    let wanted: BTreeSet<LinkId> = partition
        .boundary_links
        .iter()
        .filter(|b| feeding.contains(&b.upstream) && responsive(b.downstream))
        .map(|b| b.link)
        .collect();
    let staged: Vec<RegionId> = feeding.into_iter().collect();

    let flows = map_ordered(execution, &staged, |&r| {
        let nodes = &partition.region(r).intersections;
        let model = RegionModel::extract(network, nodes).expect("sub-network of a valid network");
        let local_state = model.localize_state(network, state);
        let local_ratios = model.localize_ratios(ratios);
        let local_plans: Vec<IntersectionPlan> =
            nodes.iter().map(|n| plans[n.0].clone()).collect();
        let inflows: BoundaryFlows = model
            .imports()
            .map(|l| (l, vec![last_inflows[l.0]; horizon]))
            .collect();
        rollout_objective(
            &model,
            &local_state,
            &local_ratios,
            &local_plans,
            horizon,
            &inflows,
            &Prices::new(),
        )
        .exports
    });
    flows
        .into_iter()
        .flatten()
        .filter(|(l, _)| wanted.contains(l))
        .collect()
}
