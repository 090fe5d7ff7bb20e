use std::collections::BTreeMap;

use super::dual::{
    coordinate_responsive, BoundaryCoupling, CoordinationConfig, CoordinationReport,
    MultiplierState, ResponsiveRegion,
};
use super::staging::stage_pretimed;
use crate::congestion::{Partition, RegionId};
use crate::control::{
    decide_all, phase_saturation_flows, scats_like_update, steps_per_cycle, BoundaryFlows,
    ControlDecision, IntersectionPlan, OptimizerConfig, RegionDecision, RegionModel, StrategyKind,
};
use crate::network::{IntersectionId, Network, SimState, TurningRatios};

/// Everything a control cycle reads. Plans and counts are indexed by global
/// intersection id.
#[derive(Clone, Copy, Debug)]
pub struct CycleInputs<'a> {
    pub network: &'a Network,
    pub state: &'a SimState,
    /// Estimated turning ratios.
    pub ratios: &'a TurningRatios,
    pub partition: &'a Partition,
    /// Controller of each region.
    pub assignments: &'a [StrategyKind],
    /// Fixed-time plans.
    pub base_plans: &'a [IntersectionPlan],
    /// Plans that ran during the cycle just finished.
    pub current_plans: &'a [IntersectionPlan],
    /// Vehicles discharged per phase during the cycle just finished.
    pub phase_counts: &'a [Vec<f64>],
    /// Vehicles that entered each link during the cycle just finished.
    pub last_inflows: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct CycleOutput {
    /// Plan for the next cycle of every intersection.
    pub plans: Vec<IntersectionPlan>,
    pub decisions: Vec<ControlDecision>,
    /// Present when at least one region was optimized.
    pub report: Option<CoordinationReport>,
    pub couplings: Vec<BoundaryCoupling>,
}

/// One pass of the control pipeline.
///
/// Fixed-time regions take their base plans and SCATS-like regions adapt
/// last cycle's plans; both are then simulated to fix the inflows they hand
/// to optimized regions. Optimized regions are solved jointly through
/// [`coordinate_responsive`], coupled on every boundary link between two of
/// them. Each intersection ends up with exactly one plan and one decision.
pub fn run_control_cycle(
    inputs: &CycleInputs<'_>,
    multipliers: &mut MultiplierState,
    optimizer: &OptimizerConfig,
    coordination: &CoordinationConfig,
) -> CycleOutput {
    let net = inputs.network;
    let partition = inputs.partition;
    assert_eq!(inputs.assignments.len(), partition.regions.len());
    let mut plans: Vec<IntersectionPlan> = inputs.current_plans.to_vec();

    for (region, &kind) in partition.regions.iter().zip(inputs.assignments) {
        for &n in &region.intersections {
            plans[n.0] = match kind {
                StrategyKind::PreTimed => inputs.base_plans[n.0].clone(),
                StrategyKind::ScatsLike => scats_like_update(
                    &inputs.current_plans[n.0],
                    &inputs.phase_counts[n.0],
                    &phase_saturation_flows(net, n),
                    optimizer.g_min,
                ),
                _ => inputs.current_plans[n.0].clone(),
            };
        }
    }

    let responsive: Vec<RegionId> = partition
        .regions
        .iter()
        .filter(|r| inputs.assignments[r.id.0].is_responsive() && !r.intersections.is_empty())
        .map(|r| r.id)
        .collect();

    let mut report = None;
    let mut couplings_out = Vec::new();
    if !responsive.is_empty() {
        let staged = stage_pretimed(
            net,
            inputs.state,
            inputs.ratios,
            partition,
            inputs.assignments,
            &plans,
            optimizer.horizon,
            inputs.last_inflows,
            optimizer.execution,
        );
        let cycle = plans.first().map_or(1.0, |p| p.cycle);
        let per_cycle = steps_per_cycle(cycle, inputs.state.dt()) as f64;
        let couplings: Vec<BoundaryCoupling> = partition
            .boundary_links
            .iter()
            .filter(|b| responsive.contains(&b.upstream) && responsive.contains(&b.downstream))
            .map(|b| {
                let q = net.cell_params()[net.first_cell(b.link)].q_max;
                let step = optimizer.inflow_step;
                let cap = ((q * per_cycle + 1e-9) / step).floor() * step;
                BoundaryCoupling::new(b.link, b.upstream, b.downstream, cap, optimizer.horizon)
            })
            .collect();

        let regions: Vec<ResponsiveRegion> = responsive
            .iter()
            .map(|&r| {
                let nodes = &partition.region(r).intersections;
                let model = RegionModel::extract(net, nodes).expect("sub-network of a valid network");
                let state = model.localize_state(net, inputs.state);
                let ratios = model.localize_ratios(inputs.ratios);
                let fixed_inflows: BoundaryFlows = model
                    .imports()
                    .filter_map(|l| staged.get(&l).map(|v| (l, v.clone())))
                    .collect();
                let incumbent = RegionDecision {
                    plans: nodes.iter().map(|n| plans[n.0].clone()).collect(),
                    free_inflows: BTreeMap::new(),
                };
                ResponsiveRegion {
                    id: r,
                    model,
                    state,
                    ratios,
                    fixed_inflows,
                    incumbent,
                }
            })
            .collect();

        let outcome = coordinate_responsive(
            &regions,
            couplings,
            std::mem::take(multipliers),
            optimizer,
            coordination,
        );
        *multipliers = outcome.multipliers;
        for (region, solution) in regions.iter().zip(&outcome.solutions) {
            for (n, plan) in region.model.intersections().iter().zip(&solution.decision.plans) {
                plans[n.0] = plan.clone();
            }
        }
        couplings_out = outcome.couplings;
        report = Some(outcome.report);
    }

    let per_cycle = plans
        .first()
        .map_or(0, |p| steps_per_cycle(p.cycle, inputs.state.dt()));
    let decisions = decide_all(&plans, inputs.state.step(), per_cycle, inputs.state.dt());
    debug_assert!(decisions
        .iter()
        .enumerate()
        .all(|(i, d)| d.intersection == IntersectionId(i)));
    CycleOutput {
        plans,
        decisions,
        report,
        couplings: couplings_out,
    }
}
