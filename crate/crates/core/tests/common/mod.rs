//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use tlc_core::congestion::{BoundaryLink, CongestionLevel, Partition, Region, RegionId};
use tlc_core::harness::{
    BranchingSpec, CellSpec, ControlConfig, DemandSpec, IntersectionSpec, LinkSpec, MovementSpec,
    NetworkSpec, PlanSpec, Scenario, ScenarioFile, SignalSpec, SourceSpec,
};
use tlc_core::network::{IntersectionId, LinkId, Network};

pub fn cell(n_max: f64, q_max_veh_h: f64) -> CellSpec {
    CellSpec {
        n_max,
        q_max_veh_h,
        delta: 0.5,
    }
}

pub fn link(id: usize, cells: usize) -> LinkSpec {
    LinkSpec {
        id,
        lanes: 1,
        cells: vec![cell(20.0, 1800.0); cells],
    }
}

pub fn movement(id: usize, from: usize, to: usize) -> MovementSpec {
    MovementSpec {
        id,
        from,
        to,
        headway_s: 2.0,
    }
}

pub fn constant_source(link: usize, veh_h: f64) -> SourceSpec {
    SourceSpec {
        link,
        rates_veh_h: vec![(0.0, veh_h)],
        period_s: None,
    }
}

pub fn scenario_file(network: NetworkSpec, sources: Vec<SourceSpec>, cycle_s: f64, steps: u64) -> ScenarioFile {
    ScenarioFile {
        dt_s: 1.0,
        steps,
        warmup_steps: 0,
        seed: 0,
        network,
        demand: DemandSpec { sources, noise: 0.0 },
        signals: SignalSpec {
            cycle_s,
            plans: Vec::new(),
        },
        branching: Vec::new(),
        control: ControlConfig::default(),
    }
}

/// One intersection: approaches 0 and 1 cross into exits 2 and 3, one
/// phase each.
pub fn crossing(rate_a: f64, rate_b: f64, cycle_s: f64, steps: u64) -> ScenarioFile {
    let network = NetworkSpec {
        links: (0..4).map(|i| link(i, 2)).collect(),
        intersections: vec![IntersectionSpec {
            id: 0,
            movements: vec![movement(0, 0, 2), movement(1, 1, 3)],
            phases: vec![vec![0], vec![1]],
            lost_time_s: 0.0,
        }],
        sinks: vec![2, 3],
    };
    scenario_file(
        network,
        vec![constant_source(0, rate_a), constant_source(1, rate_b)],
        cycle_s,
        steps,
    )
}

/// Approach 0 splitting into exits 1 and 2 under one always-green phase.
pub fn diverge(rate: f64, ratios: (f64, f64), period_s: Option<f64>, cycle_s: f64, steps: u64) -> ScenarioFile {
    let network = NetworkSpec {
        links: (0..3).map(|i| link(i, 2)).collect(),
        intersections: vec![IntersectionSpec {
            id: 0,
            movements: vec![movement(0, 0, 1), movement(1, 0, 2)],
            phases: vec![vec![0, 1]],
            lost_time_s: 0.0,
        }],
        sinks: vec![1, 2],
    };
    let rates = match period_s {
        // Half the period at twice the rate, the other half empty.
        Some(p) => vec![(0.0, 2.0 * rate), (p / 2.0, 0.0)],
        None => vec![(0.0, rate)],
    };
    let mut file = scenario_file(
        network,
        vec![SourceSpec {
            link: 0,
            rates_veh_h: rates,
            period_s,
        }],
        cycle_s,
        steps,
    );
    file.branching = vec![BranchingSpec {
        intersection: 0,
        ratios: vec![ratios.0, ratios.1],
    }];
    file
}

/// Two crossings in a row joined by link 2:
///
/// ```text
///        1          4
///        |          |
///   0 -> I0 -> 2 -> I1 -> 5
///        |          |
///        3          6
/// ```
///
/// Phase 0 serves the west-east movement, phase 1 the north-south one.
pub fn pair(rates: [f64; 3], cycle_s: f64, steps: u64) -> ScenarioFile {
    let network = NetworkSpec {
        links: (0..7).map(|i| link(i, 2)).collect(),
        intersections: vec![
            IntersectionSpec {
                id: 0,
                movements: vec![movement(0, 0, 2), movement(1, 1, 3)],
                phases: vec![vec![0], vec![1]],
                lost_time_s: 0.0,
            },
            IntersectionSpec {
                id: 1,
                movements: vec![movement(2, 2, 5), movement(3, 4, 6)],
                phases: vec![vec![2], vec![3]],
                lost_time_s: 0.0,
            },
        ],
        sinks: vec![3, 5, 6],
    };
    scenario_file(
        network,
        vec![
            constant_source(0, rates[0]),
            constant_source(1, rates[1]),
            constant_source(4, rates[2]),
        ],
        cycle_s,
        steps,
    )
}

/// Chain of `n` links joined by single-movement, single-phase
/// intersections.
pub fn line(n: usize) -> Network {
    let network = NetworkSpec {
        links: (0..n).map(|i| link(i, 1)).collect(),
        intersections: (0..n - 1)
            .map(|i| IntersectionSpec {
                id: i,
                movements: vec![movement(i, i, i + 1)],
                phases: vec![vec![i]],
                lost_time_s: 0.0,
            })
            .collect(),
        sinks: vec![n - 1],
    };
    let file = scenario_file(network, vec![constant_source(0, 0.0)], 60.0, 60);
    Scenario::from_file(file).expect("line fixture is valid").network
}

/// Parameters of a randomized arterial, see [`arterial`].
#[derive(Clone, Debug)]
pub struct ArterialParams {
    /// Cells per link, in link order: main links first, then side and exit
    /// links of each intersection.
    pub cells: Vec<Vec<(f64, f64, f64)>>,
    pub headways: Vec<f64>,
    /// Share of each approach turning off to the exit.
    pub turn: Vec<(f64, f64)>,
    /// Main-road and per-side-street demand, vehicles per hour.
    pub demand: Vec<f64>,
    pub lost_time_s: f64,
}

/// `k` intersections along a main road; each also has a side approach and
/// an exit. Both approaches feed the next main link and the exit, so every
/// intersection merges and diverges.
///
/// Links: main `0..=k` (0 is a source, `k` a sink), then side `k+1+2i`
/// (source) and exit `k+2+2i` (sink) for intersection `i`.
pub fn arterial(k: usize, p: &ArterialParams) -> ScenarioFile {
    let n_links = k + 1 + 2 * k;
    assert_eq!(p.cells.len(), n_links);
    assert_eq!(p.headways.len(), 4 * k);
    assert_eq!(p.turn.len(), k);
    assert_eq!(p.demand.len(), 1 + k);
    let links = p
        .cells
        .iter()
        .enumerate()
        .map(|(id, cs)| LinkSpec {
            id,
            lanes: 1,
            cells: cs
                .iter()
                .map(|&(n_max, q, delta)| CellSpec {
                    n_max,
                    q_max_veh_h: q,
                    delta,
                })
                .collect(),
        })
        .collect();
    let side = |i: usize| k + 1 + 2 * i;
    let exit = |i: usize| k + 2 + 2 * i;
    let mut intersections = Vec::with_capacity(k);
    let mut branching = Vec::with_capacity(k);
    let mut sinks = vec![k];
    let mut sources = vec![constant_source(0, p.demand[0])];
    for i in 0..k {
        let m = 4 * i;
        let mv = |j: usize, from: usize, to: usize| MovementSpec {
            id: m + j,
            from,
            to,
            headway_s: p.headways[m + j],
        };
        intersections.push(IntersectionSpec {
            id: i,
            movements: vec![
                mv(0, i, i + 1),
                mv(1, i, exit(i)),
                mv(2, side(i), i + 1),
                mv(3, side(i), exit(i)),
            ],
            phases: vec![vec![m, m + 1], vec![m + 2, m + 3]],
            lost_time_s: p.lost_time_s,
        });
        let (a, b) = p.turn[i];
        branching.push(BranchingSpec {
            intersection: i,
            ratios: vec![1.0 - a, a, 1.0 - b, b],
        });
        sinks.push(exit(i));
        sources.push(constant_source(side(i), p.demand[1 + i]));
    }
    let mut file = scenario_file(
        NetworkSpec {
            links,
            intersections,
            sinks,
        },
        sources,
        60.0,
        600,
    );
    file.branching = branching;
    file
}

/// Two-intersection arterial for estimator runs: the main-road source
/// alternates between 1800 veh/h and nothing every cycle, so the demand
/// period is two 60 s cycles. Exit 4 holds a single short cell and spills
/// back now and then.
pub fn estimator_arterial(periods: u64) -> ScenarioFile {
    let mut cells = vec![vec![(20.0, 1800.0, 0.5); 2]; 7];
    cells[4] = vec![(4.0, 900.0, 0.5)];
    let p = ArterialParams {
        cells,
        headways: vec![2.0; 8],
        turn: vec![(0.3, 0.25), (0.2, 0.4)],
        demand: vec![0.0, 300.0, 450.0],
        lost_time_s: 2.0,
    };
    let mut file = arterial(2, &p);
    file.demand.sources[0] = SourceSpec {
        link: 0,
        rates_veh_h: vec![(0.0, 1800.0), (60.0, 0.0)],
        period_s: Some(120.0),
    };
    file.steps = 120 * periods;
    file
}

/// Base plan spec with the given greens.
pub fn plan(intersection: usize, greens_s: Vec<f64>) -> PlanSpec {
    PlanSpec {
        intersection,
        greens_s,
        offset_s: 0.0,
    }
}

/// Partition with each intersection (and the links it receives) in its own
/// region at `level`; links without a downstream intersection go with
/// their upstream one.
pub fn per_intersection_partition(net: &Network, levels: &[CongestionLevel]) -> Partition {
    let n = net.intersections().len();
    assert_eq!(levels.len(), n);
    let mut regions: Vec<Region> = (0..n)
        .map(|i| Region {
            id: RegionId(i),
            links: Vec::new(),
            intersections: vec![IntersectionId(i)],
            level: levels[i],
        })
        .collect();
    let mut link_region = Vec::new();
    for l in net.links() {
        let owner = net
            .downstream(l.id)
            .or_else(|| net.upstream(l.id))
            .expect("every link touches an intersection");
        regions[owner.0].links.push(l.id);
        link_region.push(RegionId(owner.0));
    }
    let boundary_links = net
        .links()
        .iter()
        .filter_map(|l| {
            let up = net.upstream(l.id)?;
            let down = net.downstream(l.id)?;
            (up != down).then_some(BoundaryLink {
                link: l.id,
                upstream: RegionId(up.0),
                downstream: RegionId(down.0),
            })
        })
        .collect();
    Partition {
        regions,
        boundary_links,
        link_region,
        intersection_region: (0..n).map(RegionId).collect(),
    }
}

/// Checks every structural invariant of a partition from first principles.
pub fn check_partition(net: &Network, p: &Partition) -> Result<(), String> {
    let n_links = net.links().len();
    let mut seen = vec![None; n_links];
    for (k, r) in p.regions.iter().enumerate() {
        if r.id != RegionId(k) {
            return Err(format!("region {k} carries id {}", r.id));
        }
        if r.links.is_empty() {
            return Err(format!("{} is empty", r.id));
        }
        for l in &r.links {
            if let Some(other) = seen[l.0].replace(r.id) {
                return Err(format!("link {l} in {other} and {}", r.id));
            }
        }
    }
    if let Some(l) = seen.iter().position(|s| s.is_none()) {
        return Err(format!("link {l} is in no region"));
    }
    for (l, s) in seen.iter().enumerate() {
        if p.link_region[l] != s.unwrap() {
            return Err(format!("link_region[{l}] disagrees with the region lists"));
        }
    }

    // Connectivity by breadth-first search inside each region.
    for r in &p.regions {
        let members: BTreeSet<LinkId> = r.links.iter().copied().collect();
        let mut reached = BTreeSet::from([r.links[0]]);
        let mut queue = VecDeque::from([r.links[0]]);
        while let Some(l) = queue.pop_front() {
            for nb in net.adjacent_links(l) {
                if members.contains(nb) && reached.insert(*nb) {
                    queue.push_back(*nb);
                }
            }
        }
        if reached.len() != members.len() {
            return Err(format!("{} is not connected", r.id));
        }
    }

    let mut controlled = vec![0; net.intersections().len()];
    for r in &p.regions {
        for n in &r.intersections {
            controlled[n.0] += 1;
            if p.intersection_region[n.0] != r.id {
                return Err(format!("intersection_region[{n}] disagrees with {}", r.id));
            }
        }
    }
    if let Some(n) = controlled.iter().position(|&c| c != 1) {
        return Err(format!("intersection {n} is controlled {} times", controlled[n]));
    }

    let mut expected = BTreeMap::new();
    for l in net.links() {
        if let (Some(u), Some(d)) = (net.upstream(l.id), net.downstream(l.id)) {
            let (ru, rd) = (p.intersection_region[u.0], p.intersection_region[d.0]);
            if ru != rd {
                expected.insert(l.id, (ru, rd));
            }
        }
    }
    let mut listed = BTreeMap::new();
    for b in &p.boundary_links {
        if listed.insert(b.link, (b.upstream, b.downstream)).is_some() {
            return Err(format!("boundary link {} listed twice", b.link));
        }
    }
    if listed != expected {
        return Err(format!("boundary links {listed:?}, expected {expected:?}"));
    }
    Ok(())
}

pub mod ctm {
    use proptest::prelude::*;
    use tlc_core::network::{Network, Signal, SimState, StepScratch};

    use super::ArterialParams;

    /// Random arterial of 1 to 3 intersections.
    pub fn arterial_params() -> impl Strategy<Value = (usize, ArterialParams)> {
        (1usize..=3).prop_flat_map(|k| {
            let n_links = 3 * k + 1;
            let cell = (5.0f64..30.0, 600.0f64..3600.0, 0.2f64..=1.0);
            (
                Just(k),
                prop::collection::vec(prop::collection::vec(cell, 1..=3), n_links),
                prop::collection::vec(1.5f64..3.5, 4 * k),
                prop::collection::vec((0.0f64..0.6, 0.0f64..0.6), k),
                prop::collection::vec(0.0f64..2500.0, k + 1),
                prop_oneof![Just(0.0), Just(2.0), Just(3.0)],
            )
                .prop_map(|(k, cells, headways, turn, demand, lost)| {
                    (
                        k,
                        ArterialParams {
                            cells,
                            headways,
                            turn,
                            demand,
                            lost_time_s: lost,
                        },
                    )
                })
        })
    }

    /// Signal of every intersection for one step; `None` draws are all-red.
    pub fn signals(net: &Network, draws: &[Option<usize>]) -> Vec<Signal> {
        net.intersections()
            .iter()
            .zip(draws.iter().cycle())
            .map(|(node, d)| match d {
                Some(p) => Signal::Green(p % node.phase_count()),
                None => Signal::AllRed,
            })
            .collect()
    }

    /// Checks the step from `before` to `after` against the bounds recorded
    /// in `scratch`.
    pub fn check_step(
        net: &Network,
        before: &SimState,
        after: &SimState,
        signals: &[Signal],
        scratch: &StepScratch,
    ) -> Result<(), String> {
        const EPS: f64 = 1e-12;
        let dt = before.dt();
        for (c, (&n, p)) in after.cells().iter().zip(net.cell_params()).enumerate() {
            if !(0.0..=p.n_max).contains(&n) {
                return Err(format!("cell {c} holds {n}, capacity {}", p.n_max));
            }
        }
        for (c, &y) in scratch.inflow.iter().enumerate() {
            if y > scratch.receiving[c] + EPS {
                return Err(format!("cell {c} received {y} > {}", scratch.receiving[c]));
            }
        }
        let mut green = vec![false; net.movements().len()];
        for (node, s) in net.intersections().iter().zip(signals) {
            if let Signal::Green(p) = *s {
                for m in &node.phases[p] {
                    green[m.0] = true;
                }
            }
        }
        for link in net.links() {
            let range = net.cell_range(link.id);
            let last = range.end - 1;
            let ms = net.movements_from(link.id);
            for c in range.start..last {
                if scratch.outflow[c] > scratch.sending[c] + EPS {
                    return Err(format!("cell {c} sent {} > {}", scratch.outflow[c], scratch.sending[c]));
                }
                let y = scratch.inflow[c + 1];
                if y > scratch.sending[c].min(scratch.receiving[c + 1]) + EPS {
                    return Err(format!("transfer into cell {} of {y} is infeasible", c + 1));
                }
            }
            if ms.is_empty() {
                if scratch.outflow[last] > scratch.sending[last] + EPS {
                    return Err(format!("sink cell {last} sent more than it could"));
                }
                continue;
            }
            let mut queued = 0.0;
            for m in ms {
                let mv = net.movement(*m);
                let out = after.movement_outflow()[m.0];
                let q = after.queues()[m.0];
                if q < 0.0 {
                    return Err(format!("queue of {m} is {q}"));
                }
                queued += q;
                if !green[m.0] {
                    if out != 0.0 {
                        return Err(format!("{m} discharged {out} on red"));
                    }
                    if q < before.queues()[m.0] {
                        return Err(format!("queue of {m} shrank on red"));
                    }
                }
                let bound = (before.queues()[m.0] + scratch.arrivals[m.0])
                    .min(mv.saturation_flow * dt)
                    .min(scratch.share[m.0]);
                if out > bound + EPS {
                    return Err(format!("{m} discharged {out} > {bound}"));
                }
            }
            let n_last = after.cells()[last];
            if (queued - n_last).abs() > 1e-9 * (1.0 + n_last) {
                return Err(format!("queues of {} sum to {queued}, last cell holds {n_last}", link.id));
            }
        }
        for link in net.links() {
            let feeders = net.movements_into(link.id);
            if feeders.is_empty() {
                continue;
            }
            let granted: f64 = feeders.iter().map(|m| scratch.share[m.0]).sum();
            let first = net.first_cell(link.id);
            if granted > scratch.receiving[first] + 1e-9 {
                return Err(format!("{} granted {granted} > {}", link.id, scratch.receiving[first]));
            }
            let demanded: f64 = feeders.iter().map(|m| scratch.demand[m.0]).sum();
            for m in feeders {
                if scratch.share[m.0] > scratch.demand[m.0] + EPS {
                    return Err(format!("{m} granted more than it asked for"));
                }
            }
            if demanded <= scratch.receiving[first] && (granted - demanded).abs() > 1e-9 {
                return Err(format!("{} withheld space it had", link.id));
            }
        }
        if after.source_queues().iter().any(|&q| q < 0.0) {
            return Err("negative source queue".into());
        }
        let err = after.conservation_error();
        if err >= 1e-9 {
            return Err(format!("conservation error {err}"));
        }
        if after.step() != before.step() + 1 {
            return Err("clock did not advance by one".into());
        }
        Ok(())
    }
}

pub mod oracle {
    use std::collections::BTreeMap;

    use tlc_core::congestion::CongestionLevel;
    use tlc_core::control::{
        decide_all, optimize_region, split_candidates, steps_per_cycle, BoundaryFlows,
        IntersectionPlan, OptimizerConfig, RegionDecision, RegionModel, RegionProblem,
        RegionSolution,
    };
    use tlc_core::coordination::{BoundaryCoupling, ResponsiveRegion};
    use tlc_core::harness::Scenario;
    use tlc_core::network::{IntersectionId, Signal, SimState, TurningRatios};

    /// State after `steps` steps under the scenario's base plans.
    pub fn warm_state(scn: &Scenario, steps: u64) -> SimState {
        let net = &scn.network;
        let mut state = SimState::empty(net, scn.dt);
        let decisions = decide_all(&scn.base_plans, 0, steps as usize, scn.dt);
        for k in 0..steps as usize {
            let sig: Vec<Signal> = decisions.iter().map(|d| d.signals[k]).collect();
            state = tlc_core::network::step(net, &state, &sig, &scn.true_ratios);
        }
        state
    }

    /// The whole network as one region, with its localized state and ratios.
    pub struct WholeRegion {
        pub model: RegionModel,
        pub state: SimState,
        pub ratios: TurningRatios,
        pub flows: BoundaryFlows,
        pub caps: BTreeMap<tlc_core::network::LinkId, f64>,
    }

    impl WholeRegion {
        pub fn new(scn: &Scenario, state: &SimState) -> Self {
            let nodes: Vec<IntersectionId> = scn.network.intersections().iter().map(|i| i.id).collect();
            let model = RegionModel::extract(&scn.network, &nodes).unwrap();
            WholeRegion {
                state: model.localize_state(&scn.network, state),
                ratios: model.localize_ratios(&scn.true_ratios),
                model,
                flows: BoundaryFlows::new(),
                caps: BTreeMap::new(),
            }
        }

        pub fn problem(&self) -> RegionProblem<'_> {
            RegionProblem {
                model: &self.model,
                state: &self.state,
                ratios: &self.ratios,
                fixed_inflows: &self.flows,
                free_inflow_caps: &self.caps,
                prices: &self.flows,
            }
        }
    }

    pub fn decision(plans: &[IntersectionPlan]) -> RegionDecision {
        RegionDecision {
            plans: plans.to_vec(),
            free_inflows: BoundaryFlows::new(),
        }
    }

    /// Best objective over the full cartesian product of split grids, and
    /// the lexicographically first split vector achieving it.
    pub fn enumerate_joint(
        problem: &RegionProblem<'_>,
        template: &[IntersectionPlan],
        config: &OptimizerConfig,
    ) -> (f64, Vec<Vec<f64>>, usize) {
        let grids: Vec<Vec<Vec<f64>>> = template
            .iter()
            .map(|p| split_candidates(p.phase_count(), p.green_budget(), config.g_min, config.g_step))
            .collect();
        let mut index = vec![0usize; grids.len()];
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        let mut count = 0;
        loop {
            let mut plans = template.to_vec();
            for (i, p) in plans.iter_mut().enumerate() {
                p.greens = grids[i][index[i]].clone();
            }
            let obj = problem.evaluate(&decision(&plans), config.horizon).objective;
            count += 1;
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, plans.iter().map(|p| p.greens.clone()).collect()));
            }
            // Odometer over the grids, last intersection fastest.
            let mut k = grids.len();
            loop {
                if k == 0 {
                    let (obj, greens) = best.unwrap();
                    return (obj, greens, count);
                }
                k -= 1;
                index[k] += 1;
                if index[k] < grids[k].len() {
                    break;
                }
                index[k] = 0;
            }
        }
    }

    pub fn descend(problem: &RegionProblem<'_>, start: &[IntersectionPlan], config: &OptimizerConfig) -> RegionSolution {
        optimize_region(problem, decision(start), config).unwrap_or_else(|e| e.into_solution())
    }

    /// Single-intersection optimizer instances: scenario and warm-up steps.
    pub fn single_instances() -> Vec<(Scenario, u64)> {
        let mut lossy = super::crossing(1000.0, 700.0, 44.0, 440);
        lossy.network.intersections[0].lost_time_s = 2.0;
        [
            (super::crossing(900.0, 300.0, 40.0, 400), 0),
            (super::crossing(1200.0, 600.0, 40.0, 400), 90),
            (super::crossing(300.0, 1500.0, 60.0, 600), 120),
            (super::crossing(1800.0, 1800.0, 40.0, 400), 200),
            (lossy, 132),
        ]
        .into_iter()
        .map(|(f, w)| (Scenario::from_file(f).unwrap(), w))
        .collect()
    }

    /// Two-intersection optimizer instances.
    pub fn pair_instances() -> Vec<(Scenario, u64)> {
        [
            ([1200.0, 400.0, 400.0], 80),
            ([600.0, 900.0, 900.0], 120),
            ([1500.0, 200.0, 800.0], 200),
        ]
        .into_iter()
        .map(|(r, w)| (Scenario::from_file(super::pair(r, 40.0, 400)).unwrap(), w))
        .collect()
    }

    /// One responsive region per intersection, coupled on every shared link
    /// with the same caps the control cycle uses.
    pub fn split_regions(
        scn: &Scenario,
        state: &SimState,
        config: &OptimizerConfig,
    ) -> (Vec<ResponsiveRegion>, Vec<BoundaryCoupling>) {
        let net = &scn.network;
        let levels = vec![CongestionLevel::Congested; net.intersections().len()];
        let partition = super::per_intersection_partition(net, &levels);
        let per_cycle = steps_per_cycle(scn.base_plans[0].cycle, scn.dt) as f64;
        let couplings = partition
            .boundary_links
            .iter()
            .map(|b| {
                let q = net.cell_params()[net.first_cell(b.link)].q_max;
                let cap = ((q * per_cycle + 1e-9) / config.inflow_step).floor() * config.inflow_step;
                BoundaryCoupling::new(b.link, b.upstream, b.downstream, cap, config.horizon)
            })
            .collect();
        let regions = partition
            .regions
            .iter()
            .map(|r| {
                let model = RegionModel::extract(net, &r.intersections).unwrap();
                ResponsiveRegion {
                    id: r.id,
                    state: model.localize_state(net, state),
                    ratios: model.localize_ratios(&scn.true_ratios),
                    fixed_inflows: BoundaryFlows::new(),
                    incumbent: decision(
                        &r.intersections.iter().map(|n| scn.base_plans[n.0].clone()).collect::<Vec<_>>(),
                    ),
                    model,
                }
            })
            .collect();
        (regions, couplings)
    }

    /// Global plans assembled from per-region solutions.
    pub fn assemble(regions: &[ResponsiveRegion], solutions: &[RegionSolution], n: usize) -> Vec<IntersectionPlan> {
        let mut plans = vec![None; n];
        for (r, s) in regions.iter().zip(solutions) {
            for (node, p) in r.model.intersections().iter().zip(&s.decision.plans) {
                plans[node.0] = Some(p.clone());
            }
        }
        plans.into_iter().map(|p| p.expect("every intersection solved")).collect()
    }
}

pub mod gradient {
    use tlc_core::congestion::RecurrentPredictor;

    /// Largest relative gap between the analytic gradient and central
    /// differences with step 1e-5.
    pub fn max_relative_gradient_error(model: &RecurrentPredictor, series: &[f64]) -> f64 {
        let eps = 1e-5;
        let (_, grad) = model.loss_gradient(series);
        let base = model.parameters();
        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut w = base.clone();
            w[i] += eps;
            probe.set_parameters(&w);
            let up = probe.training_loss(series);
            w[i] -= 2.0 * eps;
            probe.set_parameters(&w);
            let down = probe.training_loss(series);
            let numeric = (up - down) / (2.0 * eps);
            let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grad[i] - numeric).abs() / scale);
        }
        worst
    }
}
