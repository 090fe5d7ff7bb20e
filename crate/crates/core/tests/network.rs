mod common;

use common::ctm::{arterial_params, check_step, signals};
use common::{arterial, diverge};
use proptest::prelude::*;
use tlc_core::harness::Scenario;
use tlc_core::network::{
    advance, receiving_capacity, sending_capacity, step, CellParams, Signal,
    SimState, StepScratch,
};

/// Random initial occupancy as fractions of each cell's capacity.
fn initial_state(scn: &Scenario, fill: &[f64]) -> SimState {
    let cells = scn
        .network
        .cell_params()
        .iter()
        .zip(fill.iter().cycle())
        .map(|(p, f)| p.n_max * f)
        .collect();
    SimState::with_cells(&scn.network, scn.dt, cells, &scn.true_ratios).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_step_respects_bounds_and_conserves(
        (k, params) in arterial_params(),
        fill in prop::collection::vec(0.0f64..=1.0, 1..12),
        draws in prop::collection::vec(prop::option::weighted(0.8, 0usize..4), 1..40),
        steps in 50usize..300,
    ) {
        let scn = Scenario::from_file(arterial(k, &params)).unwrap();
        let net = &scn.network;
        let mut state = initial_state(&scn, &fill);
        let mut scratch = StepScratch::new(net);
        let mut arrivals = vec![0.0; net.sources().len()];
        for j in 0..steps {
            let sig = signals(net, &draws[j % draws.len()..]);
            let t = state.time();
            for (a, s) in arrivals.iter_mut().zip(net.sources()) {
                *a = s.profile.vehicles_between(t, t + scn.dt);
            }
            let before = state.clone();
            advance(net, &mut state, &sig, &scn.true_ratios, &arrivals, &mut scratch);
            if let Err(e) = check_step(net, &before, &state, &sig, &scratch) {
                return Err(TestCaseError::fail(format!("step {j}: {e}")));
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_traces(
        (k, params) in arterial_params(),
        fill in prop::collection::vec(0.0f64..=1.0, 1..6),
        draws in prop::collection::vec(prop::option::of(0usize..4), 1..20),
    ) {
        let scn = Scenario::from_file(arterial(k, &params)).unwrap();
        let net = &scn.network;
        let run = || {
            let mut s = initial_state(&scn, &fill);
            let mut trace = Vec::new();
            for j in 0..100 {
                s = step(net, &s, &signals(net, &draws[j % draws.len()..]), &scn.true_ratios);
                trace.push(s.clone());
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn all_red_holds_every_queue(
        (k, params) in arterial_params(),
        fill in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let scn = Scenario::from_file(arterial(k, &params)).unwrap();
        let net = &scn.network;
        let red = vec![Signal::AllRed; net.intersections().len()];
        let mut state = initial_state(&scn, &fill);
        for _ in 0..50 {
            let next = step(net, &state, &red, &scn.true_ratios);
            prop_assert!(next.movement_outflow().iter().all(|&y| y == 0.0));
            for (a, b) in state.queues().iter().zip(next.queues()) {
                prop_assert!(b >= a);
            }
            state = next;
        }
    }

    #[test]
    fn capacities_stay_in_range(n_max in 0.1f64..50.0, q_frac in 0.01f64..=1.0, delta in 0.01f64..=1.0, fill in 0.0f64..=1.0) {
        let p = CellParams::new(n_max, n_max * q_frac, delta).unwrap();
        let n = n_max * fill;
        let s = sending_capacity(n, &p);
        let r = receiving_capacity(n, &p);
        prop_assert!((0.0..=p.q_max).contains(&s) && s <= n);
        prop_assert!((0.0..=p.q_max).contains(&r) && r <= p.n_max - n + 1e-12);
    }
}

#[test]
fn three_links_conserve_over_fifty_steps() {
    let scn = Scenario::from_file(diverge(1200.0, (0.3, 0.7), None, 60.0, 60)).unwrap();
    let net = &scn.network;
    let green = vec![Signal::Green(0)];
    let mut state = SimState::empty(net, scn.dt);
    for _ in 0..50 {
        state = step(net, &state, &green, &scn.true_ratios);
    }
    // Independent recount of everything in the system.
    let held: f64 = state.cells().iter().sum::<f64>() + state.source_queues().iter().sum::<f64>();
    let expected = state.cumulative_entered() - state.cumulative_exited();
    assert!((held - expected).abs() < 1e-9, "{held} vs {expected}");
    // 1200 veh/h for 50 s.
    assert!((state.cumulative_entered() - 50.0 / 3.0).abs() < 1e-9);
    assert!(state.cumulative_exited() > 0.0);
}

#[test]
fn long_run_conservation() {
    let scn = Scenario::from_file(common::pair([1500.0, 400.0, 600.0], 60.0, 60)).unwrap();
    let net = &scn.network;
    let mut state = SimState::empty(net, scn.dt);
    let mut scratch = StepScratch::new(net);
    let mut worst: f64 = 0.0;
    for k in 0..10_000u64 {
        let phase = ((k / 20) % 2) as usize;
        let sig = vec![Signal::Green(phase), Signal::Green(1 - phase)];
        let t = state.time();
        let arrivals: Vec<f64> = net.sources().iter().map(|s| s.profile.vehicles_between(t, t + 1.0)).collect();
        advance(net, &mut state, &sig, &scn.true_ratios, &arrivals, &mut scratch);
        worst = worst.max(state.conservation_error());
    }
    assert!(worst < 1e-9, "worst conservation error {worst}");
}
