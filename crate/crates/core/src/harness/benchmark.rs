//! Synthetic 3x3 grid with a congested west-east arterial.
//!
//! The arterial's eastbound exit drops a lane, so under equal pre-timed
//! splits its queue spills back through all three arterial intersections.
//! The default warm-up runs long enough for that queue to form before
//! measurement starts.

use super::scenario::{
    BranchingSpec, CellSpec, ControlConfig, DemandSpec, IntersectionSpec, LinkSpec, MovementSpec,
    NetworkSpec, ScenarioFile, SignalSpec, SourceSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Heading {
    East,
    West,
    South,
    North,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::East, Heading::West, Heading::South, Heading::North];

    fn left(self) -> Heading {
        match self {
            Heading::East => Heading::North,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::North => Heading::West,
        }
    }

    fn right(self) -> Heading {
        match self {
            Heading::East => Heading::South,
            Heading::West => Heading::North,
            Heading::South => Heading::West,
            Heading::North => Heading::East,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Row and column step of one block in this direction.
    fn delta(self) -> (isize, isize) {
        match self {
            Heading::East => (0, 1),
            Heading::West => (0, -1),
            Heading::South => (1, 0),
            Heading::North => (-1, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOptions {
    pub rows: usize,
    pub cols: usize,
    /// Row carrying the arterial.
    pub corridor_row: usize,
    pub corridor_lanes: u32,
    /// Lanes on the arterial's eastbound exit; fewer than `corridor_lanes`
    /// makes a lane drop whose queue spills back along the arterial.
    pub corridor_exit_lanes: u32,
    /// Eastbound arterial demand, vehicles per hour.
    pub corridor_veh_h: f64,
    /// Westbound arterial demand, vehicles per hour.
    pub counterflow_veh_h: f64,
    /// Demand at every other entry, vehicles per hour.
    pub background_veh_h: f64,
    pub through_ratio: f64,
    /// Vehicles per lane per cell.
    pub cell_capacity: f64,
    pub lane_flow_veh_h: f64,
    pub headway_s: f64,
    pub lost_time_s: f64,
    pub cycle_s: f64,
    pub steps: u64,
    pub warmup_steps: u64,
    pub seed: u64,
    pub control: ControlConfig,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            rows: 3,
            cols: 3,
            corridor_row: 1,
            corridor_lanes: 2,
            corridor_exit_lanes: 1,
            corridor_veh_h: 1500.0,
            counterflow_veh_h: 300.0,
            background_veh_h: 150.0,
            through_ratio: 0.8,
            cell_capacity: 12.0,
            lane_flow_veh_h: 1800.0,
            headway_s: 2.0,
            lost_time_s: 2.0,
            cycle_s: 60.0,
            steps: 3600,
            warmup_steps: 1800,
            seed: 1,
            control: benchmark_control(),
        }
    }
}

/// Default control settings, but with a 10 s green grid.
pub fn benchmark_control() -> ControlConfig {
    let mut c = ControlConfig::default();
    c.optimizer.g_step = 10.0;
    c
}

/// Grid of 4-phase intersections joined by 2-cell links in both directions,
/// with an entry and an exit link on every open side of the boundary.
///
/// Each approach has through, left and right movements. Phases, in order:
/// east-west through and right, east-west left, north-south through and
/// right, north-south left.
pub fn benchmark_grid(o: &BenchmarkOptions) -> ScenarioFile {
    assert!(o.rows >= 1 && o.cols >= 1 && o.corridor_row < o.rows);
    let node = |r: usize, c: usize| r * o.cols + c;
    let n_nodes = o.rows * o.cols;
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < o.rows && (c as usize) < o.cols;

    // incoming[n][h]: link arriving at n travelling in h; outgoing likewise.
    let mut incoming = vec![[usize::MAX; 4]; n_nodes];
    let mut outgoing = vec![[usize::MAX; 4]; n_nodes];
    let mut links = Vec::new();
    let mut sinks = Vec::new();
    let mut sources = Vec::new();

    let lanes_for = |row_a: usize, row_b: usize, h: Heading| {
        let horizontal = matches!(h, Heading::East | Heading::West);
        if horizontal && row_a == o.corridor_row && row_b == o.corridor_row {
            o.corridor_lanes
        } else {
            1
        }
    };
    let new_link = |lanes: u32, links: &mut Vec<LinkSpec>| {
        let id = links.len();
        let cell = CellSpec {
            n_max: o.cell_capacity * lanes as f64,
            q_max_veh_h: o.lane_flow_veh_h * lanes as f64,
            delta: 0.5,
        };
        links.push(LinkSpec {
            id,
            lanes,
            cells: vec![cell.clone(), cell],
        });
        id
    };

    // Internal links.
    for r in 0..o.rows {
        for c in 0..o.cols {
            for h in Heading::ALL {
                let (dr, dc) = h.delta();
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if inside(nr, nc) {
                    let (nr, nc) = (nr as usize, nc as usize);
                    let id = new_link(lanes_for(r, nr, h), &mut links);
                    outgoing[node(r, c)][h.index()] = id;
                    incoming[node(nr, nc)][h.index()] = id;
                }
            }
        }
    }
    // Boundary entries and exits.
    for r in 0..o.rows {
        for c in 0..o.cols {
            let n = node(r, c);
            for h in Heading::ALL {
                let (dr, dc) = h.delta();
                if !inside(r as isize + dr, c as isize + dc) {
                    let lanes = if h == Heading::East && r == o.corridor_row {
                        o.corridor_exit_lanes
                    } else {
                        lanes_for(r, r, h)
                    };
                    let id = new_link(lanes, &mut links);
                    outgoing[n][h.index()] = id;
                    sinks.push(id);
                }
                if !inside(r as isize - dr, c as isize - dc) {
                    let id = new_link(lanes_for(r, r, h), &mut links);
                    incoming[n][h.index()] = id;
                    let rate = match h {
                        Heading::East if r == o.corridor_row => o.corridor_veh_h,
                        Heading::West if r == o.corridor_row => o.counterflow_veh_h,
                        _ => o.background_veh_h,
                    };
                    sources.push(SourceSpec {
                        link: id,
                        rates_veh_h: vec![(0.0, rate)],
                        period_s: None,
                    });
                }
            }
        }
    }

    let turn = (1.0 - o.through_ratio) / 2.0;
    let mut intersections = Vec::with_capacity(n_nodes);
    let mut branching = Vec::with_capacity(n_nodes);
    let mut next_movement = 0;
    for n in 0..n_nodes {
        let mut movements = Vec::with_capacity(12);
        let mut phases = vec![Vec::new(); 4];
        let mut ratios = Vec::with_capacity(12);
        for h in Heading::ALL {
            let ew = matches!(h, Heading::East | Heading::West);
            for (k, (to, ratio)) in [(h, o.through_ratio), (h.left(), turn), (h.right(), turn)]
                .into_iter()
                .enumerate()
            {
                let id = next_movement;
                next_movement += 1;
                movements.push(MovementSpec {
                    id,
                    from: incoming[n][h.index()],
                    to: outgoing[n][to.index()],
                    headway_s: o.headway_s,
                });
                ratios.push(ratio);
                let is_left = k == 1;
                let phase = match (ew, is_left) {
                    (true, false) => 0,
                    (true, true) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                };
                phases[phase].push(id);
            }
        }
        intersections.push(IntersectionSpec {
            id: n,
            movements,
            phases,
            lost_time_s: o.lost_time_s,
        });
        branching.push(BranchingSpec {
            intersection: n,
            ratios,
        });
    }

    ScenarioFile {
        dt_s: 1.0,
        steps: o.steps,
        warmup_steps: o.warmup_steps,
        seed: o.seed,
        network: NetworkSpec {
            links,
            intersections,
            sinks,
        },
        demand: DemandSpec { sources, noise: 0.0 },
        signals: SignalSpec {
            cycle_s: o.cycle_s,
            plans: Vec::new(),
        },
        branching,
        control: o.control.clone(),
    }
}
