use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::demand::DemandProfile;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

dense_id!(
    /// Zero-based link index.
    LinkId,
    "L"
);
dense_id!(
    /// Zero-based intersection index.
    IntersectionId,
    "I"
);
dense_id!(
    /// Zero-based movement index, global across all intersections.
    MovementId,
    "M"
);

/// A phase is the set of movements that receive green together.
pub type Phase = Vec<MovementId>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("{kind} id {found} at position {position}: ids must be dense and in order")]
    NonDenseId {
        kind: &'static str,
        position: usize,
        found: usize,
    },
    #[error("link {0} has no cells")]
    EmptyLink(LinkId),
    #[error("link {link} cell {cell}: {reason}")]
    InvalidCell {
        link: LinkId,
        cell: usize,
        reason: String,
    },
    #[error("movement {movement} references missing link {link}")]
    MissingLink { movement: MovementId, link: LinkId },
    #[error("movement {movement}: {reason}")]
    InvalidMovement { movement: MovementId, reason: String },
    #[error("intersection {intersection}: {reason}")]
    InvalidIntersection {
        intersection: IntersectionId,
        reason: String,
    },
    #[error("link {link}: {reason}")]
    InvalidLinkRole { link: LinkId, reason: String },
    #[error("link adjacency graph is not connected ({components} components)")]
    Disconnected { components: usize },
}

/// Per-cell CTM parameters, in vehicles and vehicles per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Holding capacity (vehicles).
    pub n_max: f64,
    /// Maximum flow per step (vehicles/step).
    pub q_max: f64,
    /// Backward to forward wave speed ratio, in (0, 1].
    pub delta: f64,
}

impl CellParams {
    pub fn new(n_max: f64, q_max: f64, delta: f64) -> Result<Self, String> {
        let p = CellParams {
            n_max,
            q_max,
            delta,
        };
        p.check()?;
        Ok(p)
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        if !(self.n_max.is_finite() && self.n_max > 0.0) {
            return Err(format!("N_max must be positive, got {}", self.n_max));
        }
        if !(self.q_max.is_finite() && self.q_max > 0.0) {
            return Err(format!("Q_max must be positive, got {}", self.q_max));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(format!("delta must be in (0, 1], got {}", self.delta));
        }
        if self.q_max > self.n_max {
            return Err(format!(
                "Q_max {} exceeds N_max {}",
                self.q_max, self.n_max
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub cells: Vec<CellParams>,
    pub lanes: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: MovementId,
    pub from_link: LinkId,
    pub to_link: LinkId,
    /// Vehicles per second.
    pub saturation_flow: f64,
    /// Seconds per vehicle per lane.
    pub discharge_headway: f64,
}

/// Intersection as supplied to [`Network::new`]; movements are owned here
/// and flattened into the network's global movement table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionDef {
    pub id: IntersectionId,
    pub movements: Vec<Movement>,
    pub phases: Vec<Phase>,
    /// Seconds of all-red following each phase.
    pub lost_time_per_phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub movements: Vec<MovementId>,
    pub phases: Vec<Phase>,
    pub lost_time_per_phase: f64,
}

impl Intersection {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub link: LinkId,
    pub profile: DemandProfile,
}

/// Immutable network topology with derived lookup tables.
#[derive(Clone, Debug)]
pub struct Network {
    links: Vec<Link>,
    intersections: Vec<Intersection>,
    movements: Vec<Movement>,
    sources: Vec<Source>,
    sinks: BTreeSet<LinkId>,

    cell_offset: Vec<usize>,
    cell_params: Vec<CellParams>,
    upstream: Vec<Option<IntersectionId>>,
    downstream: Vec<Option<IntersectionId>>,
    sink_list: Vec<LinkId>,
    link_movements: Csr,
    feeders: Csr,
    movement_owner: Vec<IntersectionId>,
    /// Per movement, the flat index of its approach's last cell.
    stop_line_cell: Vec<usize>,
    source_of: Vec<Option<usize>>,
    adjacency: Vec<Vec<LinkId>>,
}

/// Rows of movement ids stored back to back.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    items: Vec<MovementId>,
}

impl Csr {
    fn new(rows: &[Vec<MovementId>]) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut items = Vec::new();
        for r in rows {
            items.extend_from_slice(r);
            offsets.push(items.len());
        }
        Csr { offsets, items }
    }

    fn row(&self, i: usize) -> &[MovementId] {
        &self.items[self.offsets[i]..self.offsets[i + 1]]
    }
}

impl Network {
    /// Validates and builds a network whose link adjacency graph must be
    /// connected.
    pub fn new(
        links: Vec<Link>,
        intersections: Vec<IntersectionDef>,
        sources: Vec<Source>,
        sinks: BTreeSet<LinkId>,
    ) -> Result<Self, TopologyError> {
        let net = Self::build(links, intersections, sources, sinks)?;
        let components = net.component_count();
        if components > 1 {
            return Err(TopologyError::Disconnected { components });
        }
        Ok(net)
    }

    /// Same as [`Network::new`] without the connectivity requirement. Used for
    /// region sub-networks, whose intersections need not touch.
    pub(crate) fn new_unchecked_connectivity(
        links: Vec<Link>,
        intersections: Vec<IntersectionDef>,
        sources: Vec<Source>,
        sinks: BTreeSet<LinkId>,
    ) -> Result<Self, TopologyError> {
        Self::build(links, intersections, sources, sinks)
    }

    fn build(
        links: Vec<Link>,
        defs: Vec<IntersectionDef>,
        sources: Vec<Source>,
        sinks: BTreeSet<LinkId>,
    ) -> Result<Self, TopologyError> {
        for (pos, link) in links.iter().enumerate() {
            if link.id.0 != pos {
                return Err(TopologyError::NonDenseId {
                    kind: "link",
                    position: pos,
                    found: link.id.0,
                });
            }
            if link.cells.is_empty() {
                return Err(TopologyError::EmptyLink(link.id));
            }
            if link.lanes == 0 {
                return Err(TopologyError::InvalidLinkRole {
                    link: link.id,
                    reason: "lane count must be at least 1".into(),
                });
            }
            for (c, cell) in link.cells.iter().enumerate() {
                cell.check().map_err(|reason| TopologyError::InvalidCell {
                    link: link.id,
                    cell: c,
                    reason,
                })?;
            }
        }
        let n_links = links.len();
        let link_exists = |l: LinkId| l.0 < n_links;

        let mut movements = Vec::new();
        let mut intersections = Vec::with_capacity(defs.len());
        let mut movement_owner = Vec::new();
        for (pos, def) in defs.into_iter().enumerate() {
            if def.id.0 != pos {
                return Err(TopologyError::NonDenseId {
                    kind: "intersection",
                    position: pos,
                    found: def.id.0,
                });
            }
            let bad = |reason: String| TopologyError::InvalidIntersection {
                intersection: def.id,
                reason,
            };
            if def.movements.is_empty() {
                return Err(bad("no movements".into()));
            }
            if def.phases.is_empty() {
                return Err(bad("no phases".into()));
            }
            if !(def.lost_time_per_phase >= 0.0 && def.lost_time_per_phase.is_finite()) {
                return Err(bad("lost time per phase must be non-negative".into()));
            }
            let mut ids = Vec::with_capacity(def.movements.len());
            for m in def.movements {
                if m.id.0 != movements.len() {
                    return Err(TopologyError::NonDenseId {
                        kind: "movement",
                        position: movements.len(),
                        found: m.id.0,
                    });
                }
                for l in [m.from_link, m.to_link] {
                    if !link_exists(l) {
                        return Err(TopologyError::MissingLink {
                            movement: m.id,
                            link: l,
                        });
                    }
                }
                if !(m.saturation_flow > 0.0 && m.saturation_flow.is_finite()) {
                    return Err(TopologyError::InvalidMovement {
                        movement: m.id,
                        reason: "saturation flow must be positive".into(),
                    });
                }
                if !(m.discharge_headway > 0.0 && m.discharge_headway.is_finite()) {
                    return Err(TopologyError::InvalidMovement {
                        movement: m.id,
                        reason: "discharge headway must be positive".into(),
                    });
                }
                let lanes = f64::from(links[m.from_link.0].lanes);
                let implied = lanes / m.discharge_headway;
                if (implied - m.saturation_flow).abs() > 1e-9 * implied.max(1.0) {
                    return Err(TopologyError::InvalidMovement {
                        movement: m.id,
                        reason: format!(
                            "saturation flow {} != lanes/headway {}",
                            m.saturation_flow, implied
                        ),
                    });
                }
                ids.push(m.id);
                movement_owner.push(def.id);
                movements.push(m);
            }
            let own: BTreeSet<MovementId> = ids.iter().copied().collect();
            let mut covered = BTreeSet::new();
            for (p, phase) in def.phases.iter().enumerate() {
                if phase.is_empty() {
                    return Err(bad(format!("phase {p} is empty")));
                }
                for m in phase {
                    if !own.contains(m) {
                        return Err(bad(format!(
                            "phase {p} references movement {m} of another intersection"
                        )));
                    }
                    covered.insert(*m);
                }
            }
            if covered.len() != own.len() {
                let missing = own.difference(&covered).next().copied().unwrap();
                return Err(bad(format!("movement {missing} is in no phase")));
            }
            intersections.push(Intersection {
                id: def.id,
                movements: ids,
                phases: def.phases,
                lost_time_per_phase: def.lost_time_per_phase,
            });
        }

        let mut upstream = vec![None; n_links];
        let mut downstream = vec![None; n_links];
        let mut link_movements = vec![Vec::new(); n_links];
        let mut feeders = vec![Vec::new(); n_links];
        for m in &movements {
            let owner = movement_owner[m.id.0];
            for (slot, link, side) in [
                (&mut downstream, m.from_link, "terminates"),
                (&mut upstream, m.to_link, "originates"),
            ] {
                match slot[link.0] {
                    Some(other) if other != owner => {
                        return Err(TopologyError::InvalidLinkRole {
                            link,
                            reason: format!("{side} at both {other} and {owner}"),
                        });
                    }
                    _ => slot[link.0] = Some(owner),
                }
            }
            link_movements[m.from_link.0].push(m.id);
            feeders[m.to_link.0].push(m.id);
        }

        let mut source_of = vec![None; n_links];
        for (s, src) in sources.iter().enumerate() {
            if !link_exists(src.link) {
                return Err(TopologyError::InvalidLinkRole {
                    link: src.link,
                    reason: "source references a missing link".into(),
                });
            }
            if source_of[src.link.0].is_some() {
                return Err(TopologyError::InvalidLinkRole {
                    link: src.link,
                    reason: "more than one source".into(),
                });
            }
            if upstream[src.link.0].is_some() {
                return Err(TopologyError::InvalidLinkRole {
                    link: src.link,
                    reason: "a source link cannot originate at an intersection".into(),
                });
            }
            source_of[src.link.0] = Some(s);
        }
        for &l in &sinks {
            if !link_exists(l) {
                return Err(TopologyError::InvalidLinkRole {
                    link: l,
                    reason: "sink references a missing link".into(),
                });
            }
            if downstream[l.0].is_some() {
                return Err(TopologyError::InvalidLinkRole {
                    link: l,
                    reason: "a sink link cannot feed an intersection".into(),
                });
            }
        }
        for (l, down) in downstream.iter().enumerate() {
            if down.is_none() && !sinks.contains(&LinkId(l)) {
                return Err(TopologyError::InvalidLinkRole {
                    link: LinkId(l),
                    reason: "non-sink link does not terminate at an intersection".into(),
                });
            }
        }

        let mut cell_offset = Vec::with_capacity(n_links + 1);
        let mut cell_params = Vec::new();
        cell_offset.push(0);
        for link in &links {
            cell_params.extend_from_slice(&link.cells);
            cell_offset.push(cell_params.len());
        }

        let mut adjacency: Vec<BTreeSet<LinkId>> = vec![BTreeSet::new(); n_links];
        for node in &intersections {
            let incident: BTreeSet<LinkId> = node
                .movements
                .iter()
                .flat_map(|m| {
                    let mv = &movements[m.0];
                    [mv.from_link, mv.to_link]
                })
                .collect();
            for &a in &incident {
                for &b in &incident {
                    if a != b {
                        adjacency[a.0].insert(b);
                    }
                }
            }
        }
        let adjacency = adjacency
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();

        let stop_line_cell = movements.iter().map(|m| cell_offset[m.from_link.0 + 1] - 1).collect();
        Ok(Network {
            links,
            intersections,
            movements,
            sources,
            sink_list: sinks.iter().copied().collect(),
            sinks,
            cell_offset,
            cell_params,
            upstream,
            downstream,
            link_movements: Csr::new(&link_movements),
            feeders: Csr::new(&feeders),
            movement_owner,
            stop_line_cell,
            source_of,
            adjacency,
        })
    }

    fn component_count(&self) -> usize {
        let n = self.links.len();
        if n == 0 {
            return 0;
        }
        let mut seen = vec![false; n];
        let mut components = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(l) = stack.pop() {
                for nb in &self.adjacency[l] {
                    if !seen[nb.0] {
                        seen[nb.0] = true;
                        stack.push(nb.0);
                    }
                }
            }
        }
        components
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn movement(&self, id: MovementId) -> &Movement {
        &self.movements[id.0]
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn sinks(&self) -> &BTreeSet<LinkId> {
        &self.sinks
    }

    /// Sink links, ascending.
    pub fn sink_list(&self) -> &[LinkId] {
        &self.sink_list
    }

    pub fn is_sink(&self, link: LinkId) -> bool {
        self.sinks.contains(&link)
    }

    pub fn cell_count(&self) -> usize {
        self.cell_params.len()
    }

    pub fn cell_params(&self) -> &[CellParams] {
        &self.cell_params
    }

    /// Flat cell index range of a link.
    pub fn cell_range(&self, link: LinkId) -> std::ops::Range<usize> {
        self.cell_offset[link.0]..self.cell_offset[link.0 + 1]
    }

    pub fn first_cell(&self, link: LinkId) -> usize {
        self.cell_offset[link.0]
    }

    pub fn last_cell(&self, link: LinkId) -> usize {
        self.cell_offset[link.0 + 1] - 1
    }

    /// Intersection at which the link originates, if any.
    pub fn upstream(&self, link: LinkId) -> Option<IntersectionId> {
        self.upstream[link.0]
    }

    /// Intersection at which the link terminates, if any.
    pub fn downstream(&self, link: LinkId) -> Option<IntersectionId> {
        self.downstream[link.0]
    }

    /// Movements leaving a link at its downstream intersection.
    pub fn movements_from(&self, link: LinkId) -> &[MovementId] {
        self.link_movements.row(link.0)
    }

    /// Movements discharging onto a link.
    pub fn movements_into(&self, link: LinkId) -> &[MovementId] {
        self.feeders.row(link.0)
    }

    /// Flat index of the last cell of the movement's approach.
    pub fn stop_line_cell(&self, movement: MovementId) -> usize {
        self.stop_line_cell[movement.0]
    }

    pub fn owner(&self, movement: MovementId) -> IntersectionId {
        self.movement_owner[movement.0]
    }

    pub fn source_index(&self, link: LinkId) -> Option<usize> {
        self.source_of[link.0]
    }

    /// Links sharing an intersection with `link`, ascending by id.
    pub fn adjacent_links(&self, link: LinkId) -> &[LinkId] {
        &self.adjacency[link.0]
    }

    /// Links with movements at the intersection (its approaches), ascending.
    pub fn incoming_links(&self, node: IntersectionId) -> Vec<LinkId> {
        let set: BTreeSet<LinkId> = self.intersections[node.0]
            .movements
            .iter()
            .map(|m| self.movements[m.0].from_link)
            .collect();
        set.into_iter().collect()
    }

    /// Links fed by the intersection, ascending.
    pub fn outgoing_links(&self, node: IntersectionId) -> Vec<LinkId> {
        let set: BTreeSet<LinkId> = self.intersections[node.0]
            .movements
            .iter()
            .map(|m| self.movements[m.0].to_link)
            .collect();
        set.into_iter().collect()
    }

    /// Total holding capacity of a link.
    pub fn link_capacity(&self, link: LinkId) -> f64 {
        self.links[link.0].cells.iter().map(|c| c.n_max).sum()
    }
}
