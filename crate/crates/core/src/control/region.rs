use std::collections::{BTreeMap, BTreeSet};

use crate::network::{
    DemandProfile, IntersectionDef, IntersectionId, Link, LinkId, Movement, MovementId, Network,
    SimState, Source, TopologyError, TurningRatios,
};

/// How vehicles reach a region model's entry link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entry {
    /// Exogenous demand of the given global source.
    Demand(usize),
    /// Discharge of an intersection controlled by another region.
    Import(LinkId),
    /// Nothing enters.
    Closed,
}

/// Standalone copy of the part of a network around a set of intersections.
///
/// Holds every link approaching or leaving those intersections. Links fed by
/// an outside intersection become sources and links draining into one become
/// sinks, so the copy can be simulated on its own. Local ids are assigned in
/// ascending global order.
#[derive(Clone, Debug)]
pub struct RegionModel {
    network: Network,
    links: Vec<LinkId>,
    intersections: Vec<IntersectionId>,
    movements: Vec<MovementId>,
    entries: Vec<Entry>,
    /// `(local, global)` links draining into another region's intersection.
    exports: Vec<(LinkId, LinkId)>,
    local_links: BTreeMap<LinkId, LinkId>,
}

impl RegionModel {
    pub fn extract(global: &Network, nodes: &[IntersectionId]) -> Result<Self, TopologyError> {
        let nodes: BTreeSet<IntersectionId> = nodes.iter().copied().collect();
        let inside = |n: Option<IntersectionId>| n.is_some_and(|n| nodes.contains(&n));

        let mut link_set = BTreeSet::new();
        for &n in &nodes {
            link_set.extend(global.incoming_links(n));
            link_set.extend(global.outgoing_links(n));
        }
        let links: Vec<LinkId> = link_set.into_iter().collect();
        let local_links: BTreeMap<LinkId, LinkId> = links
            .iter()
            .enumerate()
            .map(|(i, &g)| (g, LinkId(i)))
            .collect();

        let local_link_defs = links
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let l = global.link(g);
                Link {
                    id: LinkId(i),
                    cells: l.cells.clone(),
                    lanes: l.lanes,
                }
            })
            .collect();

        let intersections: Vec<IntersectionId> = nodes.iter().copied().collect();
        let mut movements = Vec::new();
        let mut defs = Vec::with_capacity(intersections.len());
        for (i, &n) in intersections.iter().enumerate() {
            let node = global.intersection(n);
            let mut local_of = BTreeMap::new();
            let mut moves = Vec::with_capacity(node.movements.len());
            for &m in &node.movements {
                let gm = global.movement(m);
                let id = MovementId(movements.len());
                local_of.insert(m, id);
                movements.push(m);
                moves.push(Movement {
                    id,
                    from_link: local_links[&gm.from_link],
                    to_link: local_links[&gm.to_link],
                    saturation_flow: gm.saturation_flow,
                    discharge_headway: gm.discharge_headway,
                });
            }
            defs.push(IntersectionDef {
                id: IntersectionId(i),
                movements: moves,
                phases: node
                    .phases
                    .iter()
                    .map(|ph| ph.iter().map(|m| local_of[m]).collect())
                    .collect(),
                lost_time_per_phase: node.lost_time_per_phase,
            });
        }

        let mut entries = Vec::new();
        let mut sources = Vec::new();
        let mut sinks = BTreeSet::new();
        let mut exports = Vec::new();
        for (i, &g) in links.iter().enumerate() {
            let local = LinkId(i);
            let up = global.upstream(g);
            let down = global.downstream(g);
            if !inside(up) {
                let (entry, profile) = match (up, global.source_index(g)) {
                    (Some(_), _) => (Entry::Import(g), DemandProfile::zero()),
                    (None, Some(s)) => (Entry::Demand(s), global.sources()[s].profile.clone()),
                    (None, None) => (Entry::Closed, DemandProfile::zero()),
                };
                entries.push(entry);
                sources.push(Source {
                    link: local,
                    profile,
                });
            }
            if !inside(down) {
                sinks.insert(local);
                if down.is_some() {
                    exports.push((local, g));
                }
            }
        }

        let network = Network::new_unchecked_connectivity(local_link_defs, defs, sources, sinks)?;
        Ok(RegionModel {
            network,
            links,
            intersections,
            movements,
            entries,
            exports,
            local_links,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Global id of each local link.
    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    /// Global id of each local intersection.
    pub fn intersections(&self) -> &[IntersectionId] {
        &self.intersections
    }

    /// Entry kind of each local source.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn exports(&self) -> &[(LinkId, LinkId)] {
        &self.exports
    }

    /// Global ids of the links imported from other regions.
    pub fn imports(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.entries.iter().filter_map(|e| match e {
            Entry::Import(l) => Some(*l),
            _ => None,
        })
    }

    pub fn local_link(&self, global: LinkId) -> Option<LinkId> {
        self.local_links.get(&global).copied()
    }

    /// Copy of the global state restricted to this region. Imported links
    /// start with empty entry queues; demand entries keep theirs.
    pub fn localize_state(&self, global: &Network, state: &SimState) -> SimState {
        let mut local = SimState::empty(&self.network, state.dt);
        local.step = state.step;
        for (i, &g) in self.links.iter().enumerate() {
            let dst = self.network.cell_range(LinkId(i));
            local.cells[dst].copy_from_slice(&state.cells[global.cell_range(g)]);
        }
        for (i, &m) in self.movements.iter().enumerate() {
            local.queues[i] = state.queues[m.0];
        }
        for (s, e) in self.entries.iter().enumerate() {
            if let Entry::Demand(gs) = *e {
                local.source_queues[s] = state.source_queues[gs];
            }
        }
        for (i, &n) in self.intersections.iter().enumerate() {
            local.active[i] = state.active[n.0];
        }
        local.initial_total = local.network_total();
        local
    }

    pub fn localize_ratios(&self, ratios: &TurningRatios) -> TurningRatios {
        TurningRatios::from_raw(self.movements.iter().map(|&m| ratios.get(m)).collect())
    }
}
