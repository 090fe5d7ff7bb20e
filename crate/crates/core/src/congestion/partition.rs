use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::level::CongestionLevel;
use crate::network::{IntersectionId, LinkId, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub usize);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    /// Ascending.
    pub links: Vec<LinkId>,
    /// Intersections this region controls, ascending.
    pub intersections: Vec<IntersectionId>,
    pub level: CongestionLevel,
}

/// A link whose upstream and downstream intersections are controlled by
/// different regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryLink {
    pub link: LinkId,
    /// Region controlling the upstream intersection (exports onto the link).
    pub upstream: RegionId,
    /// Region controlling the downstream intersection (imports the link).
    pub downstream: RegionId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub regions: Vec<Region>,
    pub boundary_links: Vec<BoundaryLink>,
    /// Region of every link.
    pub link_region: Vec<RegionId>,
    /// Region of every intersection.
    pub intersection_region: Vec<RegionId>,
}

impl Partition {
    /// Every link and intersection in one region at the given level.
    pub fn single(network: &Network, level: CongestionLevel) -> Self {
        let regions = vec![Region {
            id: RegionId(0),
            links: network.links().iter().map(|l| l.id).collect(),
            intersections: network.intersections().iter().map(|i| i.id).collect(),
            level,
        }];
        Partition {
            regions,
            boundary_links: Vec::new(),
            link_region: vec![RegionId(0); network.links().len()],
            intersection_region: vec![RegionId(0); network.intersections().len()],
        }
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0]
    }

    /// Compact description such as `R0:C[3i/7l] R1:F[6i/41l]`.
    pub fn summary(&self) -> String {
        self.regions
            .iter()
            .map(|r| {
                format!(
                    "{}:{}[{}i/{}l]",
                    r.id,
                    r.level.code(),
                    r.intersections.len(),
                    r.links.len()
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Region growing over the link adjacency graph.
///
/// Seeds are taken highest level first (ties: lowest link id) and grown
/// breadth-first over same-level neighbours until exhausted or
/// `max_region_size` links. Single-link regions are then merged into their
/// lowest-level neighbouring region (ties: lowest region id), which keeps its
/// level. Each intersection is controlled by the region of its most congested
/// approach (ties: lowest region id).
pub fn cluster_links(
    network: &Network,
    levels: &[CongestionLevel],
    max_region_size: usize,
) -> Partition {
    let n = network.links().len();
    assert_eq!(levels.len(), n, "one level per link");
    let max_size = max_region_size.max(1);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&l| (std::cmp::Reverse(levels[l]), l));

    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut region_level: Vec<CongestionLevel> = Vec::new();
    for &seed in &order {
        if owner[seed].is_some() {
            continue;
        }
        let r = members.len();
        let level = levels[seed];
        let mut grown = vec![seed];
        owner[seed] = Some(r);
        let mut frontier = VecDeque::from([seed]);
        'grow: while let Some(l) = frontier.pop_front() {
            for nb in network.adjacent_links(LinkId(l)) {
                if grown.len() >= max_size {
                    break 'grow;
                }
                let nb = nb.0;
                if owner[nb].is_none() && levels[nb] == level {
                    owner[nb] = Some(r);
                    grown.push(nb);
                    frontier.push_back(nb);
                }
            }
        }
        members.push(grown);
        region_level.push(level);
    }

    let mut alive = vec![true; members.len()];
    for r in 0..members.len() {
        if members[r].len() != 1 {
            continue;
        }
        let link = members[r][0];
        let host = network
            .adjacent_links(LinkId(link))
            .iter()
            .filter_map(|nb| owner[nb.0])
            .filter(|&o| o != r)
            .min_by_key(|&o| (region_level[o], o));
        if let Some(h) = host {
            members[h].push(link);
            members[r].clear();
            owner[link] = Some(h);
            alive[r] = false;
        }
    }

    let mut remap = vec![usize::MAX; members.len()];
    let mut regions = Vec::new();
    for (r, links) in members.into_iter().enumerate() {
        if !alive[r] {
            continue;
        }
        remap[r] = regions.len();
        let mut links: Vec<LinkId> = links.into_iter().map(LinkId).collect();
        links.sort();
        regions.push(Region {
            id: RegionId(regions.len()),
            links,
            intersections: Vec::new(),
            level: region_level[r],
        });
    }
    let link_region: Vec<RegionId> = owner
        .into_iter()
        .map(|o| RegionId(remap[o.expect("every link is assigned")]))
        .collect();

    let mut intersection_region = Vec::with_capacity(network.intersections().len());
    for node in network.intersections() {
        let r = network
            .incoming_links(node.id)
            .into_iter()
            .map(|l| link_region[l.0])
            .min_by_key(|r| (std::cmp::Reverse(regions[r.0].level), *r))
            .expect("intersections have at least one approach");
        regions[r.0].intersections.push(node.id);
        intersection_region.push(r);
    }

    let boundary_links = boundary_links_of(network, &intersection_region);
    Partition {
        regions,
        boundary_links,
        link_region,
        intersection_region,
    }
}

pub(crate) fn boundary_links_of(
    network: &Network,
    intersection_region: &[RegionId],
) -> Vec<BoundaryLink> {
    network
        .links()
        .iter()
        .filter_map(|l| {
            let up = intersection_region[network.upstream(l.id)?.0];
            let down = intersection_region[network.downstream(l.id)?.0];
            (up != down).then_some(BoundaryLink {
                link: l.id,
                upstream: up,
                downstream: down,
            })
        })
        .collect()
}

/// Regions keyed by the intersections they control, ignoring link sets.
pub fn regions_by_intersection(partition: &Partition) -> Vec<BTreeSet<IntersectionId>> {
    partition
        .regions
        .iter()
        .map(|r| r.intersections.iter().copied().collect())
        .collect()
}
