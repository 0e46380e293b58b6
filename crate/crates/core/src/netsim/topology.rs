//! Static node placement and the unit-disk adjacency it induces.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NodeId, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

/// Static network topology: node coordinates plus the symmetric,
/// irreflexive neighbor relation of all pairs within radio range.
#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<NodePosition>,
    pub radio_radius: f64,
    pub area: (f64, f64),
    /// Sorted neighbor lists, indexed by node id.
    adjacency: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Builds a topology from explicit coordinates. Node ids must be the
    /// dense range `0..nodes.len()`.
    pub fn from_nodes(
        nodes: Vec<NodePosition>,
        area: (f64, f64),
        radio_radius: f64,
    ) -> Result<Topology, SimError> {
        if radio_radius <= 0.0 {
            return Err(SimError::BadRadius(radio_radius));
        }
        let mut seen = vec![false; nodes.len()];
        for n in &nodes {
            let idx = n.id as usize;
            if idx >= nodes.len() || seen[idx] {
                return Err(SimError::DuplicateNode(n.id));
            }
            seen[idx] = true;
            if n.x < 0.0 || n.y < 0.0 || n.x > area.0 || n.y > area.1 {
                return Err(SimError::OutOfArea(n.id));
            }
        }
        let mut by_id = nodes.clone();
        by_id.sort_by_key(|n| n.id);
        let mut adjacency = vec![Vec::new(); by_id.len()];
        for i in 0..by_id.len() {
            for j in (i + 1)..by_id.len() {
                let dx = by_id[i].x - by_id[j].x;
                let dy = by_id[i].y - by_id[j].y;
                if (dx * dx + dy * dy).sqrt() <= radio_radius {
                    adjacency[i].push(by_id[j].id);
                    adjacency[j].push(by_id[i].id);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Topology {
            nodes: by_id,
            radio_radius,
            area,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id as usize]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id as usize].len()
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.adjacency[a as usize].binary_search(&b).is_ok()
    }

    /// Hop distances from `from` to every node; `None` for unreachable.
    pub fn hop_distances(&self, from: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        dist[from as usize] = Some(0);
        let mut frontier = std::collections::VecDeque::new();
        frontier.push_back(from);
        while let Some(u) = frontier.pop_front() {
            let du = dist[u as usize].unwrap();
            for &v in self.neighbors(u) {
                if dist[v as usize].is_none() {
                    dist[v as usize] = Some(du + 1);
                    frontier.push_back(v);
                }
            }
        }
        dist
    }

    /// Size of the largest connected component.
    pub fn largest_component(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut best = 0;
        for start in 0..self.len() as NodeId {
            if seen[start as usize] {
                continue;
            }
            let mut size = 0;
            let mut stack = vec![start];
            seen[start as usize] = true;
            while let Some(u) = stack.pop() {
                size += 1;
                for &v in self.neighbors(u) {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        stack.push(v);
                    }
                }
            }
            best = best.max(size);
        }
        best
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() as f64 / self.len() as f64
    }
}

/// Minimum component size required to host a 7-hop connection.
pub const MIN_COMPONENT: usize = 8;

/// Places `node_count` nodes uniformly at random in the given area and
/// derives unit-disk adjacency. Deterministic for a fixed seed. Rejects
/// placements whose largest connected component cannot host a 7-hop
/// connection.
pub fn build_topology(
    node_count: usize,
    area_w: f64,
    area_h: f64,
    radio_radius: f64,
    seed: u64,
) -> Result<Topology, SimError> {
    if node_count < 2 {
        return Err(SimError::TooFewNodes {
            min: 2,
            got: node_count,
        });
    }
    if radio_radius <= 0.0 {
        return Err(SimError::BadRadius(radio_radius));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<NodePosition> = (0..node_count)
        .map(|id| NodePosition {
            id: id as NodeId,
            x: rng.gen_range(0.0..area_w),
            y: rng.gen_range(0.0..area_h),
        })
        .collect();
    let topo = Topology::from_nodes(nodes, (area_w, area_h), radio_radius)?;
    if topo.largest_component() < MIN_COMPONENT.min(node_count) {
        return Err(SimError::Fragmented {
            seed,
            required: MIN_COMPONENT.min(node_count),
        });
    }
    Ok(topo)
}

/// Convenience for tests: nodes on a horizontal line with the given
/// spacing, radius chosen so only consecutive nodes are adjacent.
pub fn line_topology(count: usize, spacing: f64) -> Topology {
    let nodes = (0..count)
        .map(|i| NodePosition {
            id: i as NodeId,
            x: i as f64 * spacing,
            y: 0.0,
        })
        .collect();
    Topology::from_nodes(nodes, (count as f64 * spacing, 1.0), spacing * 1.2).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_within_radius_are_adjacent() {
        let topo = Topology::from_nodes(
            vec![
                NodePosition { id: 0, x: 0.0, y: 0.0 },
                NodePosition { id: 1, x: 50.0, y: 0.0 },
            ],
            (200.0, 200.0),
            100.0,
        )
        .unwrap();
        assert!(topo.are_adjacent(0, 1));
        assert!(topo.are_adjacent(1, 0));
        assert!(!topo.are_adjacent(0, 0));
    }

    #[test]
    fn two_nodes_beyond_radius_are_not_adjacent() {
        let topo = Topology::from_nodes(
            vec![
                NodePosition { id: 0, x: 0.0, y: 0.0 },
                NodePosition { id: 1, x: 150.0, y: 0.0 },
            ],
            (200.0, 200.0),
            100.0,
        )
        .unwrap();
        assert!(!topo.are_adjacent(0, 1));
        assert_eq!(topo.neighbors(0), &[] as &[NodeId]);
    }

    #[test]
    fn mean_degree_close_to_uniform_placement_expectation() {
        // Expected degree pi r^2 / A * (n-1) = 6.25 before border effects;
        // verified empirically within +-15% over 20 seeds.
        let mut total = 0.0;
        for seed in 0..20 {
            let topo = build_topology(200, 1000.0, 1000.0, 100.0, seed).unwrap();
            total += topo.mean_degree();
        }
        let mean = total / 20.0;
        let expected = std::f64::consts::PI * 100.0 * 100.0 / 1_000_000.0 * 199.0;
        assert!(
            (mean - expected).abs() / expected < 0.15,
            "mean degree {mean}, expected about {expected}"
        );
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = build_topology(50, 500.0, 500.0, 100.0, 9).unwrap();
        let b = build_topology(50, 500.0, 500.0, 100.0, 9).unwrap();
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(na, nb);
        }
    }

    #[test]
    fn fragmented_placement_rejected() {
        // 8 nodes in a huge area with a tiny radius cannot form a
        // component of size 8.
        let err = build_topology(8, 100_000.0, 100_000.0, 1.0, 1).unwrap_err();
        assert!(matches!(err, SimError::Fragmented { .. }));
    }

    #[test]
    fn adjacency_is_symmetric_and_irreflexive() {
        let topo = build_topology(100, 800.0, 800.0, 120.0, 4).unwrap();
        for u in 0..topo.len() as NodeId {
            for &v in topo.neighbors(u) {
                assert_ne!(u, v);
                assert!(topo.are_adjacent(v, u));
            }
        }
    }

    #[test]
    fn hop_distances_on_line() {
        let topo = line_topology(5, 50.0);
        let d = topo.hop_distances(0);
        assert_eq!(d, vec![Some(0), Some(1), Some(2), Some(3), Some(4)]);
    }
}
