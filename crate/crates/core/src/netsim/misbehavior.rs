//! Misbehavior plans: which nodes misbehave and how.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::topology::Topology;
use super::{NodeId, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MisbehaviorKind {
    None,
    Dropping,
    Delaying,
    Wormhole,
}

impl MisbehaviorKind {
    pub const ALL: [MisbehaviorKind; 4] = [
        MisbehaviorKind::None,
        MisbehaviorKind::Dropping,
        MisbehaviorKind::Delaying,
        MisbehaviorKind::Wormhole,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MisbehaviorKind::None => "normal",
            MisbehaviorKind::Dropping => "dropping",
            MisbehaviorKind::Delaying => "delaying",
            MisbehaviorKind::Wormhole => "wormhole",
        }
    }
}

/// A private out-of-band link between two distant nodes. Both endpoints
/// tunnel packets to the peer when the tunnel shortens the route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wormhole {
    pub entry: NodeId,
    pub exit: NodeId,
    pub min_hop_separation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WormholeSpec {
    pub count: usize,
    pub min_hop_separation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisbehaviorPlan {
    pub kind: MisbehaviorKind,
    /// Nodes executing dropping or delaying.
    pub affected_nodes: BTreeSet<NodeId>,
    pub drop_or_delay_prob: f64,
    /// Seconds added to a delayed packet.
    pub delay_amount: f64,
    pub wormholes: Vec<Wormhole>,
}

impl MisbehaviorPlan {
    pub fn none() -> Self {
        MisbehaviorPlan {
            kind: MisbehaviorKind::None,
            affected_nodes: BTreeSet::new(),
            drop_or_delay_prob: 0.30,
            delay_amount: 0.1,
            wormholes: Vec::new(),
        }
    }

    /// The wormhole peer of `node`, if it is an endpoint.
    pub fn wormhole_peer(&self, node: NodeId) -> Option<NodeId> {
        for w in &self.wormholes {
            if w.entry == node {
                return Some(w.exit);
            }
            if w.exit == node {
                return Some(w.entry);
            }
        }
        None
    }

    /// True if `node` misbehaves under this plan: drops, delays, or is a
    /// wormhole endpoint.
    pub fn is_misbehaving(&self, node: NodeId) -> bool {
        self.affected_nodes.contains(&node) || self.wormhole_peer(node).is_some()
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.drop_or_delay_prob) {
            return Err(SimError::BadProbability(self.drop_or_delay_prob));
        }
        for &n in &self.affected_nodes {
            if n as usize >= topology.len() {
                return Err(SimError::UnknownNode(n));
            }
        }
        for w in &self.wormholes {
            let dist = topology.hop_distances(w.entry)[w.exit as usize];
            match dist {
                Some(d) if d >= w.min_hop_separation => {}
                _ => {
                    return Err(SimError::WormholeSeparation {
                        requested: self.wormholes.len(),
                        separation: w.min_hop_separation,
                        max_achievable: dist.unwrap_or(0),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Parameter block for [`plan_misbehavior`].
#[derive(Debug, Clone, Copy)]
pub enum PlanSpec {
    Count(usize),
    Wormholes(WormholeSpec),
}

/// Selects misbehaving nodes (or wormhole pairs) deterministically from
/// the seed. Wormhole pairs satisfy the hop-separation constraint
/// computed by breadth-first search on the misbehavior-free topology.
pub fn plan_misbehavior(
    topology: &Topology,
    kind: MisbehaviorKind,
    spec: PlanSpec,
    seed: u64,
) -> Result<MisbehaviorPlan, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = MisbehaviorPlan::none();
    plan.kind = kind;
    match kind {
        MisbehaviorKind::None => Ok(plan),
        MisbehaviorKind::Dropping | MisbehaviorKind::Delaying => {
            let count = match spec {
                PlanSpec::Count(c) => c,
                PlanSpec::Wormholes(_) => 0,
            };
            if count > topology.len() {
                return Err(SimError::TooManyAffected {
                    requested: count,
                    available: topology.len(),
                });
            }
            let mut ids: Vec<NodeId> = (0..topology.len() as NodeId).collect();
            ids.shuffle(&mut rng);
            plan.affected_nodes = ids.into_iter().take(count).collect();
            Ok(plan)
        }
        MisbehaviorKind::Wormhole => {
            let spec = match spec {
                PlanSpec::Wormholes(w) => w,
                PlanSpec::Count(c) => WormholeSpec {
                    count: c,
                    min_hop_separation: 15,
                },
            };
            let n = topology.len() as NodeId;
            let mut candidates: Vec<(NodeId, NodeId)> = Vec::new();
            let mut max_achievable = 0;
            for a in 0..n {
                let dist = topology.hop_distances(a);
                for b in (a + 1)..n {
                    if let Some(d) = dist[b as usize] {
                        max_achievable = max_achievable.max(d);
                        if d >= spec.min_hop_separation {
                            candidates.push((a, b));
                        }
                    }
                }
            }
            if candidates.len() < spec.count {
                return Err(SimError::WormholeSeparation {
                    requested: spec.count,
                    separation: spec.min_hop_separation,
                    max_achievable,
                });
            }
            candidates.shuffle(&mut rng);
            // Each node participates in at most one wormhole.
            let mut used: BTreeSet<NodeId> = BTreeSet::new();
            for (a, b) in candidates {
                if plan.wormholes.len() == spec.count {
                    break;
                }
                if used.contains(&a) || used.contains(&b) {
                    continue;
                }
                used.insert(a);
                used.insert(b);
                plan.wormholes.push(Wormhole {
                    entry: a,
                    exit: b,
                    min_hop_separation: spec.min_hop_separation,
                });
            }
            if plan.wormholes.len() < spec.count {
                return Err(SimError::WormholeSeparation {
                    requested: spec.count,
                    separation: spec.min_hop_separation,
                    max_achievable,
                });
            }
            Ok(plan)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::topology::line_topology;

    #[test]
    fn none_plan_is_empty() {
        let topo = line_topology(4, 50.0);
        let plan = plan_misbehavior(&topo, MisbehaviorKind::None, PlanSpec::Count(0), 1).unwrap();
        assert!(plan.affected_nodes.is_empty());
        assert!(plan.wormholes.is_empty());
        assert!(!plan.is_misbehaving(1));
    }

    #[test]
    fn line_of_16_has_unique_separation_15_pair() {
        let topo = line_topology(16, 50.0);
        let plan = plan_misbehavior(
            &topo,
            MisbehaviorKind::Wormhole,
            PlanSpec::Wormholes(WormholeSpec {
                count: 1,
                min_hop_separation: 15,
            }),
            3,
        )
        .unwrap();
        assert_eq!(plan.wormholes.len(), 1);
        let w = plan.wormholes[0];
        assert_eq!((w.entry, w.exit), (0, 15));
        assert_eq!(plan.wormhole_peer(0), Some(15));
        assert_eq!(plan.wormhole_peer(15), Some(0));
    }

    #[test]
    fn infeasible_separation_reports_maximum() {
        let topo = line_topology(10, 50.0);
        let err = plan_misbehavior(
            &topo,
            MisbehaviorKind::Wormhole,
            PlanSpec::Wormholes(WormholeSpec {
                count: 1,
                min_hop_separation: 15,
            }),
            3,
        )
        .unwrap_err();
        match err {
            SimError::WormholeSeparation { max_achievable, .. } => assert_eq!(max_achievable, 9),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dropping_selection_is_deterministic_and_distinct() {
        let topo = crate::netsim::topology::build_topology(60, 600.0, 600.0, 120.0, 7).unwrap();
        let a = plan_misbehavior(&topo, MisbehaviorKind::Dropping, PlanSpec::Count(20), 3).unwrap();
        let b = plan_misbehavior(&topo, MisbehaviorKind::Dropping, PlanSpec::Count(20), 3).unwrap();
        assert_eq!(a.affected_nodes, b.affected_nodes);
        assert_eq!(a.affected_nodes.len(), 20);
        let c = plan_misbehavior(&topo, MisbehaviorKind::Dropping, PlanSpec::Count(20), 4).unwrap();
        assert_ne!(a.affected_nodes, c.affected_nodes);
    }
}
