//! Declarative scenario files (TOML) describing one experiment's network,
//! traffic, misbehavior parameters and schedule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::connection::{ConnectionsSpec, EndpointPolicy};
use super::misbehavior::{plan_misbehavior, MisbehaviorKind, MisbehaviorPlan, PlanSpec, WormholeSpec};
use super::topology::{build_topology, NodePosition, Topology};
use super::{NodeId, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of uniformly placed nodes; ignored when `nodes` is given.
    #[serde(default = "default_node_count")]
    pub node_count: usize,
    /// Area width and height in meters.
    pub area: [f64; 2],
    pub radio_radius: f64,
    pub sim_duration: f64,
    /// Base seed: seeds the topology and, mixed with the run seed and
    /// misbehavior kind, every simulation run.
    pub seed: u64,
    /// Explicit node coordinates for hand-built topologies.
    #[serde(default)]
    pub nodes: Option<Vec<NodePosition>>,
    pub connections: ScenarioConnections,
    #[serde(default)]
    pub misbehavior: ScenarioMisbehavior,
}

fn default_node_count() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConnections {
    #[serde(default = "default_conn_count")]
    pub count: usize,
    #[serde(default = "default_hops")]
    pub hops: u32,
    /// Explicit (source, destination) pairs override `count`/`hops`.
    #[serde(default)]
    pub pairs: Option<Vec<(NodeId, NodeId)>>,
    pub injection_interval: f64,
    pub packet_size: u32,
    pub delta: f64,
    pub lambda: f64,
}

fn default_conn_count() -> usize {
    10
}

fn default_hops() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMisbehavior {
    /// Nodes executing dropping (dropping runs) or delaying (delaying runs).
    #[serde(default = "default_affected")]
    pub affected_nodes: usize,
    #[serde(default = "default_prob")]
    pub prob: f64,
    /// Seconds a delayed packet is held.
    #[serde(default = "default_delay")]
    pub delay: f64,
    #[serde(default = "default_wormholes")]
    pub wormhole_count: usize,
    #[serde(default = "default_separation")]
    pub min_hop_separation: u32,
}

fn default_affected() -> usize {
    30
}
fn default_prob() -> f64 {
    0.30
}
fn default_delay() -> f64 {
    0.1
}
fn default_wormholes() -> usize {
    3
}
fn default_separation() -> u32 {
    8
}

impl Default for ScenarioMisbehavior {
    fn default() -> Self {
        ScenarioMisbehavior {
            affected_nodes: default_affected(),
            prob: default_prob(),
            delay: default_delay(),
            wormhole_count: default_wormholes(),
            min_hop_separation: default_separation(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, SimError> {
        toml::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Scenario, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// The topology shared by every run of the scenario.
    pub fn topology(&self) -> Result<Topology, SimError> {
        match &self.nodes {
            Some(nodes) => {
                Topology::from_nodes(nodes.clone(), (self.area[0], self.area[1]), self.radio_radius)
            }
            None => build_topology(
                self.node_count,
                self.area[0],
                self.area[1],
                self.radio_radius,
                self.seed,
            ),
        }
    }

    pub fn connections_spec(&self) -> ConnectionsSpec {
        let endpoints = match &self.connections.pairs {
            Some(pairs) => EndpointPolicy::Explicit(pairs.clone()),
            None => EndpointPolicy::RandomPairs {
                count: self.connections.count,
                hops: self.connections.hops,
            },
        };
        ConnectionsSpec {
            endpoints,
            injection_interval: self.connections.injection_interval,
            packet_size: self.connections.packet_size,
            delta: self.connections.delta,
            lambda: self.connections.lambda,
        }
    }

    /// Misbehavior plan for one run kind, deterministic per run seed.
    pub fn plan(
        &self,
        topology: &Topology,
        kind: MisbehaviorKind,
        run_seed: u64,
    ) -> Result<MisbehaviorPlan, SimError> {
        let seed = derive_run_seed(self.seed, kind, run_seed) ^ 0x706c616e; // decouple from traffic
        let mut plan = match kind {
            MisbehaviorKind::None => MisbehaviorPlan::none(),
            MisbehaviorKind::Dropping | MisbehaviorKind::Delaying => plan_misbehavior(
                topology,
                kind,
                PlanSpec::Count(self.misbehavior.affected_nodes),
                seed,
            )?,
            MisbehaviorKind::Wormhole => plan_misbehavior(
                topology,
                kind,
                PlanSpec::Wormholes(WormholeSpec {
                    count: self.misbehavior.wormhole_count,
                    min_hop_separation: self.misbehavior.min_hop_separation,
                }),
                seed,
            )?,
        };
        plan.drop_or_delay_prob = self.misbehavior.prob;
        plan.delay_amount = self.misbehavior.delay;
        Ok(plan)
    }
}

/// Mixes the scenario base seed, the misbehavior kind and the run seed
/// into the seed of one simulation run (splitmix64 finalizer).
pub fn derive_run_seed(base: u64, kind: MisbehaviorKind, run_seed: u64) -> u64 {
    let kind_ix = match kind {
        MisbehaviorKind::None => 0u64,
        MisbehaviorKind::Dropping => 1,
        MisbehaviorKind::Delaying => 2,
        MisbehaviorKind::Wormhole => 3,
    };
    let mut x = base
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(kind_ix.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(run_seed.wrapping_mul(0x94d049bb133111eb));
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
area = [200.0, 10.0]
radio_radius = 60.0
sim_duration = 100.0
seed = 1

[[nodes]]
id = 0
x = 0.0
y = 5.0

[[nodes]]
id = 1
x = 50.0
y = 5.0

[[nodes]]
id = 2
x = 100.0
y = 5.0

[connections]
pairs = [[0, 2]]
injection_interval = 2.0
packet_size = 68
delta = 100.0
lambda = 0.0
"#;

    #[test]
    fn parses_minimal_scenario() {
        let sc = Scenario::from_toml(MINIMAL).unwrap();
        let topo = sc.topology().unwrap();
        assert_eq!(topo.len(), 3);
        assert!(topo.are_adjacent(0, 1));
        assert!(!topo.are_adjacent(0, 2));
        match sc.connections_spec().endpoints {
            EndpointPolicy::Explicit(pairs) => assert_eq!(pairs, vec![(0, 2)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = Scenario::from_toml("area = [1.0, 1.0]\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, SimError::Scenario(_)));
    }

    #[test]
    fn run_seed_mixing_separates_kinds_and_seeds() {
        let a = derive_run_seed(1, MisbehaviorKind::None, 0);
        let b = derive_run_seed(1, MisbehaviorKind::Dropping, 0);
        let c = derive_run_seed(1, MisbehaviorKind::None, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_run_seed(1, MisbehaviorKind::None, 0));
    }

    #[test]
    fn round_trips_through_toml() {
        let sc = Scenario::from_toml(MINIMAL).unwrap();
        let text = sc.to_toml();
        let back = Scenario::from_toml(&text).unwrap();
        assert_eq!(sc, back);
    }
}
