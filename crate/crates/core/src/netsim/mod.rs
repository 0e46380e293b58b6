//! Deterministic discrete-event simulator for a static multihop ad hoc
//! wireless network.
//!
//! The model is event-granular rather than signal-granular: unit-disk
//! propagation, an abstract RTS/CTS/DATA/ACK handshake with per-
//! neighborhood medium occupancy and exponential back-off, on-demand
//! route discovery (request flood, first reply wins, route error after
//! repeated delivery failures), unreliable datagram transport with
//! per-connection sequence numbers, and constant-bit-rate traffic.
//! Misbehavior is injected per plan: Bernoulli packet dropping or
//! delaying at selected forwarders, and wormholes that tunnel packets
//! over a private link invisible to overhearers.

mod connection;
mod engine;
mod misbehavior;
mod scenario;
mod topology;
mod trace;

pub use connection::{connection_duration, Connection, ConnectionsSpec, EndpointPolicy};
pub use engine::{run_simulation, SimReport};
pub use misbehavior::{
    plan_misbehavior, MisbehaviorKind, MisbehaviorPlan, PlanSpec, Wormhole, WormholeSpec,
};
pub use scenario::{derive_run_seed, Scenario, ScenarioConnections, ScenarioMisbehavior};
pub use topology::{build_topology, line_topology, NodePosition, Topology};
pub use trace::{EventKind, EventTrace, TraceEvent, BROADCAST};

use thiserror::Error;

/// Node identifier. `u32::MAX` is reserved for the broadcast address.
pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("need at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("radio radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("node placement from seed {seed} has no connected component of size >= {required}")]
    Fragmented { seed: u64, required: usize },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node {0} outside the configured area")]
    OutOfArea(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("r_u must lie in [0,1], got {0}")]
    BadRandomFraction(f64),
    #[error("negative duration parameter: {0}")]
    NegativeDuration(f64),
    #[error("misbehavior probability must lie in [0,1], got {0}")]
    BadProbability(f64),
    #[error("requested {requested} misbehaving nodes but the topology has only {available}")]
    TooManyAffected { requested: usize, available: usize },
    #[error(
        "cannot place {requested} wormholes at separation >= {separation} hops; \
         maximum achievable separation is {max_achievable}"
    )]
    WormholeSeparation {
        requested: usize,
        separation: u32,
        max_achievable: u32,
    },
    #[error("simulation duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("connection spec references unknown node {0}")]
    BadEndpoint(NodeId),
    #[error("no (source, destination) pair at hop distance {0} exists")]
    NoPairAtDistance(u32),
    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario error: {0}")]
    Scenario(String),
}
