//! Connection schedules: constant-bit-rate unicast flows with randomized
//! lifetimes.

use serde::{Deserialize, Serialize};

use super::{NodeId, SimError};

/// Connection lifetime: the desired duration plus a uniformly random
/// fraction of the desired variance, `delta + r_u * lambda` seconds.
pub fn connection_duration(delta: f64, lambda: f64, r_u: f64) -> Result<f64, SimError> {
    if delta < 0.0 {
        return Err(SimError::NegativeDuration(delta));
    }
    if lambda < 0.0 {
        return Err(SimError::NegativeDuration(lambda));
    }
    if !(0.0..=1.0).contains(&r_u) {
        return Err(SimError::BadRandomFraction(r_u));
    }
    Ok(delta + r_u * lambda)
}

/// How connection endpoints are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EndpointPolicy {
    /// Fixed (source, destination) pairs; no replacement on expiry.
    Explicit(Vec<(NodeId, NodeId)>),
    /// `count` concurrent connections between random pairs at exactly
    /// `hops` hop distance; expired connections are replaced by new ones
    /// starting at previously unused sources.
    RandomPairs { count: usize, hops: u32 },
}

/// Declarative traffic description consumed by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionsSpec {
    pub endpoints: EndpointPolicy,
    /// Seconds between consecutive packet injections (CBR).
    pub injection_interval: f64,
    /// Data packet size in bytes.
    pub packet_size: u32,
    /// Desired connection duration in seconds.
    pub delta: f64,
    /// Desired variance of the connection duration in seconds.
    pub lambda: f64,
}

impl ConnectionsSpec {
    pub fn explicit_full_run(pairs: Vec<(NodeId, NodeId)>, sim_duration: f64) -> Self {
        ConnectionsSpec {
            endpoints: EndpointPolicy::Explicit(pairs),
            injection_interval: 2.0,
            packet_size: 68,
            delta: sim_duration,
            lambda: 0.0,
        }
    }
}

/// A realized connection: endpoints, the first established route and the
/// schedule actually used by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub connection_id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    /// First route established for this connection; empty if discovery
    /// never succeeded.
    pub path: Vec<NodeId>,
    pub start_time: f64,
    pub duration: f64,
    pub injection_interval: f64,
    pub packet_size: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_boundaries_and_midpoint() {
        assert_eq!(connection_duration(900.0, 300.0, 0.0).unwrap(), 900.0);
        assert_eq!(connection_duration(900.0, 300.0, 1.0).unwrap(), 1200.0);
        assert_eq!(connection_duration(900.0, 300.0, 0.5).unwrap(), 1050.0);
    }

    #[test]
    fn duration_rejects_out_of_range_fraction() {
        assert!(matches!(
            connection_duration(900.0, 300.0, 1.5),
            Err(SimError::BadRandomFraction(_))
        ));
        assert!(matches!(
            connection_duration(900.0, 300.0, -0.1),
            Err(SimError::BadRandomFraction(_))
        ));
    }

    #[test]
    fn duration_rejects_negative_parameters() {
        assert!(connection_duration(-1.0, 0.0, 0.5).is_err());
        assert!(connection_duration(10.0, -2.0, 0.5).is_err());
    }
}
