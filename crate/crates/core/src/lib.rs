//! Ad hoc wireless network simulation with an integrated misbehavior
//! detection pipeline.
//!
//! The crate is organized along the stages of the pipeline:
//!
//! * [`netsim`] — deterministic discrete-event simulator for a static
//!   multihop wireless network with configurable misbehavior injection
//!   (packet dropping, packet delaying, wormholes). Produces packet-level
//!   event traces.
//! * [`features`] — turns an event trace into per-(observer, neighbor,
//!   time window) feature vectors: 24 features over the MAC, routing and
//!   transport layers, the nested subsets f0/f1/f2 and the composite
//!   vectors F0/F1/F2 built from a local and a two-hop-downstream sample.
//! * [`learn`] — decision tree induction with information gain, stratified
//!   cross-validation, wrapper-based forward feature selection and the
//!   detection-rate / FP-rate / classification-error measures.
//! * [`cascade`] — the two-stage classifier: a cheap composite-vector
//!   stage whose alarms trigger a costlier, more accurate local stage.
//! * [`energy`] — closed-form radio energy model comparing cascade
//!   monitoring against always-on promiscuous (watchdog) monitoring.
//! * [`pipeline`] — experiment orchestration shared by the CLI and the
//!   acceptance suite.

pub mod cascade;
pub mod energy;
pub mod features;
pub mod learn;
pub mod netsim;
pub mod pipeline;
