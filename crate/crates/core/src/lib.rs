//! Unitychain: intersecting blockchain strands that alternate between
//! serving the whole keyspace and reshuffling their membership, run inside
//! a deterministic discrete-event simulator.
//!
//! * [`crypto`]: secret sharing, Joint-Feldman DKG, unique threshold signatures.
//! * [`topology`]: configurations, VRF permutations, key routing, majorities.
//! * [`chain`]: block types, canonical hashing, validation.
//! * [`engine`]: the per-node protocol state machine.
//! * [`sim`]: event loop, latency, faults, workload, event log.
//! * [`metrics`]: scenario files, metrics over logs, reports.

pub mod chain;
pub mod crypto;
pub mod digest;
pub mod engine;
pub mod metrics;
pub mod sim;
pub mod topology;
