//! Deterministic discrete-event simulation of a network of nodes.
//!
//! Events are ordered by `(tick, sequence)`, and all randomness comes from
//! ChaCha20 streams derived from the run seed, so a scenario and seed fully
//! determine the event log.

mod invariants;
pub mod log;
mod runner;
mod scenario;
mod workload;

pub use invariants::check_invariants;
pub use log::{
    encode_record, parse_log, CycleBlockRecord, EpochBlockRecord, GenesisBlockRecord, LogError, LogRecord, TxEntry,
    LOG_VERSION,
};
pub use runner::{bootstrap_origin, initial_configurations, run_simulation, SimError, SimOutcome, Simulation};
pub use scenario::{ChurnAction, ChurnSpec, FaultKind, FaultSpec, LatencyModel, Scenario, Workload};
pub use workload::{generate_batch, poisson};
