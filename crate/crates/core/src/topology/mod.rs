//! Node identities, strand configurations, key routing and leadership.

mod config;
mod node;
mod partition;

pub use config::{
    carryover_check, leadership_conflict_check, majority_threshold, permute_configuration, resolve_leadership_conflict,
    select_leader, shuffle_members, GroupKeyRef, NetworkConfiguration,
};
pub use node::NodeId;
pub use partition::{route_key, KeyPredicate, KeyRange, KeyRangePartition, PartitionDefect, PartitionMode};

/// Position of a node within one strand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct LogicalPosition {
    pub strand: crate::chain::StrandId,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("configuration has no members")]
    EmptyConfiguration,
}
