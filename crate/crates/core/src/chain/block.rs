use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::encoding::Encoder;
use super::{ChainError, StrandId};
use crate::crypto::AggregateSignature;
use crate::digest::{digest_newtype, sha256, Digest32};
use crate::topology::{GroupKeyRef, KeyPredicate, KeyRangePartition, NetworkConfiguration, NodeId};

digest_newtype!(
    /// SHA-256 of a block's canonical encoding.
    BlockHash
);

pub const MIN_MEMBERS: usize = 4;

/// How often strand topologies are re-randomised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShufflePolicy {
    /// Every cycle block permutes its parent's configuration.
    EveryCycle,
    /// Only the genesis of every k-th epoch permutes; orders are kept otherwise.
    EveryEpochs(u64),
    Never,
}

impl ShufflePolicy {
    pub fn permutes_cycles(self) -> bool {
        matches!(self, ShufflePolicy::EveryCycle)
    }

    /// Whether the genesis closing `epoch` (1-based) permutes.
    pub fn permutes_genesis(self, epoch: u64) -> bool {
        match self {
            ShufflePolicy::EveryCycle => true,
            ShufflePolicy::EveryEpochs(k) => k > 0 && epoch.is_multiple_of(k),
            ShufflePolicy::Never => false,
        }
    }
}

/// Protocol parameters fixed by the origin block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub cycles_per_epoch: u64,
    pub reshuffle_duration: u64,
    pub join_threshold: usize,
    pub strand_count: usize,
    pub topology_shuffle: ShufflePolicy,
    /// Partition restored at every epoch genesis.
    pub diverged_partition: KeyRangePartition,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            cycles_per_epoch: 10,
            reshuffle_duration: 3,
            join_threshold: 4,
            strand_count: 2,
            topology_shuffle: ShufflePolicy::EveryCycle,
            diverged_partition: KeyRangePartition::parity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub group_key: GroupKeyRef,
    pub signature: AggregateSignature,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginBlock {
    pub members: Vec<NodeId>,
    pub params: ProtocolParams,
    pub bootstrap: Option<Bootstrap>,
}

impl OriginBlock {
    pub fn hash(&self) -> BlockHash {
        let mut e = Encoder::new(b'O');
        e.nodes(&self.members).params(&self.params);
        BlockHash(sha256(&[&e.finish()]))
    }

    /// The single configuration that serves the whole keyspace before the split.
    pub fn initial_configuration(&self, group_key: GroupKeyRef) -> NetworkConfiguration {
        NetworkConfiguration {
            strand: StrandId::Positive,
            ordered_members: self.members.clone(),
            group_key,
            responsibility: KeyPredicate::All,
        }
    }
}

pub fn build_origin_block(members: &[NodeId], params: ProtocolParams) -> Result<OriginBlock, ChainError> {
    if members.len() < MIN_MEMBERS {
        return Err(ChainError::TooFewMembers { have: members.len(), need: MIN_MEMBERS });
    }
    let distinct: std::collections::BTreeSet<_> = members.iter().collect();
    if distinct.len() != members.len() {
        return Err(ChainError::DuplicateMember);
    }
    Ok(OriginBlock { members: members.to_vec(), params, bootstrap: None })
}

/// The signed part of a cycle block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleHeader {
    pub strand: StrandId,
    pub height: u64,
    pub cycle: u64,
    pub proposer: NodeId,
    pub parent_hash: BlockHash,
    pub tx_summary: Vec<Digest32>,
}

impl CycleHeader {
    pub fn hash(&self) -> BlockHash {
        let mut e = Encoder::new(b'C');
        e.strand(self.strand)
            .u64(self.height)
            .u64(self.cycle)
            .node(&self.proposer)
            .raw(&self.parent_hash.0)
            .count(self.tx_summary.len());
        for d in &self.tx_summary {
            e.raw(&d.0);
        }
        BlockHash(sha256(&[&e.finish()]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBlock {
    pub header: CycleHeader,
    /// Topology for the next cycle, derived from the signature.
    pub configuration: NetworkConfiguration,
    /// Majority signature of the configuration recorded in the parent.
    pub signature: AggregateSignature,
    /// Countersignature of the outgoing dominant configuration; only on the
    /// first block of the dominant strand after an epoch genesis.
    pub handover_signature: Option<AggregateSignature>,
}

impl CycleBlock {
    pub fn hash(&self) -> BlockHash {
        self.header.hash()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochHeader {
    /// Epoch index, starting at 1.
    pub height: u64,
    pub cycle: u64,
    pub proposer: NodeId,
    pub ascending: StrandId,
    pub descending: StrandId,
    pub responsibilities: KeyRangePartition,
    /// Membership admitted for the next period, sorted.
    pub next_members: Vec<NodeId>,
    pub parent_hashes: BTreeMap<StrandId, BlockHash>,
    /// Previous epoch block, or the origin.
    pub previous: BlockHash,
}

impl EpochHeader {
    pub fn hash(&self) -> BlockHash {
        let mut e = Encoder::new(b'E');
        e.u64(self.height)
            .u64(self.cycle)
            .node(&self.proposer)
            .strand(self.ascending)
            .strand(self.descending)
            .partition(&self.responsibilities)
            .nodes(&self.next_members)
            .count(self.parent_hashes.len());
        for (s, h) in &self.parent_hashes {
            e.strand(*s).raw(&h.0);
        }
        e.raw(&self.previous.0);
        BlockHash(sha256(&[&e.finish()]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochBlock {
    pub header: EpochHeader,
    pub ascending_signature: AggregateSignature,
    pub descending_signature: AggregateSignature,
}

impl EpochBlock {
    pub fn hash(&self) -> BlockHash {
        self.header.hash()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisHeader {
    pub epoch: u64,
    pub cycle: u64,
    pub proposer: NodeId,
    pub parent: BlockHash,
    pub new_configurations: BTreeMap<StrandId, NetworkConfiguration>,
    pub partition: KeyRangePartition,
}

impl GenesisHeader {
    pub fn hash(&self) -> BlockHash {
        let mut e = Encoder::new(b'G');
        e.u64(self.epoch).u64(self.cycle).node(&self.proposer).raw(&self.parent.0).count(self.new_configurations.len());
        for c in self.new_configurations.values() {
            e.configuration(c);
        }
        e.partition(&self.partition);
        BlockHash(sha256(&[&e.finish()]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochGenesisBlock {
    pub header: GenesisHeader,
    /// Signed first, by the epoch's submissive configuration.
    pub submissive_signature: AggregateSignature,
    /// Signed second, by the epoch's dominant configuration.
    pub dominant_signature: AggregateSignature,
}

impl EpochGenesisBlock {
    pub fn hash(&self) -> BlockHash {
        self.header.hash()
    }
}

/// Any block kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    Origin(OriginBlock),
    Cycle(CycleBlock),
    Epoch(EpochBlock),
    Genesis(EpochGenesisBlock),
}

pub fn hash_block(block: &Block) -> BlockHash {
    match block {
        Block::Origin(b) => b.hash(),
        Block::Cycle(b) => b.hash(),
        Block::Epoch(b) => b.hash(),
        Block::Genesis(b) => b.hash(),
    }
}
