use serde::{Deserialize, Serialize};

use crate::chain::{BlockHash, CycleHeader, EpochHeader, GenesisHeader, StrandId};
use crate::crypto::{Dealing, RitualId, SignatureShare};
use crate::digest::Digest32;
use crate::topology::NodeId;

/// A client transaction; `key` decides which strand serves it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub key: u64,
    pub digest: Digest32,
    pub submitted_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Cycle,
    Epoch,
    Genesis,
}

/// Names the block a share signs. `strand` is `None` for epoch-level blocks,
/// whose `height` is the epoch index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRef {
    pub kind: BlockKind,
    pub strand: Option<StrandId>,
    pub height: u64,
    pub hash: BlockHash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolMessage {
    CycleProposal(CycleHeader),
    EpochProposal(EpochHeader),
    GenesisProposal(GenesisHeader),
    /// A signature share under the key of `ritual`.
    Share {
        block: BlockRef,
        ritual: RitualId,
        share: SignatureShare,
    },
    Dealing(Dealing),
    Complaint {
        ritual: RitualId,
        dealer: NodeId,
    },
    JoinRequest,
    LeaveNotice,
}

impl ProtocolMessage {
    pub fn label(&self) -> &'static str {
        match self {
            ProtocolMessage::CycleProposal(_) => "cycle_proposal",
            ProtocolMessage::EpochProposal(_) => "epoch_proposal",
            ProtocolMessage::GenesisProposal(_) => "genesis_proposal",
            ProtocolMessage::Share { .. } => "share",
            ProtocolMessage::Dealing(_) => "dealing",
            ProtocolMessage::Complaint { .. } => "complaint",
            ProtocolMessage::JoinRequest => "join_request",
            ProtocolMessage::LeaveNotice => "leave_notice",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Recipient {
    /// Every running node, the sender included.
    All,
    Nodes(Vec<NodeId>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Recipient,
    pub msg: ProtocolMessage,
}
