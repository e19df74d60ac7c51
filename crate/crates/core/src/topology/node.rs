use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{GroupElement, GroupParams};
use crate::digest::sha256;

/// Public identity of a node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    #[serde(with = "hex::serde")]
    pub id: [u8; 32],
    pub public_key: GroupElement,
}

impl NodeId {
    /// Deterministic identity for the `index`-th simulated node.
    pub fn derive(index: u32, params: &GroupParams) -> NodeId {
        let id = sha256(&[b"unitychain/node", &index.to_be_bytes()]);
        let sk = sha256(&[b"unitychain/node-key", &id]);
        let mut head = [0u8; 8];
        head.copy_from_slice(&sk[..8]);
        NodeId { id, public_key: params.commit(params.scalar(u64::from_be_bytes(head))) }
    }

    pub fn short(&self) -> String {
        hex::encode(&self.id[..4])
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Node({})", self.short())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}
