//! Canonical binary encoding used for block hashing.
//!
//! Layout rules, applied recursively in declaration order:
//!
//! * integers are big-endian (`u8`, `u32` for counts and thresholds, `u64`
//!   for heights, cycles, keys and group elements);
//! * fixed 32-byte values (ids, hashes, digests) are written raw;
//! * a [`NodeId`] is its 32-byte id followed by its 8-byte public key;
//! * lists are a `u32` count followed by the items;
//! * enums are a one-byte tag followed by their payload;
//! * every block encoding starts with a one-byte kind tag
//!   (`O` origin, `C` cycle, `E` epoch, `G` epoch genesis).
//!
//! Signatures, and configurations derived from signatures, are never part
//! of the encoding, so attaching them does not change a block's hash.

use crate::crypto::RitualId;
use crate::topology::{GroupKeyRef, KeyPredicate, KeyRangePartition, NetworkConfiguration, NodeId};

use super::block::{ProtocolParams, ShufflePolicy};
use super::StrandId;

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(kind: u8) -> Self {
        Encoder { buf: vec![kind] }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("list too long to encode"))
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn strand(&mut self, s: StrandId) -> &mut Self {
        self.u8(s.tag())
    }

    pub fn node(&mut self, n: &NodeId) -> &mut Self {
        self.raw(&n.id).u64(n.public_key.value())
    }

    pub fn nodes(&mut self, nodes: &[NodeId]) -> &mut Self {
        self.count(nodes.len());
        for n in nodes {
            self.node(n);
        }
        self
    }

    pub fn ritual(&mut self, r: &RitualId) -> &mut Self {
        self.raw(&r.encode())
    }

    pub fn group_key(&mut self, k: &GroupKeyRef) -> &mut Self {
        self.ritual(&k.ritual).u64(k.public_key.value()).count(k.threshold)
    }

    pub fn predicate(&mut self, p: &KeyPredicate) -> &mut Self {
        match p {
            KeyPredicate::All => self.u8(0),
            KeyPredicate::Even => self.u8(1),
            KeyPredicate::Odd => self.u8(2),
            KeyPredicate::Ranges(ranges) => {
                self.u8(3).count(ranges.len());
                for r in ranges {
                    self.u64(r.start).u64(r.end);
                }
                self
            }
        }
    }

    pub fn partition(&mut self, p: &KeyRangePartition) -> &mut Self {
        self.count(p.assignments.len());
        for (s, pred) in &p.assignments {
            self.strand(*s).predicate(pred);
        }
        self
    }

    pub fn configuration(&mut self, c: &NetworkConfiguration) -> &mut Self {
        self.strand(c.strand).nodes(&c.ordered_members).group_key(&c.group_key).predicate(&c.responsibility)
    }

    pub fn params(&mut self, p: &ProtocolParams) -> &mut Self {
        self.u64(p.cycles_per_epoch).u64(p.reshuffle_duration).count(p.join_threshold).count(p.strand_count);
        match p.topology_shuffle {
            ShufflePolicy::EveryCycle => self.u8(0),
            ShufflePolicy::EveryEpochs(k) => self.u8(1).u64(k),
            ShufflePolicy::Never => self.u8(2),
        };
        self.partition(&p.diverged_partition)
    }
}
