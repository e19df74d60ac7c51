use std::collections::BTreeMap;

use crate::chain::BlockHash;
use crate::crypto::SignatureVerifier;
use crate::crypto::{aggregate, message_digest, AggregateSignature, GroupParams, RitualId, SignatureShare};
use crate::topology::{NetworkConfiguration, NodeId};

struct Collected {
    cycle: u64,
    shares: BTreeMap<NodeId, SignatureShare>,
    aggregate: Option<AggregateSignature>,
}

/// Signature shares gathered per (block, ritual).
#[derive(Default)]
pub(crate) struct SigBook {
    entries: BTreeMap<(BlockHash, RitualId), Collected>,
}

impl SigBook {
    /// Returns false for a duplicate.
    pub fn add(&mut self, hash: BlockHash, ritual: RitualId, share: SignatureShare, cycle: u64) -> bool {
        let entry = self.entries.entry((hash, ritual)).or_insert_with(|| Collected {
            cycle,
            shares: BTreeMap::new(),
            aggregate: None,
        });
        if entry.shares.contains_key(&share.signer) {
            return false;
        }
        entry.shares.insert(share.signer, share);
        true
    }

    /// Aggregates once a majority of `config` has signed and caches the result.
    pub fn aggregate(
        &mut self,
        hash: BlockHash,
        config: &NetworkConfiguration,
        group: &GroupParams,
        verifier: &impl SignatureVerifier,
    ) -> Option<AggregateSignature> {
        let entry = self.entries.get_mut(&(hash, config.group_key.ritual))?;
        if let Some(a) = &entry.aggregate {
            return Some(a.clone());
        }
        let need = config.majority().max(config.group_key.threshold);
        if entry.shares.len() < need {
            return None;
        }
        let digest = message_digest(&hash.0);
        let members = config.member_set();
        let chosen: Vec<SignatureShare> = entry
            .shares
            .values()
            .filter(|s| s.digest == digest && members.contains(&s.signer))
            .take(need)
            .copied()
            .collect();
        if chosen.len() < need {
            return None;
        }
        let sig = aggregate(group, &chosen, need).ok()?;
        if !verifier.verify_aggregate(&sig, config.group_key.public_key, &hash.0) {
            return None;
        }
        entry.aggregate = Some(sig.clone());
        Some(sig)
    }

    /// Drops everything first seen before `cycle`.
    pub fn prune(&mut self, cycle: u64) {
        self.entries.retain(|_, c| c.cycle >= cycle);
    }
}
