//! Network configurations and the VRF permutation of their members.

use std::collections::BTreeSet;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{KeyPredicate, NodeId, TopologyError};
use crate::chain::StrandId;
use crate::crypto::{GroupElement, RitualId, VrfSeed};

/// Reference to the group key a configuration signs with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKeyRef {
    pub ritual: RitualId,
    pub public_key: GroupElement,
    pub threshold: usize,
}

/// Ordered assignment of nodes to slots within one strand.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfiguration {
    pub strand: StrandId,
    pub ordered_members: Vec<NodeId>,
    pub group_key: GroupKeyRef,
    /// Keys the configuration serves while the strands are diverged.
    pub responsibility: KeyPredicate,
}

impl NetworkConfiguration {
    pub fn len(&self) -> usize {
        self.ordered_members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_members.is_empty()
    }

    pub fn member_set(&self) -> BTreeSet<NodeId> {
        self.ordered_members.iter().copied().collect()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.ordered_members.contains(node)
    }

    pub fn slot_of(&self, node: &NodeId) -> Option<usize> {
        self.ordered_members.iter().position(|n| n == node)
    }

    pub fn majority(&self) -> usize {
        majority_threshold(self.len()).unwrap_or(usize::MAX)
    }
}

/// `ceil(0.51 * n)`.
pub fn majority_threshold(n: usize) -> Result<usize, TopologyError> {
    if n == 0 {
        return Err(TopologyError::EmptyConfiguration);
    }
    Ok((51 * n).div_ceil(100))
}

/// Uniform integer in `0..bound` by rejection on 64-bit draws.
fn bounded(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// Fisher-Yates over a ChaCha20 stream keyed by the seed.
pub fn shuffle_members(members: &[NodeId], seed: &VrfSeed) -> Vec<NodeId> {
    let mut out = members.to_vec();
    let mut rng = ChaCha20Rng::from_seed(seed.0);
    for i in (1..out.len()).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        out.swap(i, j);
    }
    out
}

pub fn permute_configuration(config: &NetworkConfiguration, seed: &VrfSeed) -> NetworkConfiguration {
    NetworkConfiguration { ordered_members: shuffle_members(&config.ordered_members, seed), ..config.clone() }
}

/// True iff enough of the prior membership carries over.
pub fn carryover_check(prior: &BTreeSet<NodeId>, next: &BTreeSet<NodeId>) -> Result<bool, TopologyError> {
    let need = majority_threshold(prior.len())?;
    Ok(prior.intersection(next).count() >= need)
}

/// Slot 0 leads.
pub fn select_leader(config: &NetworkConfiguration) -> Result<NodeId, TopologyError> {
    config.ordered_members.first().copied().ok_or(TopologyError::EmptyConfiguration)
}

/// True iff the per-strand leaders are pairwise distinct.
pub fn leadership_conflict_check(configs: &[&NetworkConfiguration]) -> bool {
    let leaders: Vec<NodeId> = configs.iter().filter_map(|c| c.ordered_members.first().copied()).collect();
    let distinct: BTreeSet<&NodeId> = leaders.iter().collect();
    distinct.len() == leaders.len()
}

/// Rotates later strands (the negative strand for a pair) left by one slot
/// until every leader is distinct. Strands are processed in valence order.
pub fn resolve_leadership_conflict(configs: &mut [NetworkConfiguration]) {
    configs.sort_by_key(|c| c.strand);
    let mut taken: BTreeSet<NodeId> = BTreeSet::new();
    for c in configs.iter_mut() {
        for _ in 0..c.len() {
            match c.ordered_members.first() {
                Some(l) if taken.contains(l) => c.ordered_members.rotate_left(1),
                _ => break,
            }
        }
        if let Some(l) = c.ordered_members.first() {
            taken.insert(*l);
        }
    }
}
