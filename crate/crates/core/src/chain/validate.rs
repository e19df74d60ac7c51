//! Block validation against the configurations that must have signed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::block::{BlockHash, CycleBlock, EpochBlock, EpochGenesisBlock, ShufflePolicy, MIN_MEMBERS};
use super::StrandId;
use crate::crypto::{combine_vrf_seed, derive_vrf_seed, AggregateSignature, SignatureVerifier};
use crate::topology::{
    carryover_check, majority_threshold, permute_configuration, KeyRangePartition, NetworkConfiguration,
    PartitionDefect,
};

/// Why a signature was not accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureDefect {
    Missing,
    SubMajority { have: usize, need: usize },
    ForeignSigner,
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("parent hash does not match")]
    BadParent,
    #[error("height is not parent height + 1")]
    BadHeight,
    #[error("signature does not verify: {0:?}")]
    BadSignature(SignatureDefect),
    #[error("signer set below majority ({have} < {need})")]
    SubMajority { have: usize, need: usize },
    #[error("handover countersignature rejected: {0:?}")]
    BadHandoverSignature(SignatureDefect),
    #[error("configuration is not the expected permutation")]
    TopologyMismatch,
    #[error("ascending valence does not alternate")]
    WrongAlternation,
    #[error("ascending signature rejected: {0:?}")]
    BadAscendingSignature(SignatureDefect),
    #[error("descending signature rejected: {0:?}")]
    BadDescendingSignature(SignatureDefect),
    #[error("responsibilities do not cover the keyspace as required")]
    IncompleteResponsibility,
    #[error("submissive signature rejected: {0:?}")]
    BadSubmissiveSignature(SignatureDefect),
    #[error("dominant signature rejected: {0:?}")]
    BadDominantSignature(SignatureDefect),
    #[error("only {retained} prior members retained, need {need}")]
    CarryoverViolation { retained: usize, need: usize },
    #[error("partition leaves key {0} unassigned")]
    PartitionGap(u64),
    #[error("partition assigns key {0} twice")]
    PartitionOverlap(u64),
    #[error("configurations disagree on membership")]
    MembershipMismatch,
    #[error("fewer than the minimum number of members")]
    TooFewMembers,
}

impl From<PartitionDefect> for Rejection {
    fn from(d: PartitionDefect) -> Self {
        match d {
            PartitionDefect::Gap(k) => Rejection::PartitionGap(k),
            PartitionDefect::Overlap(k) => Rejection::PartitionOverlap(k),
            PartitionDefect::EmptyRange { start, .. } => Rejection::PartitionGap(start),
        }
    }
}

/// The state a block in one strand must extend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrandTip {
    pub hash: BlockHash,
    pub height: u64,
    /// Configuration whose majority signs the next block.
    pub signing: NetworkConfiguration,
    /// Outgoing dominant configuration that countersigns the next block.
    pub handover: Option<NetworkConfiguration>,
}

impl StrandTip {
    pub fn of(block: &CycleBlock) -> Self {
        StrandTip {
            hash: block.hash(),
            height: block.header.height,
            signing: block.configuration.clone(),
            handover: None,
        }
    }
}

/// Checks that a majority of members signed and that the signature holds.
pub fn check_signature(
    sig: &AggregateSignature,
    config: &NetworkConfiguration,
    message: &[u8],
    verifier: &impl SignatureVerifier,
) -> Result<(), SignatureDefect> {
    if sig.signer_set.is_empty() {
        return Err(SignatureDefect::Missing);
    }
    let members = config.member_set();
    if !sig.signer_set.is_subset(&members) {
        return Err(SignatureDefect::ForeignSigner);
    }
    let need = majority_threshold(config.len()).unwrap_or(usize::MAX).max(config.group_key.threshold);
    if sig.signer_set.len() < need {
        return Err(SignatureDefect::SubMajority { have: sig.signer_set.len(), need });
    }
    if !verifier.verify_aggregate(sig, config.group_key.public_key, message) {
        return Err(SignatureDefect::Invalid);
    }
    Ok(())
}

/// The configuration a valid successor of `tip` must carry.
pub fn expected_configuration(
    tip: &StrandTip,
    signature: &AggregateSignature,
    handover_signature: Option<&AggregateSignature>,
    policy: ShufflePolicy,
) -> NetworkConfiguration {
    if !policy.permutes_cycles() {
        return tip.signing.clone();
    }
    let seed = match handover_signature {
        Some(first) => combine_vrf_seed(first, signature),
        None => derive_vrf_seed(signature),
    };
    permute_configuration(&tip.signing, &seed)
}

pub fn validate_cycle_block(
    block: &CycleBlock,
    parent: &CycleBlock,
    policy: ShufflePolicy,
    verifier: &impl SignatureVerifier,
) -> Result<(), Rejection> {
    validate_cycle_block_at(block, &StrandTip::of(parent), policy, verifier)
}

/// Validates a cycle block against an explicit strand tip.
pub fn validate_cycle_block_at(
    block: &CycleBlock,
    tip: &StrandTip,
    policy: ShufflePolicy,
    verifier: &impl SignatureVerifier,
) -> Result<(), Rejection> {
    let h = &block.header;
    if h.strand != tip.signing.strand || h.parent_hash != tip.hash {
        return Err(Rejection::BadParent);
    }
    if h.height != tip.height + 1 {
        return Err(Rejection::BadHeight);
    }
    let hash = block.hash();
    match check_signature(&block.signature, &tip.signing, &hash.0, verifier) {
        Ok(()) => {}
        Err(SignatureDefect::SubMajority { have, need }) => return Err(Rejection::SubMajority { have, need }),
        Err(d) => return Err(Rejection::BadSignature(d)),
    }
    match (&tip.handover, &block.handover_signature) {
        (Some(cfg), Some(sig)) => {
            check_signature(sig, cfg, &hash.0, verifier).map_err(Rejection::BadHandoverSignature)?
        }
        (Some(_), None) => return Err(Rejection::BadHandoverSignature(SignatureDefect::Missing)),
        (None, Some(_)) => return Err(Rejection::BadHandoverSignature(SignatureDefect::ForeignSigner)),
        (None, None) => {}
    }
    let expected = expected_configuration(tip, &block.signature, block.handover_signature.as_ref(), policy);
    if block.configuration != expected {
        return Err(Rejection::TopologyMismatch);
    }
    Ok(())
}

pub fn validate_epoch_block(
    block: &EpochBlock,
    tips: &BTreeMap<StrandId, StrandTip>,
    prior_epoch: Option<&EpochBlock>,
    verifier: &impl SignatureVerifier,
) -> Result<(), Rejection> {
    let h = &block.header;
    let expected_ascending = prior_epoch.map_or(StrandId::FIRST_ASCENDING, |p| p.header.ascending.other());
    if h.ascending != expected_ascending || h.descending != h.ascending.other() {
        return Err(Rejection::WrongAlternation);
    }
    let expected_height = prior_epoch.map_or(1, |p| p.header.height + 1);
    if h.height != expected_height {
        return Err(Rejection::BadHeight);
    }
    if let Some(p) = prior_epoch {
        if h.previous != p.hash() {
            return Err(Rejection::BadParent);
        }
    }
    let tip_hashes: BTreeMap<StrandId, BlockHash> = tips.iter().map(|(s, t)| (*s, t.hash)).collect();
    if h.parent_hashes != tip_hashes {
        return Err(Rejection::BadParent);
    }
    let (Some(asc), Some(desc)) = (tips.get(&h.ascending), tips.get(&h.descending)) else {
        return Err(Rejection::BadParent);
    };
    if h.responsibilities != KeyRangePartition::full(h.ascending) {
        return Err(Rejection::IncompleteResponsibility);
    }
    check_membership_change(&asc.signing.member_set(), &h.next_members)?;
    let hash = block.hash();
    check_signature(&block.ascending_signature, &asc.signing, &hash.0, verifier)
        .map_err(Rejection::BadAscendingSignature)?;
    check_signature(&block.descending_signature, &desc.signing, &hash.0, verifier)
        .map_err(Rejection::BadDescendingSignature)?;
    Ok(())
}

fn check_membership_change(
    prior: &BTreeSet<crate::topology::NodeId>,
    next: &[crate::topology::NodeId],
) -> Result<(), Rejection> {
    let next_set: BTreeSet<_> = next.iter().copied().collect();
    if next_set.len() != next.len() {
        return Err(Rejection::MembershipMismatch);
    }
    if !carryover_check(prior, &next_set).unwrap_or(false) {
        return Err(Rejection::CarryoverViolation {
            retained: prior.intersection(&next_set).count(),
            need: majority_threshold(prior.len()).unwrap_or(0),
        });
    }
    if next.len() < MIN_MEMBERS {
        return Err(Rejection::TooFewMembers);
    }
    Ok(())
}

/// `tips` are the strand tips the parent epoch block converged on.
pub fn validate_epoch_genesis(
    block: &EpochGenesisBlock,
    parent: &EpochBlock,
    tips: &BTreeMap<StrandId, StrandTip>,
    verifier: &impl SignatureVerifier,
) -> Result<(), Rejection> {
    let h = &block.header;
    if h.parent != parent.hash() {
        return Err(Rejection::BadParent);
    }
    if h.epoch != parent.header.height {
        return Err(Rejection::BadHeight);
    }
    h.partition.check()?;
    let (Some(dominant), Some(submissive)) = (tips.get(&parent.header.ascending), tips.get(&parent.header.descending))
    else {
        return Err(Rejection::BadParent);
    };
    let strands: BTreeSet<StrandId> = tips.keys().copied().collect();
    let configured: BTreeSet<StrandId> = h.new_configurations.keys().copied().collect();
    if strands != configured {
        return Err(Rejection::MembershipMismatch);
    }
    for (s, c) in &h.new_configurations {
        if c.strand != *s || h.partition.assignments.get(s) != Some(&c.responsibility) {
            return Err(Rejection::IncompleteResponsibility);
        }
        if h.partition.responsible_strands().len() < 2 {
            return Err(Rejection::IncompleteResponsibility);
        }
    }
    let prior: BTreeSet<_> = dominant.signing.member_set();
    let mut next_sets = h.new_configurations.values().map(|c| c.ordered_members.clone());
    let first = next_sets.next().unwrap_or_default();
    check_membership_change(&prior, &first)?;
    let first_set: BTreeSet<_> = first.iter().copied().collect();
    if next_sets.any(|m| m.iter().copied().collect::<BTreeSet<_>>() != first_set) {
        return Err(Rejection::MembershipMismatch);
    }
    if first_set != parent.header.next_members.iter().copied().collect() {
        return Err(Rejection::MembershipMismatch);
    }
    for c in h.new_configurations.values() {
        if c.group_key.threshold != majority_threshold(c.len()).unwrap_or(0) {
            return Err(Rejection::MembershipMismatch);
        }
    }
    let hash = block.hash();
    check_signature(&block.submissive_signature, &submissive.signing, &hash.0, verifier)
        .map_err(Rejection::BadSubmissiveSignature)?;
    check_signature(&block.dominant_signature, &dominant.signing, &hash.0, verifier)
        .map_err(Rejection::BadDominantSignature)?;
    Ok(())
}
