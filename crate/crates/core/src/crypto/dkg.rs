//! Joint-Feldman distributed key generation.
//!
//! Every participant deals a Feldman-verified sharing of a random secret.
//! A recipient whose share fails the commitment check complains, and the
//! dealer is dropped from the qualified set. The final share of member `i`
//! is the sum of the qualified dealers' shares at `i`; the group public key
//! is the product of their constant-term commitments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::group::{FieldElement, GroupElement, GroupParams};
use super::shamir::{check_threshold, verify_share, Polynomial, SecretShare};
use super::CryptoError;
use crate::chain::StrandId;
use crate::topology::NodeId;

/// What a ritual produces keys for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RitualScope {
    Origin,
    Strand(StrandId),
}

/// Binds a ritual to the epoch and strand that ran it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RitualId {
    pub epoch: u64,
    pub scope: RitualScope,
    pub attempt: u32,
}

impl RitualId {
    pub fn origin() -> Self {
        RitualId { epoch: 0, scope: RitualScope::Origin, attempt: 0 }
    }

    pub fn strand(epoch: u64, strand: StrandId, attempt: u32) -> Self {
        RitualId { epoch, scope: RitualScope::Strand(strand), attempt }
    }

    pub fn encode(&self) -> [u8; 14] {
        let mut out = [0u8; 14];
        out[..8].copy_from_slice(&self.epoch.to_be_bytes());
        out[8] = match self.scope {
            RitualScope::Origin => 0,
            RitualScope::Strand(_) => 1,
        };
        out[9] = match self.scope {
            RitualScope::Origin => 0,
            RitualScope::Strand(s) => s.tag(),
        };
        out[10..].copy_from_slice(&self.attempt.to_be_bytes());
        out
    }
}

impl fmt::Display for RitualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            RitualScope::Origin => write!(f, "e{}/origin/a{}", self.epoch, self.attempt),
            RitualScope::Strand(s) => write!(f, "e{}/{}/a{}", self.epoch, s.symbol(), self.attempt),
        }
    }
}

/// Public half of a dealing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealingCommitment {
    pub dealer: NodeId,
    pub coefficient_commitments: Vec<GroupElement>,
}

/// A dealer's commitments plus one share per recipient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dealing {
    pub ritual: RitualId,
    pub commitment: DealingCommitment,
    pub shares: BTreeMap<NodeId, SecretShare>,
}

/// Output of a successful ritual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupKeyMaterial {
    pub ritual_id: RitualId,
    pub group_public_key: GroupElement,
    pub threshold: usize,
    pub member_shares: BTreeMap<NodeId, SecretShare>,
    pub qualified: Vec<NodeId>,
}

/// Fixed ritual context: sorted participants and the threshold.
#[derive(Clone, Debug)]
pub struct DkgRitual {
    params: GroupParams,
    id: RitualId,
    participants: Vec<NodeId>,
    threshold: usize,
}

impl DkgRitual {
    pub fn new(
        params: GroupParams,
        id: RitualId,
        participants: &[NodeId],
        threshold: usize,
    ) -> Result<Self, CryptoError> {
        let sorted: BTreeSet<NodeId> = participants.iter().copied().collect();
        if sorted.len() != participants.len() {
            return Err(CryptoError::DuplicateParticipant);
        }
        if sorted.len() < threshold {
            return Err(CryptoError::RitualFailure { ritual: id, surviving: sorted.len(), threshold });
        }
        check_threshold(sorted.len(), threshold)?;
        Ok(DkgRitual { params, id, participants: sorted.into_iter().collect(), threshold })
    }

    pub fn id(&self) -> RitualId {
        self.id
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn participants(&self) -> &[NodeId] {
        &self.participants
    }

    /// 1-based evaluation point of a participant.
    pub fn index_of(&self, node: &NodeId) -> Option<u32> {
        self.participants.binary_search(node).ok().map(|pos| pos as u32 + 1)
    }

    /// Produces the dealer's sharing and returns its secret contribution.
    pub fn deal<R: RngCore + ?Sized>(&self, dealer: NodeId, rng: &mut R) -> (Dealing, FieldElement) {
        let secret = self.params.random_scalar(rng);
        let poly = Polynomial::random(&self.params, secret, self.threshold, rng);
        let shares = self
            .participants
            .iter()
            .enumerate()
            .map(|(pos, node)| {
                let index = pos as u32 + 1;
                (*node, SecretShare { index, value: poly.evaluate(&self.params, index as u64) })
            })
            .collect();
        let dealing = Dealing {
            ritual: self.id,
            commitment: DealingCommitment { dealer, coefficient_commitments: poly.commitments(&self.params) },
            shares,
        };
        (dealing, secret)
    }

    /// Recipient-side check of its own share in a dealing.
    pub fn share_is_valid(&self, dealing: &Dealing, recipient: &NodeId) -> bool {
        self.check_share(&dealing.commitment, dealing.shares.get(recipient), recipient)
    }

    pub fn check_share(&self, commitment: &DealingCommitment, share: Option<&SecretShare>, recipient: &NodeId) -> bool {
        let Some(share) = share else { return false };
        commitment.coefficient_commitments.len() == self.threshold
            && Some(share.index) == self.index_of(recipient)
            && verify_share(&self.params, &commitment.coefficient_commitments, share)
    }

    /// Dealers that at least one participant would complain about.
    pub fn complaints<'a>(&self, dealings: impl IntoIterator<Item = &'a Dealing>) -> BTreeSet<NodeId> {
        dealings
            .into_iter()
            .filter(|d| self.participants.iter().any(|r| !self.share_is_valid(d, r)))
            .map(|d| d.commitment.dealer)
            .collect()
    }

    /// Dealers that dealt to the ritual and drew no complaint.
    pub fn qualified(&self, dealers: impl IntoIterator<Item = NodeId>, complaints: &BTreeSet<NodeId>) -> Vec<NodeId> {
        let members: BTreeSet<&NodeId> = self.participants.iter().collect();
        let set: BTreeSet<NodeId> =
            dealers.into_iter().filter(|d| members.contains(d) && !complaints.contains(d)).collect();
        set.into_iter().collect()
    }

    pub fn group_public_key<'a>(&self, commitments: impl IntoIterator<Item = &'a DealingCommitment>) -> GroupElement {
        commitments.into_iter().fold(GroupElement::IDENTITY, |acc, c| self.params.op(acc, c.coefficient_commitments[0]))
    }

    /// Sums the received shares of one recipient.
    pub fn combine_shares<'a>(
        &self,
        recipient: &NodeId,
        shares: impl IntoIterator<Item = &'a SecretShare>,
    ) -> Option<SecretShare> {
        let index = self.index_of(recipient)?;
        let value = shares.into_iter().fold(FieldElement::ZERO, |acc, s| self.params.add(acc, s.value));
        Some(SecretShare { index, value })
    }

    /// Completes the ritual from a full set of dealings.
    pub fn finish(&self, dealings: &[Dealing]) -> Result<GroupKeyMaterial, CryptoError> {
        let complaints = self.complaints(dealings);
        let qualified = self.qualified(dealings.iter().map(|d| d.commitment.dealer), &complaints);
        if qualified.len() < self.threshold {
            return Err(CryptoError::RitualFailure {
                ritual: self.id,
                surviving: qualified.len(),
                threshold: self.threshold,
            });
        }
        let qual: BTreeSet<&NodeId> = qualified.iter().collect();
        let kept: Vec<&Dealing> = dealings.iter().filter(|d| qual.contains(&d.commitment.dealer)).collect();
        let group_public_key = self.group_public_key(kept.iter().map(|d| &d.commitment));
        let member_shares = self
            .participants
            .iter()
            .filter_map(|node| {
                let share = self.combine_shares(node, kept.iter().filter_map(|d| d.shares.get(node)))?;
                Some((*node, share))
            })
            .collect();
        Ok(GroupKeyMaterial {
            ritual_id: self.id,
            group_public_key,
            threshold: self.threshold,
            member_shares,
            qualified,
        })
    }
}

/// Runs a complete honest ritual in one call.
pub fn run_dkg<R: RngCore + ?Sized>(
    params: &GroupParams,
    ritual_id: RitualId,
    participants: &[NodeId],
    t: usize,
    rng: &mut R,
) -> Result<GroupKeyMaterial, CryptoError> {
    let ritual = DkgRitual::new(*params, ritual_id, participants, t)?;
    let dealings: Vec<Dealing> = ritual.participants().iter().map(|&dealer| ritual.deal(dealer, rng).0).collect();
    ritual.finish(&dealings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::shamir::shamir_reconstruct;
    use crate::topology::NodeId;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn nodes(n: u32) -> Vec<NodeId> {
        (0..n).map(|i| NodeId::derive(i, &GroupParams::default())).collect()
    }

    #[test]
    fn honest_ritual_agrees() {
        let p = GroupParams::default();
        let members = nodes(4);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = run_dkg(&p, RitualId::origin(), &members, 3, &mut rng).unwrap();
        assert_eq!(m.qualified.len(), 4);
        assert_eq!(m.member_shares.len(), 4);
        let shares: Vec<_> = m.member_shares.values().copied().collect();
        let s = shamir_reconstruct(&p, &shares, 3).unwrap();
        assert_eq!(p.commit(s), m.group_public_key);
    }

    #[test]
    fn corrupted_dealer_is_excluded() {
        let p = GroupParams::default();
        let members = nodes(4);
        let ritual = DkgRitual::new(p, RitualId::origin(), &members, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut dealings: Vec<Dealing> = members.iter().map(|&d| ritual.deal(d, &mut rng).0).collect();
        let victim = members[2];
        let bad = dealings[1].shares.get_mut(&victim).unwrap();
        bad.value = p.add(bad.value, p.scalar(1));
        assert!(!ritual.share_is_valid(&dealings[1], &victim));
        let m = ritual.finish(&dealings).unwrap();
        assert!(!m.qualified.contains(&members[1]));
        assert_eq!(m.qualified.len(), 3);
        let expected = ritual
            .group_public_key(dealings.iter().filter(|d| d.commitment.dealer != members[1]).map(|d| &d.commitment));
        assert_eq!(m.group_public_key, expected);
        let shares: Vec<_> = m.member_shares.values().copied().collect();
        let s = shamir_reconstruct(&p, &shares[1..], 3).unwrap();
        assert_eq!(p.commit(s), m.group_public_key);
    }

    #[test]
    fn too_few_participants_fail() {
        let p = GroupParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            run_dkg(&p, RitualId::origin(), &nodes(2), 3, &mut rng),
            Err(CryptoError::RitualFailure { surviving: 2, threshold: 3, .. })
        ));
    }

    #[test]
    fn too_many_complaints_fail() {
        let p = GroupParams::default();
        let members = nodes(4);
        let ritual = DkgRitual::new(p, RitualId::origin(), &members, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut dealings: Vec<Dealing> = members.iter().map(|&d| ritual.deal(d, &mut rng).0).collect();
        for d in dealings.iter_mut().take(2) {
            let s = d.shares.get_mut(&members[3]).unwrap();
            s.value = p.add(s.value, p.scalar(1));
        }
        assert!(matches!(ritual.finish(&dealings), Err(CryptoError::RitualFailure { surviving: 2, .. })));
    }
}
