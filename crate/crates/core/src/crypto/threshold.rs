//! Unique threshold signatures and the VRF seeds derived from them.
//!
//! A signature share is `H(m)^x_i`; any `t` shares combine with Lagrange
//! coefficients in the exponent into `H(m)^s`, the same value for every
//! qualifying subset. Without a pairing the aggregate cannot be checked
//! against `g^s` alone, so [`OracleRegistry`] keeps the group secret that
//! the simulation knows and recomputes the expected signature. This is a
//! desk-scale stand-in and offers no cryptographic security.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::dkg::{GroupKeyMaterial, RitualId};
use super::group::{FieldElement, GroupElement, GroupParams};
use super::shamir::{lagrange_at_zero, shamir_reconstruct, SecretShare};
use super::CryptoError;
use crate::digest::{digest_newtype, sha256, Digest32};
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureShare {
    pub signer: NodeId,
    pub index: u32,
    pub value: GroupElement,
    pub digest: Digest32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSignature {
    pub value: GroupElement,
    pub message_digest: Digest32,
    pub signer_set: BTreeSet<NodeId>,
}

digest_newtype!(
    /// Randomness derived from a unique aggregate signature.
    VrfSeed
);

pub fn message_digest(message: &[u8]) -> Digest32 {
    Digest32(sha256(&[message]))
}

pub fn sign_with_share(params: &GroupParams, signer: NodeId, share: &SecretShare, message: &[u8]) -> SignatureShare {
    SignatureShare {
        signer,
        index: share.index,
        value: params.exp(params.hash_to_group(message), share.value),
        digest: message_digest(message),
    }
}

pub fn sign_share(
    params: &GroupParams,
    material: &GroupKeyMaterial,
    signer: NodeId,
    message: &[u8],
) -> Result<SignatureShare, CryptoError> {
    let share = material.member_shares.get(&signer).ok_or(CryptoError::NotAMember { ritual: material.ritual_id })?;
    Ok(sign_with_share(params, signer, share, message))
}

/// Combines shares in the exponent. All supplied shares take part.
pub fn aggregate(params: &GroupParams, shares: &[SignatureShare], t: usize) -> Result<AggregateSignature, CryptoError> {
    if t == 0 || shares.len() < t {
        return Err(CryptoError::InsufficientShares { have: shares.len(), need: t });
    }
    let digest = shares[0].digest;
    if shares.iter().any(|s| s.digest != digest) {
        return Err(CryptoError::MixedDigests);
    }
    let mut sorted: Vec<&SignatureShare> = shares.iter().collect();
    sorted.sort_by_key(|s| s.index);
    let indices: Vec<u32> = sorted.iter().map(|s| s.index).collect();
    let lambdas = lagrange_at_zero(params, &indices)?;
    let value =
        sorted.iter().zip(lambdas).fold(GroupElement::IDENTITY, |acc, (s, l)| params.op(acc, params.exp(s.value, l)));
    Ok(AggregateSignature { value, message_digest: digest, signer_set: sorted.iter().map(|s| s.signer).collect() })
}

/// Pluggable aggregate-signature verification.
pub trait SignatureVerifier {
    fn verify_aggregate(&self, sig: &AggregateSignature, group_public_key: GroupElement, message: &[u8]) -> bool;
}

/// Maps group public keys to the secrets the simulation knows.
#[derive(Clone, Debug, Default)]
pub struct OracleRegistry {
    params: GroupParams,
    secrets: BTreeMap<GroupElement, FieldElement>,
    contributions: BTreeMap<(RitualId, NodeId), FieldElement>,
}

impl OracleRegistry {
    pub fn new(params: GroupParams) -> Self {
        OracleRegistry { params, ..Default::default() }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn register_secret(&mut self, secret: FieldElement) -> GroupElement {
        let key = self.params.commit(secret);
        self.secrets.insert(key, secret);
        key
    }

    /// Registers a completed ritual by reconstructing its secret.
    pub fn register(&mut self, material: &GroupKeyMaterial) -> Result<(), CryptoError> {
        let shares: Vec<SecretShare> = material.member_shares.values().copied().collect();
        let secret = shamir_reconstruct(&self.params, &shares, material.threshold)?;
        if self.params.commit(secret) != material.group_public_key {
            return Err(CryptoError::InconsistentMaterial);
        }
        self.secrets.insert(material.group_public_key, secret);
        Ok(())
    }

    /// Records a dealer's constant term as it deals.
    pub fn record_contribution(&mut self, ritual: RitualId, dealer: NodeId, secret: FieldElement) {
        self.contributions.insert((ritual, dealer), secret);
    }

    /// Sums the contributions of the qualified dealers and registers the key.
    pub fn register_qualified(&mut self, ritual: RitualId, qualified: &[NodeId]) -> Option<GroupElement> {
        let mut secret = FieldElement::ZERO;
        for dealer in qualified {
            let c = self.contributions.get(&(ritual, *dealer))?;
            secret = self.params.add(secret, *c);
        }
        Some(self.register_secret(secret))
    }

    pub fn knows(&self, key: GroupElement) -> bool {
        self.secrets.contains_key(&key)
    }

    /// `H(m)^s` for a registered key.
    pub fn expected_signature(&self, key: GroupElement, message: &[u8]) -> Option<GroupElement> {
        let s = self.secrets.get(&key)?;
        Some(self.params.exp(self.params.hash_to_group(message), *s))
    }
}

impl SignatureVerifier for OracleRegistry {
    fn verify_aggregate(&self, sig: &AggregateSignature, group_public_key: GroupElement, message: &[u8]) -> bool {
        sig.message_digest == message_digest(message)
            && self.expected_signature(group_public_key, message) == Some(sig.value)
    }
}

pub fn verify_aggregate(
    verifier: &impl SignatureVerifier,
    sig: &AggregateSignature,
    group_public_key: GroupElement,
    message: &[u8],
) -> bool {
    verifier.verify_aggregate(sig, group_public_key, message)
}

pub fn derive_vrf_seed(sig: &AggregateSignature) -> VrfSeed {
    VrfSeed(sha256(&[b"unitychain/vrf", &sig.value.to_bytes()]))
}

/// Seed from two aggregates signed over the same block, in the given order.
pub fn combine_vrf_seed(first: &AggregateSignature, second: &AggregateSignature) -> VrfSeed {
    VrfSeed(sha256(&[b"unitychain/vrf2", &first.value.to_bytes(), &second.value.to_bytes()]))
}
