//! Secret sharing, distributed key generation and threshold signatures.

mod dkg;
mod group;
mod shamir;
mod threshold;

pub use dkg::{run_dkg, Dealing, DealingCommitment, DkgRitual, GroupKeyMaterial, RitualId, RitualScope};
pub use group::{is_prime, FieldElement, GroupElement, GroupParams, DEFAULT_GENERATOR, DEFAULT_MODULUS, DEFAULT_ORDER};
pub use shamir::{lagrange_at_zero, shamir_reconstruct, shamir_split, verify_share, Polynomial, SecretShare, Split};
pub use threshold::{
    aggregate, combine_vrf_seed, derive_vrf_seed, message_digest, sign_share, sign_with_share, verify_aggregate,
    AggregateSignature, OracleRegistry, SignatureShare, SignatureVerifier, VrfSeed,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("threshold {t} is not in 1..={n}")]
    InvalidThreshold { n: usize, t: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),
    #[error("need {need} shares, have {have}")]
    InsufficientShares { have: usize, need: usize },
    #[error("shares sign different messages")]
    MixedDigests,
    #[error("duplicate ritual participant")]
    DuplicateParticipant,
    #[error("ritual {ritual} failed: {surviving} dealings survive, threshold {threshold}")]
    RitualFailure { ritual: RitualId, surviving: usize, threshold: usize },
    #[error("signer holds no share in ritual {ritual}")]
    NotAMember { ritual: RitualId },
    #[error("key material does not match its public key")]
    InconsistentMaterial,
}
