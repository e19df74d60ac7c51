//! Block types, canonical hashing and validation rules.

mod block;
pub mod encoding;
mod strand;
mod validate;

pub use block::{
    build_origin_block, hash_block, Block, BlockHash, Bootstrap, CycleBlock, CycleHeader, EpochBlock,
    EpochGenesisBlock, EpochHeader, GenesisHeader, OriginBlock, ProtocolParams, ShufflePolicy, MIN_MEMBERS,
};
pub use strand::StrandId;
pub use validate::{
    check_signature, expected_configuration, validate_cycle_block, validate_cycle_block_at, validate_epoch_block,
    validate_epoch_genesis, Rejection, SignatureDefect, StrandTip,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("origin needs at least {need} members, got {have}")]
    TooFewMembers { have: usize, need: usize },
    #[error("duplicate member in origin")]
    DuplicateMember,
}
