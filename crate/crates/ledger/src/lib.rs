//! Tamper-evident audit ledger for agent decisions: canonical hash-chained
//! blocks, Merkle roots over entries, Ed25519 quorum commit by simulated
//! validators, role-based write ACLs, token-bucket rate limiting and stake
//! penalties.

pub mod access;
pub mod block;
pub mod chain;
mod codec;
pub mod consensus;
pub mod merkle;

pub use access::{
    action_owner, check_write_acl, consume_rate_token, AccountError, AclPolicy, RateConfig,
    RateLimiter, StakeAccount, StakeRegistry,
};
pub use block::{decode_chain, encode_chain, signals_digest, Block, BlockSignature, LedgerEntry};
pub use chain::{
    verify_bytes, verify_chain, AppendError, AuditSink, ChainVerdict, GenesisConfig,
    InvalidReason, Ledger, LedgerError, NullSink,
};
pub use codec::DecodeError;
pub use consensus::{
    bft_commit, Behavior, Behaviors, CommitOutcome, ValidatorRoster, ValidatorSet, VoteContext,
    VoteVerdict,
};
pub use merkle::{merkle_proof, merkle_root, verify_proof, Hash};
