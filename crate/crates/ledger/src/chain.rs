use pipeward_core::{AgentRole, MitigationAction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{check_write_acl, AclPolicy, RateConfig, RateLimiter, StakeRegistry};
use crate::block::{decode_chain, encode_chain, entries_root, Block, LedgerEntry};
use crate::consensus::{
    bft_commit, Behaviors, CommitOutcome, ValidatorError, ValidatorRoster, ValidatorSet,
    VoteContext,
};
use crate::merkle::Hash;

/// Public parameters fixed at genesis; everything `verify_chain` trusts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    pub validators: ValidatorRoster,
    pub acl: AclPolicy,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default = "default_stake")]
    pub initial_stake: u64,
    #[serde(default = "default_penalty")]
    pub penalty: u64,
}

fn default_stake() -> u64 {
    100
}

fn default_penalty() -> u64 {
    1
}

impl GenesisConfig {
    pub fn from_json(json: &str) -> Result<GenesisConfig, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genesis serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    HashLink,
    MerkleMismatch,
    Quorum,
    Signature,
    Acl,
    /// Bytes that do not decode to a canonical block.
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ChainVerdict {
    Valid { blocks: usize },
    Invalid { first_bad_index: usize, reason: InvalidReason },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid { .. })
    }
}

/// Recomputes every link, root, signature, quorum and ACL check and
/// reports the earliest violation. An empty chain lacks its genesis block
/// and is invalid at index 0.
pub fn verify_chain(blocks: &[Block], genesis: &GenesisConfig) -> ChainVerdict {
    let invalid = |i: usize, reason| ChainVerdict::Invalid {
        first_bad_index: i,
        reason,
    };
    if blocks.is_empty() {
        return invalid(0, InvalidReason::Malformed);
    }
    let roster = &genesis.validators;
    let mut prev: Hash = [0; 32];
    for (i, block) in blocks.iter().enumerate() {
        if block.index != i as u64 || block.prev_hash != prev {
            return invalid(i, InvalidReason::HashLink);
        }
        if entries_root(&block.entries) != block.merkle_root {
            return invalid(i, InvalidReason::MerkleMismatch);
        }
        let (valid, all_valid) = roster.count_valid(block);
        if !all_valid {
            return invalid(i, InvalidReason::Signature);
        }
        if valid < roster.quorum() {
            return invalid(i, InvalidReason::Quorum);
        }
        if block
            .entries
            .iter()
            .any(|e| !check_write_acl(&genesis.acl, e.role, e))
        {
            return invalid(i, InvalidReason::Acl);
        }
        prev = block.header_hash();
    }
    ChainVerdict::Valid {
        blocks: blocks.len(),
    }
}

/// [`verify_chain`] over a ledger file's raw bytes.
pub fn verify_bytes(bytes: &[u8], genesis: &GenesisConfig) -> ChainVerdict {
    match decode_chain(bytes) {
        Ok(blocks) => verify_chain(&blocks, genesis),
        Err((decoded, _)) => match verify_chain(&decoded, genesis) {
            // Report an earlier violation if there is one.
            ChainVerdict::Invalid {
                first_bad_index,
                reason,
            } if !decoded.is_empty() => ChainVerdict::Invalid {
                first_bad_index,
                reason,
            },
            _ => ChainVerdict::Invalid {
                first_bad_index: decoded.len(),
                reason: InvalidReason::Malformed,
            },
        },
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AppendError {
    #[error("ACL violation: {role} may not record {action}")]
    Acl {
        role: AgentRole,
        action: MitigationAction,
    },
    #[error("rate limit exceeded for agent `{agent_id}`")]
    RateLimited { agent_id: String },
    #[error("proposer `{0}` is not a validator")]
    UnknownProposer(String),
    #[error("consensus aborted with {valid_votes} valid votes (quorum {quorum})")]
    Aborted { valid_votes: usize, quorum: usize },
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error(transparent)]
    Validators(#[from] ValidatorError),
    #[error("genesis block failed to commit")]
    Genesis,
}

/// Where audit records go. The ablation arm swaps the ledger for a sink
/// that records nothing.
pub trait AuditSink {
    /// Commits `entries` as one block at simulated minute `now`; returns the
    /// new block index, or `None` when the sink does not keep blocks.
    fn record(&mut self, entries: Vec<LedgerEntry>, now: u64) -> Result<Option<u64>, AppendError>;
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl AuditSink for NullSink {
    fn record(&mut self, _entries: Vec<LedgerEntry>, _now: u64) -> Result<Option<u64>, AppendError> {
        Ok(None)
    }
}

/// The permissioned chain plus the simulated validators and admission
/// controls that guard it.
#[derive(Debug, Clone)]
pub struct Ledger {
    genesis: GenesisConfig,
    validators: ValidatorSet,
    blocks: Vec<Block>,
    limiter: RateLimiter,
    stakes: StakeRegistry,
    behaviors: Behaviors,
}

impl Ledger {
    /// Generates `n` validators from `seed` and commits a genesis block
    /// signed by all of them.
    pub fn new(n: usize, seed: u64, acl: AclPolicy, rate: RateConfig) -> Result<Ledger, LedgerError> {
        let validators = ValidatorSet::generate(n, seed)?;
        let genesis = GenesisConfig {
            validators: validators.roster(),
            acl,
            rate,
            initial_stake: default_stake(),
            penalty: default_penalty(),
        };
        let mut block = Block::unsigned(0, [0; 32], Vec::new(), validators.ids()[0].clone(), 0);
        let ctx = VoteContext {
            index: 0,
            prev_hash: [0; 32],
            acl: &genesis.acl,
        };
        match bft_commit(&validators, &block, &ctx, &Behaviors::new()) {
            CommitOutcome::Committed { signatures } => block.signatures = signatures,
            CommitOutcome::Aborted { .. } => return Err(LedgerError::Genesis),
        }
        Ok(Ledger {
            limiter: RateLimiter::new(rate),
            genesis,
            validators,
            blocks: vec![block],
            stakes: StakeRegistry::default(),
            behaviors: Behaviors::new(),
        })
    }

    pub fn with_defaults(seed: u64) -> Ledger {
        Ledger::new(4, seed, AclPolicy::default(), RateConfig::default())
            .expect("default ledger parameters are valid")
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn stakes(&self) -> &StakeRegistry {
        &self.stakes
    }

    /// Behaviors used by [`AuditSink::record`].
    pub fn set_behaviors(&mut self, behaviors: Behaviors) {
        self.behaviors = behaviors;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_chain(&self.blocks)
    }

    pub fn verify(&self) -> ChainVerdict {
        verify_chain(&self.blocks, &self.genesis)
    }

    fn penalize(&mut self, agent_id: &str) {
        let penalty = self.genesis.penalty;
        // Agents are registered on first submission, so this cannot fail.
        let _ = self.stakes.apply_penalty(agent_id, penalty);
    }

    /// Admission (ACL, then one rate token per entry), block construction,
    /// and quorum commit. The chain grows by one block on success and is
    /// untouched otherwise.
    pub fn append_block(
        &mut self,
        entries: Vec<LedgerEntry>,
        proposer: &str,
        behaviors: &Behaviors,
        now: u64,
    ) -> Result<&Block, AppendError> {
        if !self.validators.contains(proposer) {
            return Err(AppendError::UnknownProposer(proposer.into()));
        }
        for e in &entries {
            if self.stakes.account(&e.agent_id).is_none() {
                self.stakes.register(e.agent_id.clone(), self.genesis.initial_stake);
            }
        }
        if let Some(e) = entries
            .iter()
            .find(|e| !check_write_acl(&self.genesis.acl, e.role, e))
        {
            let err = AppendError::Acl {
                role: e.role,
                action: e.action,
            };
            let agent = e.agent_id.clone();
            self.penalize(&agent);
            return Err(err);
        }
        for e in &entries {
            if !self.limiter.consume(&self.stakes, &e.agent_id, now) {
                let agent = e.agent_id.clone();
                self.penalize(&agent);
                return Err(AppendError::RateLimited { agent_id: agent });
            }
        }

        let tip = self.blocks.last().expect("genesis present");
        let index = tip.index + 1;
        let prev_hash = tip.header_hash();
        let mut block = Block::unsigned(index, prev_hash, entries, proposer, now);
        let ctx = VoteContext {
            index,
            prev_hash,
            acl: &self.genesis.acl,
        };
        match bft_commit(&self.validators, &block, &ctx, behaviors) {
            CommitOutcome::Committed { signatures } => {
                block.signatures = signatures;
                self.blocks.push(block);
                Ok(self.blocks.last().expect("just pushed"))
            }
            CommitOutcome::Aborted { valid_votes, .. } => Err(AppendError::Aborted {
                valid_votes,
                quorum: self.genesis.validators.quorum(),
            }),
        }
    }
}

impl AuditSink for Ledger {
    fn record(&mut self, entries: Vec<LedgerEntry>, now: u64) -> Result<Option<u64>, AppendError> {
        let proposer = self.validators.ids()[0].clone();
        let behaviors = self.behaviors.clone();
        self.append_block(entries, &proposer, &behaviors, now)
            .map(|b| Some(b.index))
    }
}
