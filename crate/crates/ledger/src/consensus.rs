//! Single-round signed-quorum commit over a static validator set.
//!
//! Every validator independently checks the proposed block and, if it
//! accepts, signs the block header with Ed25519. The block commits when at
//! least `2f + 1` distinct validators produced signatures that verify
//! against the header; signatures over anything else are discarded.

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::AclPolicy;
use crate::block::{entries_root, Block, BlockSignature};
use crate::merkle::{sha256, Hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    /// Never answers.
    Silent,
    /// Answers with a rejection regardless of the block.
    Reject,
    /// Signs a conflicting header instead of the proposed one.
    Equivocate,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [
        Behavior::Honest,
        Behavior::Silent,
        Behavior::Reject,
        Behavior::Equivocate,
    ];
}

/// Validator id -> behavior; absent validators are honest.
pub type Behaviors = BTreeMap<String, Behavior>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorKey {
    pub id: String,
    #[serde(with = "hex::serde")]
    pub public_key: [u8; 32],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidatorError {
    #[error("a validator set needs at least one validator")]
    Empty,
    #[error("duplicate validator id `{0}`")]
    Duplicate(String),
    #[error("validator `{0}` has an invalid public key")]
    BadKey(String),
}

/// Public view of the validator set: enough to verify, not to sign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorRoster {
    pub validators: Vec<ValidatorKey>,
}

impl ValidatorRoster {
    pub fn n(&self) -> usize {
        self.validators.len()
    }

    /// `f = ⌊(N − 1) / 3⌋`.
    pub fn f(&self) -> usize {
        self.n().saturating_sub(1) / 3
    }

    pub fn quorum(&self) -> usize {
        2 * self.f() + 1
    }

    pub fn key(&self, id: &str) -> Option<VerifyingKey> {
        self.validators
            .iter()
            .find(|v| v.id == id)
            .and_then(|v| VerifyingKey::from_bytes(&v.public_key).ok())
    }

    pub fn validate(&self) -> Result<(), ValidatorError> {
        if self.validators.is_empty() {
            return Err(ValidatorError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.validators {
            if !seen.insert(&v.id) {
                return Err(ValidatorError::Duplicate(v.id.clone()));
            }
            if VerifyingKey::from_bytes(&v.public_key).is_err() {
                return Err(ValidatorError::BadKey(v.id.clone()));
            }
        }
        Ok(())
    }

    /// Signatures on `block` that verify, from distinct known validators.
    /// Returns `(valid, all_valid)`.
    pub fn count_valid(&self, block: &Block) -> (usize, bool) {
        let header = block.header_bytes();
        let mut seen = std::collections::BTreeSet::new();
        let mut valid = 0;
        let mut all_valid = true;
        for s in &block.signatures {
            let ok = self.key(&s.validator).is_some_and(|k| {
                k.verify_strict(&header, &Signature::from_bytes(&s.signature))
                    .is_ok()
            }) && seen.insert(s.validator.as_str());
            if ok {
                valid += 1;
            } else {
                all_valid = false;
            }
        }
        (valid, all_valid)
    }
}

/// Validators with their signing keys, as run by the simulator.
#[derive(Debug, Clone)]
pub struct ValidatorSet {
    ids: Vec<String>,
    keys: Vec<SigningKey>,
}

impl ValidatorSet {
    /// `n` validators `validator-0..` with keys derived from `seed`.
    pub fn generate(n: usize, seed: u64) -> Result<ValidatorSet, ValidatorError> {
        if n == 0 {
            return Err(ValidatorError::Empty);
        }
        let ids: Vec<String> = (0..n).map(|i| format!("validator-{i}")).collect();
        let keys = ids
            .iter()
            .map(|id| {
                SigningKey::from_bytes(&sha256(&[b"pipeward-validator", &seed.to_be_bytes(), id.as_bytes()]))
            })
            .collect();
        Ok(ValidatorSet { ids, keys })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn roster(&self) -> ValidatorRoster {
        ValidatorRoster {
            validators: self
                .ids
                .iter()
                .zip(&self.keys)
                .map(|(id, k)| ValidatorKey {
                    id: id.clone(),
                    public_key: k.verifying_key().to_bytes(),
                })
                .collect(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.iter().any(|v| v == id)
    }

    pub fn sign(&self, index: usize, message: &[u8]) -> [u8; 64] {
        self.keys[index].sign(message).to_bytes()
    }
}

/// What an honest validator expects of the next block.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteContext<'a> {
    pub index: u64,
    pub prev_hash: Hash,
    pub acl: &'a AclPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteVerdict {
    Signed,
    Rejected(String),
    Silent,
    /// Signature did not verify against the proposed header.
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommitOutcome {
    Committed {
        signatures: Vec<BlockSignature>,
    },
    Aborted {
        valid_votes: usize,
        verdicts: Vec<(String, VoteVerdict)>,
    },
}

/// The checks an honest validator runs before signing.
pub fn honest_check(block: &Block, ctx: &VoteContext) -> Result<(), String> {
    if block.index != ctx.index {
        return Err(format!("expected index {}, got {}", ctx.index, block.index));
    }
    if block.prev_hash != ctx.prev_hash {
        return Err("prev_hash does not link to the current tip".into());
    }
    if entries_root(&block.entries) != block.merkle_root {
        return Err("merkle root does not match entries".into());
    }
    if let Some(e) = block
        .entries
        .iter()
        .find(|e| !ctx.acl.allows(e.role, e.action))
    {
        return Err(format!("{} may not record {}", e.role, e.action));
    }
    if !block.signatures.is_empty() {
        return Err("proposal already carries signatures".into());
    }
    Ok(())
}

pub fn bft_commit(
    validators: &ValidatorSet,
    block: &Block,
    ctx: &VoteContext,
    behaviors: &Behaviors,
) -> CommitOutcome {
    let roster = validators.roster();
    let header = block.header_bytes();
    let mut conflicting = block.clone();
    conflicting.merkle_root = sha256(&[b"conflicting", &block.merkle_root]);
    let conflicting_header = conflicting.header_bytes();

    let mut signatures = Vec::new();
    let mut verdicts = Vec::new();
    for (i, id) in validators.ids().iter().enumerate() {
        let behavior = behaviors.get(id).copied().unwrap_or(Behavior::Honest);
        let vote = match behavior {
            Behavior::Silent => None,
            Behavior::Reject => Some(Err("rejected".to_string())),
            Behavior::Honest => Some(honest_check(block, ctx).map(|_| validators.sign(i, &header))),
            Behavior::Equivocate => Some(Ok(validators.sign(i, &conflicting_header))),
        };
        let verdict = match vote {
            None => VoteVerdict::Silent,
            Some(Err(reason)) => VoteVerdict::Rejected(reason),
            Some(Ok(signature)) => {
                let key = roster.key(id).expect("own key");
                if key
                    .verify_strict(&header, &Signature::from_bytes(&signature))
                    .is_ok()
                {
                    signatures.push(BlockSignature {
                        validator: id.clone(),
                        signature,
                    });
                    VoteVerdict::Signed
                } else {
                    VoteVerdict::Discarded
                }
            }
        };
        verdicts.push((id.clone(), verdict));
    }
    if signatures.len() >= roster.quorum() {
        CommitOutcome::Committed { signatures }
    } else {
        CommitOutcome::Aborted {
            valid_votes: signatures.len(),
            verdicts,
        }
    }
}
