use std::collections::{BTreeMap, BTreeSet};

use pipeward_core::{AgentRole, MitigationAction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::LedgerEntry;

/// Which actions each role may record. Total over roles: a role missing
/// from the map may write nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AclPolicy {
    pub permitted: BTreeMap<AgentRole, BTreeSet<MitigationAction>>,
}

/// The role whose remit an action belongs to.
pub fn action_owner(action: MitigationAction) -> AgentRole {
    use MitigationAction::*;
    match action {
        OpenGuardPullRequest => AgentRole::CodeAnalysis,
        QuarantineDependency => AgentRole::DependencyIntelligence,
        RevokeCredentials => AgentRole::AccessControl,
        ApplyConfigPatch => AgentRole::ConfigurationAudit,
        AllowContinue | BlockBuild | PauseBuild | RequestReview => AgentRole::CICDMonitoring,
    }
}

impl Default for AclPolicy {
    /// Each role may record the actions it owns, plus `AllowContinue` and
    /// `RequestReview`.
    fn default() -> Self {
        let mut permitted: BTreeMap<AgentRole, BTreeSet<MitigationAction>> = AgentRole::ALL
            .iter()
            .map(|&r| {
                (
                    r,
                    BTreeSet::from([MitigationAction::AllowContinue, MitigationAction::RequestReview]),
                )
            })
            .collect();
        for action in MitigationAction::ALL {
            permitted
                .get_mut(&action_owner(action))
                .expect("every role present")
                .insert(action);
        }
        AclPolicy { permitted }
    }
}

impl AclPolicy {
    pub fn allows(&self, role: AgentRole, action: MitigationAction) -> bool {
        self.permitted
            .get(&role)
            .is_some_and(|set| set.contains(&action))
    }
}

/// The writer's role must match the entry and be permitted its action.
pub fn check_write_acl(policy: &AclPolicy, role: AgentRole, entry: &LedgerEntry) -> bool {
    entry.role == role && policy.allows(role, entry.action)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub capacity: f64,
    /// Tokens per simulated minute.
    pub refill_per_minute: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            capacity: 10.0,
            refill_per_minute: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    tokens: f64,
    last: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccountError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeAccount {
    pub balance: u64,
    pub penalties_applied: u32,
}

/// Integer stake per agent; penalties floor at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StakeRegistry {
    accounts: BTreeMap<String, StakeAccount>,
}

impl StakeRegistry {
    pub fn register(&mut self, agent_id: impl Into<String>, balance: u64) {
        self.accounts.insert(
            agent_id.into(),
            StakeAccount {
                balance,
                penalties_applied: 0,
            },
        );
    }

    pub fn account(&self, agent_id: &str) -> Option<StakeAccount> {
        self.accounts.get(agent_id).copied()
    }

    pub fn apply_penalty(&mut self, agent_id: &str, amount: u64) -> Result<StakeAccount, AccountError> {
        let account = self
            .accounts
            .get_mut(agent_id)
            .ok_or_else(|| AccountError::UnknownAgent(agent_id.into()))?;
        account.balance = account.balance.saturating_sub(amount);
        account.penalties_applied += 1;
        Ok(*account)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&str, &StakeAccount)> {
        self.accounts.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Per-agent token buckets over the simulated clock.
#[derive(Debug, Clone, Default)]
pub struct RateLimiter {
    config: RateConfig,
    buckets: BTreeMap<String, Bucket>,
}

impl RateLimiter {
    pub fn new(config: RateConfig) -> RateLimiter {
        RateLimiter {
            config,
            buckets: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> RateConfig {
        self.config
    }

    /// Tokens available to `agent_id` at `now` without consuming any.
    pub fn available(&self, agent_id: &str, now: u64) -> f64 {
        match self.buckets.get(agent_id) {
            None => self.config.capacity,
            Some(b) => self.refilled(b, now),
        }
    }

    fn refilled(&self, b: &Bucket, now: u64) -> f64 {
        let elapsed = now.saturating_sub(b.last) as f64;
        (b.tokens + elapsed * self.config.refill_per_minute).min(self.config.capacity)
    }

    /// Takes one token if available. Agents registered in `stakes` with a
    /// zero balance are always denied.
    pub fn consume(&mut self, stakes: &StakeRegistry, agent_id: &str, now: u64) -> bool {
        if stakes.account(agent_id).is_some_and(|a| a.balance == 0) {
            return false;
        }
        let tokens = self.available(agent_id, now);
        let last = self
            .buckets
            .get(agent_id)
            .map_or(now, |b| b.last.max(now));
        if tokens < 1.0 {
            self.buckets.insert(agent_id.into(), Bucket { tokens, last });
            return false;
        }
        self.buckets.insert(
            agent_id.into(),
            Bucket {
                tokens: tokens - 1.0,
                last,
            },
        );
        true
    }
}

/// Free-function form of [`RateLimiter::consume`].
pub fn consume_rate_token(
    limiter: &mut RateLimiter,
    stakes: &StakeRegistry,
    agent_id: &str,
    now: u64,
) -> bool {
    limiter.consume(stakes, agent_id, now)
}
