//! Mitigation-policy learning: the finite-MDP view of the pipeline, a
//! value-iteration oracle, tabular Q-learning ("DQN") and a linear-softmax
//! PPO with analytic gradients.

mod encoding;
pub mod mdp;
mod pipeline;
mod train;

pub use encoding::{
    encode_state, SeverityBucket, StateFeatures, ENCODING_VERSION, NUM_STATES,
};
pub use mdp::{bellman_residual, value_iteration, MdpEnv, MdpError, MdpSolution, MdpSpec};
pub use pipeline::{EpisodeSpec, PipelineTask};
pub use train::{
    mean_return, surrogate_gradient, surrogate_objective, train, train_dqn, train_ppo, Algorithm,
    PpoSample, TrainConfig, TrainError,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::MitigationAction;

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: usize,
    pub reward: f64,
    /// The episode reached an absorbing state; nothing to bootstrap from.
    pub terminal: bool,
    /// The episode was cut off by a step limit in a non-terminal state.
    pub truncated: bool,
}

impl Step {
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Episodic task with a finite, integer-indexed state space.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn actions(&self) -> &[MitigationAction];
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> usize;
    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> Step;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Per-state action values; acts greedily, explores ε-greedily.
    TabularGreedy,
    /// Per-state logits over one-hot state features; acts by softmax.
    LinearSoftmax,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("state id {state} out of range (policy has {num_states} states)")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("policy snapshot is malformed: {0}")]
    Snapshot(String),
    #[error("policy snapshot uses encoding version {found}, expected {expected}")]
    EncodingVersion { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    pub actions: Vec<MitigationAction>,
    pub num_states: usize,
    /// Row-major `num_states x actions.len()`: Q-values or logits.
    pub params: Vec<f64>,
    /// ε used when a tabular policy explores.
    pub exploration: f64,
}

impl Policy {
    /// All-zero parameters: uniform softmax, greedy picks the first action.
    pub fn uniform(kind: PolicyKind, actions: Vec<MitigationAction>, num_states: usize) -> Policy {
        Policy {
            kind,
            params: vec![0.0; num_states * actions.len()],
            actions,
            num_states,
            exploration: 0.05,
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let m = self.actions.len();
        &self.params[state * m..(state + 1) * m]
    }

    fn check(&self, state: usize) -> Result<(), PolicyError> {
        if state >= self.num_states {
            return Err(PolicyError::StateOutOfRange {
                state,
                num_states: self.num_states,
            });
        }
        Ok(())
    }

    pub fn greedy_index(&self, state: usize) -> Result<usize, PolicyError> {
        self.check(state)?;
        Ok(mdp::argmax(self.row(state)))
    }

    /// Greedy action index for every state.
    pub fn greedy_table(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| mdp::argmax(self.row(s)))
            .collect()
    }

    /// The distribution `select_action` samples from when exploring.
    pub fn probabilities(&self, state: usize) -> Result<Vec<f64>, PolicyError> {
        self.check(state)?;
        Ok(match self.kind {
            PolicyKind::LinearSoftmax => softmax(self.row(state)),
            PolicyKind::TabularGreedy => {
                let m = self.actions.len() as f64;
                let mut p = vec![self.exploration / m; self.actions.len()];
                p[mdp::argmax(self.row(state))] += 1.0 - self.exploration;
                p
            }
        })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Draws an index from a discrete distribution.
pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Greedy (fixed tie-break) when `explore` is false, otherwise a draw from
/// [`Policy::probabilities`] using `rng`.
pub fn select_action(
    policy: &Policy,
    state: usize,
    explore: bool,
    rng: &mut ChaCha8Rng,
) -> Result<MitigationAction, PolicyError> {
    let index = if explore {
        sample_index(&policy.probabilities(state)?, rng)
    } else {
        policy.greedy_index(state)?
    };
    Ok(policy.actions[index])
}

/// Versioned policy file: the policy plus what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySnapshot {
    pub format_version: u32,
    pub encoding_version: u32,
    pub policy: Policy,
    pub train_config: TrainConfig,
}

impl PolicySnapshot {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(policy: Policy, train_config: TrainConfig) -> PolicySnapshot {
        PolicySnapshot {
            format_version: Self::FORMAT_VERSION,
            encoding_version: ENCODING_VERSION,
            policy,
            train_config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy snapshots serialize")
    }

    pub fn from_json(json: &str) -> Result<PolicySnapshot, PolicyError> {
        let snapshot: PolicySnapshot =
            serde_json::from_str(json).map_err(|e| PolicyError::Snapshot(e.to_string()))?;
        if snapshot.format_version != Self::FORMAT_VERSION {
            return Err(PolicyError::Snapshot(format!(
                "unsupported format version {}",
                snapshot.format_version
            )));
        }
        if snapshot.encoding_version != ENCODING_VERSION {
            return Err(PolicyError::EncodingVersion {
                found: snapshot.encoding_version,
                expected: ENCODING_VERSION,
            });
        }
        let p = &snapshot.policy;
        if p.params.len() != p.num_states * p.actions.len() || p.actions.is_empty() {
            return Err(PolicyError::Snapshot("parameter table has the wrong shape".into()));
        }
        Ok(snapshot)
    }
}
