use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mdp::argmax, sample_index, softmax, Environment, Policy, PolicyKind};
use crate::seed::{rng, ENV_STREAM, EXPLORATION_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DQN")]
    Dqn,
    #[serde(rename = "PPO")]
    Ppo,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub gamma: f64,
    pub episodes: u32,
    pub entropy_coeff_start: f64,
    pub entropy_coeff_end: f64,
    pub clip_epsilon: f64,
    /// PPO optimisation passes over each collected episode.
    pub ppo_epochs: u32,
    /// Step size of the per-state running return baseline.
    pub baseline_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of training over which ε decays linearly to its end value.
    pub epsilon_decay_fraction: f64,
    pub max_episode_steps: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::ppo()
    }
}

impl TrainConfig {
    pub fn ppo() -> TrainConfig {
        TrainConfig {
            algorithm: Algorithm::Ppo,
            learning_rate: 3e-4,
            gamma: 0.99,
            episodes: 10_000,
            entropy_coeff_start: 0.01,
            entropy_coeff_end: 0.0,
            clip_epsilon: 0.2,
            ppo_epochs: 4,
            baseline_rate: 0.05,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.8,
            max_episode_steps: 200,
            seed: 0,
        }
    }

    pub fn dqn() -> TrainConfig {
        TrainConfig {
            algorithm: Algorithm::Dqn,
            learning_rate: 1e-4,
            ..TrainConfig::ppo()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Invalid(msg.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.clip_epsilon) || self.clip_epsilon == 0.0 {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.entropy_coeff_start < 0.0 || self.entropy_coeff_end < 0.0 {
            return bad("entropy coefficients must be non-negative");
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return bad("exploration rates must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.baseline_rate) {
            return bad("baseline_rate must lie in [0, 1]");
        }
        if self.ppo_epochs == 0 || self.max_episode_steps == 0 {
            return bad("ppo_epochs and max_episode_steps must be positive");
        }
        Ok(())
    }

    /// Linear interpolation that hits both endpoints exactly.
    fn lerp(start: f64, end: f64, t: f64) -> f64 {
        start * (1.0 - t) + end * t
    }

    fn progress(&self, episode: u32, span: f64) -> f64 {
        if self.episodes <= 1 {
            return 0.0;
        }
        let last = (self.episodes - 1) as f64 * span;
        (episode as f64 / last).min(1.0)
    }

    /// Entropy bonus weight for `episode` (0-based): `start` at the first
    /// episode, `end` at the last.
    pub fn entropy_coeff(&self, episode: u32) -> f64 {
        Self::lerp(
            self.entropy_coeff_start,
            self.entropy_coeff_end,
            self.progress(episode, 1.0),
        )
    }

    pub fn exploration_rate(&self, episode: u32) -> f64 {
        Self::lerp(
            self.epsilon_start,
            self.epsilon_end,
            self.progress(episode, self.epsilon_decay_fraction),
        )
    }
}

/// Runs whichever algorithm `config` names.
pub fn train<E: Environment>(env: &mut E, config: &TrainConfig) -> Result<Policy, TrainError> {
    match config.algorithm {
        Algorithm::Dqn => train_dqn(env, config),
        Algorithm::Ppo => train_ppo(env, config),
    }
}

/// Tabular Q-learning with linearly decaying ε-greedy exploration.
pub fn train_dqn<E: Environment>(env: &mut E, config: &TrainConfig) -> Result<Policy, TrainError> {
    config.validate()?;
    let m = env.actions().len();
    let mut policy = Policy::uniform(PolicyKind::TabularGreedy, env.actions().to_vec(), env.num_states());
    policy.exploration = config.epsilon_end;
    let mut env_rng = rng(config.seed, ENV_STREAM);
    let mut explore_rng = rng(config.seed, EXPLORATION_STREAM);
    let q = &mut policy.params;

    for episode in 0..config.episodes {
        let eps = config.exploration_rate(episode);
        let mut s = env.reset(&mut env_rng);
        for _ in 0..config.max_episode_steps {
            let a = {
                use rand::Rng;
                if explore_rng.gen::<f64>() < eps {
                    explore_rng.gen_range(0..m)
                } else {
                    argmax(&q[s * m..(s + 1) * m])
                }
            };
            let step = env.step(a, &mut env_rng);
            let bootstrap = if step.terminal {
                0.0
            } else {
                let next = &q[step.next * m..(step.next + 1) * m];
                next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let target = step.reward + config.gamma * bootstrap;
            q[s * m + a] += config.learning_rate * (target - q[s * m + a]);
            if step.ends_episode() {
                break;
            }
            s = step.next;
        }
    }
    Ok(policy)
}

/// One decision inside a PPO update batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoSample {
    pub state: usize,
    pub action: usize,
    pub advantage: f64,
    /// Probability of `action` under the policy that collected the sample.
    pub old_prob: f64,
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Clipped surrogate plus entropy bonus, averaged over the batch:
/// `mean_t [ min(ρ_t A_t, clip(ρ_t, 1−ε, 1+ε) A_t) + c H(π(·|s_t)) ]`.
pub fn surrogate_objective(
    theta: &[f64],
    num_actions: usize,
    batch: &[PpoSample],
    entropy_coeff: f64,
    clip_epsilon: f64,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|x| {
            let p = softmax(&theta[x.state * num_actions..(x.state + 1) * num_actions]);
            let ratio = p[x.action] / x.old_prob;
            let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
            (ratio * x.advantage).min(clipped * x.advantage) + entropy_coeff * entropy(&p)
        })
        .sum();
    total / batch.len() as f64
}

/// Closed-form gradient of [`surrogate_objective`] with respect to `theta`.
///
/// With `π = softmax(θ_s)`: `∂ρ/∂θ_s = ρ (e_a − π)` where the unclipped
/// branch is active (zero where the clip binds), and
/// `∂H/∂θ_{s,j} = −π_j (ln π_j + H)`.
pub fn surrogate_gradient(
    theta: &[f64],
    num_actions: usize,
    batch: &[PpoSample],
    entropy_coeff: f64,
    clip_epsilon: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    if batch.is_empty() {
        return grad;
    }
    let scale = 1.0 / batch.len() as f64;
    for x in batch {
        let base = x.state * num_actions;
        let p = softmax(&theta[base..base + num_actions]);
        let ratio = p[x.action] / x.old_prob;
        let clip_binds = (x.advantage >= 0.0 && ratio > 1.0 + clip_epsilon)
            || (x.advantage < 0.0 && ratio < 1.0 - clip_epsilon);
        let h = entropy(&p);
        for j in 0..num_actions {
            let mut g = 0.0;
            if !clip_binds {
                let indicator = if j == x.action { 1.0 } else { 0.0 };
                g += x.advantage * ratio * (indicator - p[j]);
            }
            if p[j] > 0.0 {
                g -= entropy_coeff * p[j] * (p[j].ln() + h);
            }
            grad[base + j] += g * scale;
        }
    }
    grad
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Gradient ascent step.
    fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] += lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Linear-softmax PPO: one episode per update, advantage = discounted
/// return minus a per-state running baseline, `ppo_epochs` Adam steps on
/// the clipped surrogate per episode.
pub fn train_ppo<E: Environment>(env: &mut E, config: &TrainConfig) -> Result<Policy, TrainError> {
    config.validate()?;
    let m = env.actions().len();
    let mut policy = Policy::uniform(PolicyKind::LinearSoftmax, env.actions().to_vec(), env.num_states());
    let mut env_rng = rng(config.seed, ENV_STREAM);
    let mut explore_rng = rng(config.seed, EXPLORATION_STREAM);
    let mut baseline = vec![0.0; env.num_states()];
    let mut adam = Adam::new(policy.params.len());

    let mut trajectory: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut batch: Vec<PpoSample> = Vec::new();
    for episode in 0..config.episodes {
        trajectory.clear();
        let mut s = env.reset(&mut env_rng);
        for _ in 0..config.max_episode_steps {
            let p = softmax(policy.row(s));
            let a = sample_index(&p, &mut explore_rng);
            let step = env.step(a, &mut env_rng);
            trajectory.push((s, a, step.reward, p[a]));
            if step.ends_episode() {
                break;
            }
            s = step.next;
        }

        batch.clear();
        let mut ret = 0.0;
        for &(state, action, reward, old_prob) in trajectory.iter().rev() {
            ret = reward + config.gamma * ret;
            batch.push(PpoSample {
                state,
                action,
                advantage: ret - baseline[state],
                old_prob,
            });
        }
        batch.reverse();
        let mut ret = 0.0;
        for &(state, _, reward, _) in trajectory.iter().rev() {
            ret = reward + config.gamma * ret;
            baseline[state] += config.baseline_rate * (ret - baseline[state]);
        }

        let coeff = config.entropy_coeff(episode);
        for _ in 0..config.ppo_epochs {
            let grad =
                surrogate_gradient(&policy.params, m, &batch, coeff, config.clip_epsilon);
            adam.ascend(&mut policy.params, &grad, config.learning_rate);
        }
    }
    Ok(policy)
}

/// Mean undiscounted episode return of `choose` over `episodes` episodes.
pub fn mean_return<E: Environment>(
    env: &mut E,
    episodes: u32,
    max_steps: u32,
    seed: u64,
    mut choose: impl FnMut(usize, &mut rand_chacha::ChaCha8Rng) -> usize,
) -> f64 {
    let mut env_rng = rng(seed, ENV_STREAM);
    let mut act_rng = rng(seed, EXPLORATION_STREAM);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(&mut env_rng);
        for _ in 0..max_steps {
            let step = env.step(choose(s, &mut act_rng), &mut env_rng);
            total += step.reward;
            if step.ends_episode() {
                break;
            }
            s = step.next;
        }
    }
    total / episodes.max(1) as f64
}
