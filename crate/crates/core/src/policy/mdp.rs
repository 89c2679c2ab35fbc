use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Environment, Step};
use crate::domain::MitigationAction;
use crate::env::{compute_reward, OutcomeFlags, RewardParams};

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("discount factor {0} must lie in [0, 1)")]
    Gamma(f64),
    #[error("transition row (state {state}, action {action}) sums to {sum}, not 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("negative transition probability at state {state}, action {action}")]
    NegativeProbability { state: usize, action: usize },
    #[error("table shape does not match {states} states x {actions} actions")]
    Shape { states: usize, actions: usize },
    #[error("start state {0} out of range")]
    Start(usize),
    #[error("tolerance must be positive")]
    Tolerance,
}

/// Finite MDP `(S, A, P, R, γ)` with absorbing terminal states.
///
/// Terminal states have value zero; their rows are ignored by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub name: String,
    pub state_names: Vec<String>,
    pub actions: Vec<MitigationAction>,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`, received on taking `a` in `s`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub start: usize,
}

impl MdpSpec {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MdpError::Gamma(self.gamma));
        }
        let (n, m) = (self.num_states(), self.num_actions());
        let shape = MdpError::Shape {
            states: n,
            actions: m,
        };
        if self.transition.len() != n || self.reward.len() != n || self.terminal.len() != n {
            return Err(shape);
        }
        if self.start >= n {
            return Err(MdpError::Start(self.start));
        }
        for s in 0..n {
            if self.transition[s].len() != m || self.reward[s].len() != m {
                return Err(shape);
            }
            for a in 0..m {
                let row = &self.transition[s][a];
                if row.len() != n {
                    return Err(shape);
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(MdpError::NegativeProbability {
                        state: s,
                        action: a,
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MdpError::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// One-step lookahead `Q(s, a) = R(s, a) + γ Σ P(s'|s,a) V(s')`.
    pub fn q_values(&self, values: &[f64]) -> Vec<Vec<f64>> {
        (0..self.num_states())
            .map(|s| {
                (0..self.num_actions())
                    .map(|a| {
                        if self.terminal[s] {
                            return 0.0;
                        }
                        let future: f64 = self.transition[s][a]
                            .iter()
                            .zip(values)
                            .map(|(p, v)| p * v)
                            .sum();
                        self.reward[s][a] + self.gamma * future
                    })
                    .collect()
            })
            .collect()
    }

    /// Non-terminal states reachable from the start state when following
    /// `policy`, in breadth-first order.
    pub fn reachable_under(&self, policy: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.num_states()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(s) = queue.pop_front() {
            if self.terminal[s] {
                continue;
            }
            order.push(s);
            for (next, &p) in self.transition[s][policy[s]].iter().enumerate() {
                if p > 0.0 && !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        order
    }

    /// Same MDP with every reward multiplied by `factor`.
    pub fn scaled_rewards(&self, factor: f64) -> MdpSpec {
        let mut scaled = self.clone();
        for row in &mut scaled.reward {
            for r in row {
                *r *= factor;
            }
        }
        scaled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    /// Greedy action index per state; ties go to the lowest index.
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

/// Index of the largest value, first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Synchronous Bellman optimality iteration until the largest value change
/// drops below `tolerance`.
pub fn value_iteration(mdp: &MdpSpec, tolerance: f64) -> Result<MdpSolution, MdpError> {
    mdp.validate()?;
    if tolerance <= 0.0 || tolerance.is_nan() {
        return Err(MdpError::Tolerance);
    }
    let mut values = vec![0.0; mdp.num_states()];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let q = mdp.q_values(&values);
        let next: Vec<f64> = q
            .iter()
            .enumerate()
            .map(|(s, row)| {
                if mdp.terminal[s] {
                    0.0
                } else {
                    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if delta < tolerance {
            break;
        }
    }
    let policy = mdp.q_values(&values).iter().map(|r| argmax(r)).collect();
    Ok(MdpSolution {
        values,
        policy,
        sweeps,
    })
}

/// Largest Bellman optimality residual `|max_a Q(s,a) − V(s)|`.
pub fn bellman_residual(mdp: &MdpSpec, values: &[f64]) -> f64 {
    mdp.q_values(values)
        .iter()
        .enumerate()
        .filter(|(s, _)| !mdp.terminal[*s])
        .map(|(s, row)| (row.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values[s]).abs())
        .fold(0.0, f64::max)
}

/// Samples episodes from an [`MdpSpec`]; episodes end on a terminal state
/// or after `max_steps`.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    pub mdp: MdpSpec,
    pub max_steps: u32,
    state: usize,
    steps: u32,
}

impl MdpEnv {
    pub fn new(mdp: MdpSpec, max_steps: u32) -> MdpEnv {
        let state = mdp.start;
        MdpEnv {
            mdp,
            max_steps,
            state,
            steps: 0,
        }
    }
}

impl Environment for MdpEnv {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn actions(&self) -> &[MitigationAction] {
        &self.mdp.actions
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> usize {
        self.state = self.mdp.start;
        self.steps = 0;
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> Step {
        let s = self.state;
        let reward = self.mdp.reward[s][action];
        let u: f64 = rng.gen();
        let row = &self.mdp.transition[s][action];
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = i;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        let terminal = self.mdp.terminal[next];
        Step {
            next,
            reward,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        }
    }
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[i] = 1.0;
    row
}

/// States `clean`, `compromised` and an absorbing `done`. From `clean`,
/// allowing the build lets an attack land with probability 0.3; blocking a
/// clean build costs 0.5. In `compromised`, blocking earns +1 and allowing
/// costs −1, both ending the episode.
pub fn toy_mdp() -> MdpSpec {
    MdpSpec {
        name: "toy".into(),
        state_names: vec!["clean".into(), "compromised".into(), "done".into()],
        actions: vec![MitigationAction::AllowContinue, MitigationAction::BlockBuild],
        transition: vec![
            vec![vec![0.7, 0.3, 0.0], one_hot(3, 0)],
            vec![one_hot(3, 2), one_hot(3, 2)],
            vec![one_hot(3, 2), one_hot(3, 2)],
        ],
        reward: vec![vec![0.0, -0.5], vec![-1.0, 1.0], vec![0.0, 0.0]],
        gamma: 0.99,
        terminal: vec![false, false, true],
        start: 0,
    }
}

/// A five-stage pipeline where each reward is `compute_reward` of the
/// outcome an action produces, so scaling the reward parameters scales the
/// whole reward table.
///
/// States are `(stage, clean|attacked)` plus a terminal state. An attack
/// appears at the next stage with probability `attack_prob` while the run
/// is clean. An attack left unmitigated at a stage completes with
/// probability `breach_prob`, ending the run with nothing left to mitigate.
/// Review includes a 25-minute human wait; the guard pull request is
/// accepted with probability 0.75 and review with 0.9.
pub fn pipeline_chain_mdp(params: &RewardParams, attack_prob: f64, breach_prob: f64) -> MdpSpec {
    use MitigationAction::*;
    const STAGES: usize = 5;
    let actions = vec![AllowContinue, BlockBuild, RequestReview, OpenGuardPullRequest];
    let n = STAGES * 2 + 1;
    let terminal = n - 1;
    let id = |stage: usize, attacked: bool| stage * 2 + attacked as usize;
    let advance = |stage: usize, attacked: bool| -> usize {
        if stage + 1 == STAGES {
            terminal
        } else {
            id(stage + 1, attacked)
        }
    };
    let flags = |m: bool, f: bool, a: bool, dt: f64| OutcomeFlags {
        attack_mitigated: m,
        false_positive: f,
        developer_accepted: a,
        build_delay: dt,
    };
    let r = |o: OutcomeFlags| compute_reward(&o, params);

    let mut transition = vec![vec![vec![0.0; n]; actions.len()]; n];
    let mut reward = vec![vec![0.0; actions.len()]; n];
    for stage in 0..STAGES {
        // Clean stage.
        let s = id(stage, false);
        let clean_next = advance(stage, false);
        let attacked_next = advance(stage, true);
        transition[s][0][clean_next] += 1.0 - attack_prob;
        transition[s][0][attacked_next] += attack_prob;
        reward[s][0] = 0.0;
        transition[s][1][terminal] = 1.0;
        reward[s][1] = r(flags(false, true, false, 2.0));
        transition[s][2][clean_next] = 1.0;
        reward[s][2] = r(flags(false, true, false, 25.0));
        transition[s][3][clean_next] = 1.0;
        reward[s][3] = r(flags(false, true, false, 2.0));

        // Attacked stage. Every path that leaves the attack in place risks
        // the breach before the next stage.
        let s = id(stage, true);
        let survive = |row: &mut Vec<f64>, mass: f64| {
            row[terminal] += mass * breach_prob;
            row[attacked_next] += mass * (1.0 - breach_prob);
        };
        survive(&mut transition[s][0], 1.0);
        reward[s][0] = 0.0;
        transition[s][1][terminal] = 1.0;
        reward[s][1] = r(flags(true, false, false, 2.0));
        transition[s][2][terminal] += 0.9;
        survive(&mut transition[s][2], 0.1);
        reward[s][2] =
            0.9 * r(flags(true, false, true, 25.0)) + 0.1 * r(flags(false, false, false, 25.0));
        transition[s][3][terminal] += 0.75;
        survive(&mut transition[s][3], 0.25);
        reward[s][3] =
            0.75 * r(flags(true, false, true, 2.0)) + 0.25 * r(flags(false, false, false, 2.0));
    }
    transition[terminal] = vec![one_hot(n, terminal); actions.len()];
    let mut state_names = Vec::with_capacity(n);
    for stage in 0..STAGES {
        state_names.push(format!("stage{stage}-clean"));
        state_names.push(format!("stage{stage}-attacked"));
    }
    state_names.push("finished".into());
    let mut is_terminal = vec![false; n];
    is_terminal[terminal] = true;
    MdpSpec {
        name: "pipeline-chain".into(),
        state_names,
        actions,
        transition,
        reward,
        gamma: 0.99,
        terminal: is_terminal,
        start: 0,
    }
}

/// A corridor of `len` build steps. Allowing advances but risks a slip into
/// a compromised outcome (−1, terminal) with probability 0.1; finishing the
/// corridor pays +1. Rewards are stored in expectation. Blocking bails out with +0.2; pausing waits in place
/// for −0.05.
pub fn corridor_mdp(len: usize) -> MdpSpec {
    use MitigationAction::*;
    let n = len + 2;
    let success = len;
    let failure = len + 1;
    let actions = vec![AllowContinue, BlockBuild, PauseBuild];
    let mut transition = vec![vec![vec![0.0; n]; 3]; n];
    let mut reward = vec![vec![0.0; 3]; n];
    for s in 0..len {
        let next = s + 1;
        transition[s][0][next] += 0.9;
        transition[s][0][failure] += 0.1;
        // Expected reward: the slip costs 1 with probability 0.1, shipping
        // pays 1 with probability 0.9.
        reward[s][0] = (if next == success { 0.9 } else { 0.0 }) - 0.1;
        transition[s][1][success] = 1.0;
        reward[s][1] = 0.2;
        transition[s][2][s] = 1.0;
        reward[s][2] = -0.05;
    }
    for t in [success, failure] {
        transition[t] = vec![one_hot(n, t); 3];
    }
    let mut state_names: Vec<String> = (0..len).map(|i| format!("step{i}")).collect();
    state_names.push("shipped".into());
    state_names.push("compromised".into());
    let mut terminal = vec![false; n];
    terminal[success] = true;
    terminal[failure] = true;
    MdpSpec {
        name: format!("corridor-{len}"),
        state_names,
        actions,
        transition,
        reward,
        gamma: 0.99,
        terminal,
        start: 0,
    }
}

/// A seeded random MDP with `states` non-terminal states, three actions and
/// a 0.15 per-step chance of ending. Each action leads to two random
/// successors.
pub fn random_mdp(seed: u64, states: usize) -> MdpSpec {
    use MitigationAction::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = states + 1;
    let end = states;
    let actions = vec![AllowContinue, BlockBuild, PauseBuild];
    let mut transition = vec![vec![vec![0.0; n]; actions.len()]; n];
    let mut reward = vec![vec![0.0; actions.len()]; n];
    for s in 0..states {
        for a in 0..actions.len() {
            let split: f64 = rng.gen_range(0.2..0.8);
            let first = rng.gen_range(0..states);
            let second = rng.gen_range(0..states);
            transition[s][a][first] += 0.85 * split;
            transition[s][a][second] += 0.85 * (1.0 - split);
            transition[s][a][end] += 0.15;
            reward[s][a] = rng.gen_range(-1.0..1.0);
        }
    }
    transition[end] = vec![one_hot(n, end); actions.len()];
    let mut state_names: Vec<String> = (0..states).map(|i| format!("s{i}")).collect();
    state_names.push("end".into());
    let mut terminal = vec![false; n];
    terminal[end] = true;
    MdpSpec {
        name: format!("random-{seed}-{states}"),
        state_names,
        actions,
        transition,
        reward,
        gamma: 0.99,
        terminal,
        start: 0,
    }
}

/// The shipped oracle corpus: every MDP has at most 50 states.
pub fn corpus() -> Vec<MdpSpec> {
    vec![
        toy_mdp(),
        pipeline_chain_mdp(&RewardParams::default(), 0.3, 0.5),
        corridor_mdp(6),
        random_mdp(12, 10),
    ]
}

/// How many of the states reachable under the optimal policy get the
/// optimal action from `greedy`: `(matched, reachable)`.
pub fn oracle_agreement(mdp: &MdpSpec, greedy: &[usize]) -> Result<(usize, usize), MdpError> {
    let oracle = value_iteration(mdp, 1e-10)?;
    let reachable = mdp.reachable_under(&oracle.policy);
    let matched = reachable
        .iter()
        .filter(|&&s| greedy[s] == oracle.policy[s])
        .count();
    Ok((matched, reachable.len()))
}

/// Training settings the oracle comparison uses: the 50,000-episode budget
/// and, for PPO, the default Adam step size. Tabular Q-learning uses a step
/// size of 0.01 because the default 1e-4 is an optimizer rate for network
/// weights and leaves a value table far from convergence at this budget.
pub fn oracle_train_config(algorithm: super::Algorithm, seed: u64) -> super::TrainConfig {
    let base = match algorithm {
        super::Algorithm::Dqn => super::TrainConfig {
            learning_rate: 0.01,
            ..super::TrainConfig::dqn()
        },
        super::Algorithm::Ppo => super::TrainConfig::ppo(),
    };
    super::TrainConfig {
        episodes: 50_000,
        seed,
        ..base
    }
}
