use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{encode_state, Environment, Step, NUM_STATES};
use crate::agents::{dispatch, DefenseAgents, DispatchTrace, ExecutionGraph, RuleReasoner};
use crate::domain::{AttackScenario, MitigationAction};
use crate::env::{EnvState, PipelineEnv};

/// The attacks injected into one training episode; empty means a benign run.
pub type EpisodeSpec = Vec<AttackScenario>;

/// The simulated pipeline seen through the agents and the state encoding,
/// as an [`Environment`] over [`NUM_STATES`] states and all eight actions.
pub struct PipelineTask {
    pub env: PipelineEnv,
    pub graph: ExecutionGraph,
    pub agents: DefenseAgents,
    pub reasoner: RuleReasoner,
    pub episodes: Vec<EpisodeSpec>,
    current: Option<EnvState>,
}

impl PipelineTask {
    pub fn new(
        env: PipelineEnv,
        graph: ExecutionGraph,
        agents: DefenseAgents,
        reasoner: RuleReasoner,
        episodes: Vec<EpisodeSpec>,
    ) -> PipelineTask {
        assert!(!episodes.is_empty(), "a pipeline task needs at least one episode spec");
        PipelineTask {
            env,
            graph,
            agents,
            reasoner,
            episodes,
            current: None,
        }
    }

    /// Runs the agents over `state` and encodes the result.
    pub fn perceive(&self, state: &EnvState) -> (usize, DispatchTrace) {
        let trace = dispatch(&self.graph, &self.agents, state, &self.reasoner);
        (encode_state(state, &trace.assessment), trace)
    }

    pub fn current(&self) -> Option<&EnvState> {
        self.current.as_ref()
    }
}

impl Environment for PipelineTask {
    fn num_states(&self) -> usize {
        NUM_STATES
    }

    fn actions(&self) -> &[MitigationAction] {
        &MitigationAction::ALL
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> usize {
        let pick = rng.gen_range(0..self.episodes.len());
        let seed: u64 = rng.gen();
        let state = self
            .env
            .reset(&self.episodes[pick], seed)
            .expect("episode specs are validated scenarios");
        let (id, _) = self.perceive(&state);
        self.current = Some(state);
        id
    }

    fn step(&mut self, action: usize, _rng: &mut ChaCha8Rng) -> Step {
        let state = self.current.take().expect("reset before step");
        let transition = self
            .env
            .step(&state, MitigationAction::ALL[action])
            .expect("a live, unpaused run accepts every action");
        let next = if transition.done {
            0
        } else {
            self.perceive(&transition.next_state).0
        };
        self.current = Some(transition.next_state);
        Step {
            next,
            reward: transition.reward,
            terminal: transition.done,
            truncated: false,
        }
    }
}
