//! Scenario corpora that experiments run over.

use pipeward_core::policy::EpisodeSpec;
use pipeward_core::domain::ScenarioError;
use pipeward_core::{seed, AttackScenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("suite `{0}` has neither attack scenarios nor benign runs")]
    Empty(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("duplicate scenario id `{0}`")]
    DuplicateId(String),
}

/// Attack scenarios plus a number of attack-free runs. Each scenario is run
/// on its own; benign runs carry no scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSuite {
    pub id: String,
    #[serde(default)]
    pub benign_runs: usize,
    pub scenarios: Vec<AttackScenario>,
}

impl ScenarioSuite {
    /// The shipped calibration suite: per class one strongly signalled
    /// attack, six whose evidence is split over two medium indicators, and
    /// three that only surface through cross-stage correlation.
    pub fn calibration() -> ScenarioSuite {
        ScenarioSuite::from_json(include_str!("../data/calibration_suite.json"))
            .expect("shipped calibration suite is valid")
    }

    pub fn from_json(json: &str) -> Result<ScenarioSuite, SuiteError> {
        let suite: ScenarioSuite = serde_json::from_str(json)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.scenarios.is_empty() && self.benign_runs == 0 {
            return Err(SuiteError::Empty(self.id.clone()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(SuiteError::DuplicateId(s.id.clone()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the suite's canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("suites serialize");
        hex::encode(Sha256::digest(bytes))
    }

    /// One spec per scenario followed by the benign runs.
    pub fn episode_specs(&self) -> Vec<EpisodeSpec> {
        self.scenarios
            .iter()
            .map(|s| vec![s.clone()])
            .chain(std::iter::repeat_with(Vec::new).take(self.benign_runs))
            .collect()
    }

    /// Spec and run seed of episode `index` when `episodes` are cycled over
    /// the suite.
    pub fn episode(&self, index: usize, seed: u64) -> (EpisodeSpec, u64) {
        let specs = self.episode_specs();
        let spec = specs[index % specs.len()].clone();
        let run_seed = seed::splitmix64(seed::substream(seed, EPISODE_STREAM).wrapping_add(index as u64));
        (spec, run_seed)
    }
}

const EPISODE_STREAM: &str = "eval-episodes";
