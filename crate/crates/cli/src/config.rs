//! Run configuration: one JSON file naming every input of a command.
//!
//! Relative paths resolve against the directory holding the config file.
//! Every referenced file is read and validated before any command starts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use pipeward_core::env::EnvConfig;
use pipeward_core::policy::mdp::{oracle_train_config, toy_mdp, MdpSpec};
use pipeward_core::policy::{Algorithm, Policy, PolicySnapshot, TrainConfig};
use pipeward_eval::{
    calibration_env, calibration_train_config, BaselineKind, Component, ExperimentOptions,
    ScenarioSuite,
};
use pipeward_protocol::World;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "pipeward-out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    seed: Option<u64>,
    /// Scenario suite JSON; the calibration suite when absent.
    suite: Option<PathBuf>,
    /// Environment config JSON.
    env: Option<PathBuf>,
    /// Training overrides, merged over the shipped recipe.
    train: Option<PathBuf>,
    /// `"toy"` or a path to an MDP JSON; switches `train` to the MDP.
    mdp: Option<String>,
    /// Protocol world JSON for `protocol replay`.
    world: Option<PathBuf>,
    out: Option<PathBuf>,
    episodes: Option<usize>,
    review_latency_minutes: Option<f64>,
    arms: Option<Vec<String>>,
    disable: Vec<String>,
    /// Pre-trained policy snapshots, keyed by arm name.
    policies: BTreeMap<String, PathBuf>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub arms: Option<String>,
    pub disable: Option<String>,
}

/// A fully loaded and validated run configuration.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub suite: ScenarioSuite,
    /// The environment file's config, when one was given.
    pub env_file: Option<EnvConfig>,
    pub options: ExperimentOptions,
    pub train: TrainConfig,
    pub mdp: Option<MdpSpec>,
    pub world: World,
    pub out: PathBuf,
    /// Arms named in the config or on the command line, if any.
    pub arms: Option<Vec<BaselineKind>>,
    pub policies: BTreeMap<BaselineKind, Policy>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn parse_arms(list: &str) -> Result<Vec<BaselineKind>, CliError> {
    let mut arms = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let arm = BaselineKind::parse(name).ok_or_else(|| {
            CliError::config(format!(
                "unknown arm `{name}` (expected one of RuleBased, ProvenanceOnly, RLOnly, Proposed)"
            ))
        })?;
        if !arms.contains(&arm) {
            arms.push(arm);
        }
    }
    if arms.is_empty() {
        return Err(CliError::config("no arm selected"));
    }
    Ok(arms)
}

fn parse_components<'a>(names: impl Iterator<Item = &'a str>) -> Result<BTreeSet<Component>, CliError> {
    names
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            Component::parse(name).ok_or_else(|| {
                CliError::config(format!(
                    "unknown component `{name}` (expected reasoner, rl or ledger)"
                ))
            })
        })
        .collect()
}

/// Overlays the keys of `overrides` on `base`; unknown keys are rejected
/// by `TrainConfig`'s own deserializer.
fn merge_train(base: &TrainConfig, overrides: &Map<String, Value>) -> Result<TrainConfig, String> {
    let Value::Object(mut merged) = serde_json::to_value(base).map_err(|e| e.to_string())? else {
        unreachable!("TrainConfig serializes to an object")
    };
    merged.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
    serde_json::from_value(Value::Object(merged)).map_err(|e| e.to_string())
}

fn load_mdp(spec: &str, dir: &Path) -> Result<MdpSpec, CliError> {
    let mdp = if spec == "toy" {
        toy_mdp()
    } else {
        let path = dir.join(spec);
        serde_json::from_str::<MdpSpec>(&read(&path)?).map_err(|e| CliError::parse(&path, e))?
    };
    mdp.validate()
        .map_err(|e| CliError::config(format!("invalid MDP `{}`: {e}", mdp.name)))?;
    Ok(mdp)
}

impl Settings {
    /// Loads `config` (or the defaults when absent) and applies `overrides`.
    pub fn load(config: Option<&Path>, overrides: &Overrides) -> Result<Settings, CliError> {
        let (raw, dir) = match config {
            Some(path) => {
                let raw: RunConfig =
                    serde_json::from_str(&read(path)?).map_err(|e| CliError::parse(path, e))?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (raw, dir)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        let seed = overrides.seed.or(raw.seed).unwrap_or(DEFAULT_SEED);

        let suite = match &raw.suite {
            Some(rel) => {
                let path = dir.join(rel);
                let suite = ScenarioSuite::from_json(&read(&path)?).map_err(|e| CliError::parse(&path, e))?;
                suite.validate().map_err(|e| CliError::parse(&path, e))?;
                suite
            }
            None => ScenarioSuite::calibration(),
        };

        let env_file = match &raw.env {
            Some(rel) => {
                let path = dir.join(rel);
                Some(EnvConfig::from_json(&read(&path)?).map_err(|e| CliError::parse(&path, e))?)
            }
            None => None,
        };

        let mdp = raw.mdp.as_deref().map(|m| load_mdp(m, &dir)).transpose()?;

        let train_overrides = match &raw.train {
            Some(rel) => {
                let path = dir.join(rel);
                serde_json::from_str::<Map<String, Value>>(&read(&path)?)
                    .map_err(|e| CliError::parse(&path, e))?
            }
            None => Map::new(),
        };
        let algorithm = match train_overrides.get("algorithm") {
            Some(v) => serde_json::from_value::<Algorithm>(v.clone())
                .map_err(|e| CliError::config(format!("invalid training algorithm: {e}")))?,
            None => Algorithm::Dqn,
        };
        let base = match mdp {
            Some(_) => oracle_train_config(algorithm, seed),
            None => TrainConfig {
                algorithm,
                ..calibration_train_config(seed)
            },
        };
        let train = merge_train(&base, &train_overrides)
            .map_err(|e| CliError::config(format!("invalid training config: {e}")))?;
        train
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;

        let world = match &raw.world {
            Some(rel) => {
                let path = dir.join(rel);
                serde_json::from_str(&read(&path)?).map_err(|e| CliError::parse(&path, e))?
            }
            None => World::shipped(),
        };

        let defaults = ExperimentOptions::default();
        let disable = match &overrides.disable {
            Some(list) => parse_components(list.split(','))?,
            None => parse_components(raw.disable.iter().map(String::as_str))?,
        };
        let options = ExperimentOptions {
            env: env_file.clone().unwrap_or_else(calibration_env),
            episodes: raw.episodes.unwrap_or(defaults.episodes),
            review_latency_minutes: raw
                .review_latency_minutes
                .unwrap_or(defaults.review_latency_minutes),
            disable,
        };
        if !(options.review_latency_minutes >= 0.0 && options.review_latency_minutes.is_finite()) {
            return Err(CliError::config("review_latency_minutes must be non-negative"));
        }

        let arms = match (&overrides.arms, &raw.arms) {
            (Some(list), _) => Some(parse_arms(list)?),
            (None, Some(names)) => Some(parse_arms(&names.join(","))?),
            (None, None) => None,
        };

        let mut policies = BTreeMap::new();
        for (name, rel) in &raw.policies {
            let arm = parse_arms(name)?[0];
            let path = dir.join(rel);
            let snapshot = PolicySnapshot::from_json(&read(&path)?).map_err(|e| CliError::parse(&path, e))?;
            policies.insert(arm, snapshot.policy);
        }

        let out = match (&overrides.out, &raw.out) {
            (Some(out), _) => out.clone(),
            (None, Some(rel)) => dir.join(rel),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };

        Ok(Settings {
            seed,
            suite,
            env_file,
            options,
            train,
            mdp,
            world,
            out,
            arms,
            policies,
        })
    }
}
