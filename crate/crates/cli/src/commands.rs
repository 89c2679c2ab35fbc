use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pipeward_core::env::{EnvConfig, PipelineEnv};
use pipeward_core::policy::mdp::oracle_agreement;
use pipeward_core::policy::{train, MdpEnv, Policy, PolicySnapshot};
use pipeward_eval::{
    ablation, compare, run_experiment, train_policy, BaselineKind, Component, Experiment,
    MetricsReport,
};
use pipeward_ledger::{decode_chain, verify_bytes, Block, ChainVerdict, GenesisConfig};
use pipeward_protocol::{replay, Connection, ReplayError, SimulatedConnector};

use crate::config::Settings;
use crate::error::CliError;

/// Every file a command writes goes through here, rooted at the
/// configured output directory.
pub struct Output {
    root: PathBuf,
}

impl Output {
    pub fn new(root: &Path) -> Output {
        Output {
            root: root.to_path_buf(),
        }
    }

    pub fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
        Ok(path)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::read(path, e))
}

pub fn scenarios(settings: &Settings) -> Result<(), CliError> {
    let suite = &settings.suite;
    println!(
        "suite {} ({} scenarios, {} benign runs, hash {})",
        suite.id,
        suite.scenarios.len(),
        suite.benign_runs,
        suite.hash()
    );
    for s in &suite.scenarios {
        println!(
            "  {:10} {:24} {:18} severity {:.2} syntactic {} semantic {}",
            s.id, s.class, s.stage, s.severity, s.syntactic_detectable, s.semantic_detectable
        );
    }
    let json = serde_json::to_string_pretty(suite).map_err(|e| CliError::Contract(e.to_string()))?;
    let path = Output::new(&settings.out).write("suite.json", json + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Resolves the policy an arm runs with: a configured snapshot, else a
/// freshly trained one. Arms without a learned policy get `None`.
fn policy_for(
    arm: BaselineKind,
    settings: &Settings,
    cache: &mut BTreeMap<BaselineKind, Policy>,
) -> Result<Option<Policy>, CliError> {
    let rl_off = settings.options.disable.contains(&Component::Rl);
    if !arm.needs_policy() || (arm == BaselineKind::Proposed && rl_off) {
        return Ok(None);
    }
    if let Some(p) = settings.policies.get(&arm).or_else(|| cache.get(&arm)) {
        return Ok(Some(p.clone()));
    }
    eprintln!("training {arm} policy ({} episodes)", settings.train.episodes);
    let policy = train_policy(arm, &settings.suite, &settings.options.env, &settings.train)?;
    cache.insert(arm, policy.clone());
    Ok(Some(policy))
}

fn traces_jsonl(e: &Experiment) -> Result<String, CliError> {
    let mut out = String::new();
    for t in &e.traces {
        out += &serde_json::to_string(t).map_err(|err| CliError::Contract(err.to_string()))?;
        out.push('\n');
    }
    Ok(out)
}

/// Writes report, traces and (when present) the ledger of one run under
/// `prefix`-qualified names.
fn write_experiment(out: &Output, name: &str, e: &Experiment) -> Result<(), CliError> {
    out.write(&format!("reports/{name}.json"), e.report.to_json() + "\n")?;
    out.write(&format!("reports/{name}.csv"), e.report.to_csv())?;
    out.write(&format!("traces/{name}.jsonl"), traces_jsonl(e)?)?;
    if let Some(ledger) = &e.ledger {
        out.write(&format!("ledger/{name}.bin"), ledger.to_bytes())?;
        out.write(&format!("ledger/{name}.genesis.json"), ledger.genesis().to_json() + "\n")?;
    }
    Ok(())
}

fn summarize(report: &MetricsReport) {
    let m = &report.metrics;
    let f1: Vec<String> = m
        .per_class
        .iter()
        .map(|(class, c)| format!("{class} {:.3}", c.f1))
        .collect();
    let mttm = m
        .mttm_minutes
        .map_or("n/a".to_string(), |v| format!("{v:.2} min"));
    println!(
        "{:15} episodes {} | F1 {} | MTTM {} | overhead {:.2}% | autonomy {:.3} | rollback {:.3}",
        report.arm.name(),
        m.episodes,
        f1.join(", "),
        mttm,
        m.overhead_percent,
        m.autonomy_rate,
        m.rollback_success_rate
    );
}

fn save_policy(out: &Output, arm: BaselineKind, policy: &Policy, settings: &Settings) -> Result<(), CliError> {
    let snapshot = PolicySnapshot::new(policy.clone(), settings.train.clone());
    out.write(&format!("policies/{}.json", arm.name()), snapshot.to_json() + "\n")?;
    Ok(())
}

pub fn simulate(settings: &Settings) -> Result<(), CliError> {
    let arm = match &settings.arms {
        Some(arms) if arms.len() == 1 => arms[0],
        Some(_) => return Err(CliError::config("simulate runs exactly one arm")),
        None => BaselineKind::Proposed,
    };
    let policy = policy_for(arm, settings, &mut BTreeMap::new())?;
    let e = run_experiment(arm, &settings.suite, settings.seed, policy.as_ref(), &settings.options)?;
    let out = Output::new(&settings.out);
    write_experiment(&out, arm.name(), &e)?;
    summarize(&e.report);
    println!("wrote {}", settings.out.display());
    Ok(())
}

pub fn train_cmd(settings: &Settings, arm: Option<BaselineKind>) -> Result<(), CliError> {
    let out = Output::new(&settings.out);
    if let Some(mdp) = &settings.mdp {
        let mut env = MdpEnv::new(mdp.clone(), settings.train.max_episode_steps);
        let policy = train(&mut env, &settings.train).map_err(|e| CliError::config(e.to_string()))?;
        let (matched, reachable) = oracle_agreement(mdp, &policy.greedy_table())
            .map_err(|e| CliError::Contract(e.to_string()))?;
        let snapshot = PolicySnapshot::new(policy, settings.train.clone());
        let path = out.write("policy.json", snapshot.to_json() + "\n")?;
        println!(
            "trained {:?} on MDP `{}` for {} episodes; oracle agreement {matched}/{reachable} reachable states",
            settings.train.algorithm, mdp.name, settings.train.episodes
        );
        println!("wrote {}", path.display());
        return Ok(());
    }
    let arm = arm.unwrap_or(BaselineKind::Proposed);
    if !arm.needs_policy() {
        return Err(CliError::config(format!("arm {arm} has no policy to train")));
    }
    let policy = train_policy(arm, &settings.suite, &settings.options.env, &settings.train)?;
    save_policy(&out, arm, &policy, settings)?;
    println!(
        "trained {arm} policy with {:?} for {} episodes",
        settings.train.algorithm, settings.train.episodes
    );
    println!("wrote {}", settings.out.join("policies").display());
    Ok(())
}

fn write_comparison(out: &Output, reports: &[MetricsReport]) -> Result<(), CliError> {
    let c = compare(reports).map_err(|e| CliError::config(e.to_string()))?;
    out.write("comparison/comparison.json", c.to_json() + "\n")?;
    out.write("comparison/f1.csv", c.f1_csv())?;
    out.write("comparison/f1_gaps.csv", c.gaps_csv())?;
    out.write("comparison/mttm.csv", c.mttm_csv())?;
    out.write("comparison/overhead.csv", c.overhead_csv())?;
    print!("{}", c.mttm_csv());
    Ok(())
}

pub fn evaluate(settings: &Settings) -> Result<(), CliError> {
    let arms = settings.arms.clone().unwrap_or_else(|| BaselineKind::ALL.to_vec());
    let disable = settings.options.disable.clone();
    if !disable.is_empty() && !arms.contains(&BaselineKind::Proposed) {
        return Err(CliError::config("--disable needs the Proposed arm in the evaluation"));
    }
    // Every arm runs complete; the ablation is a separate run against the
    // unablated Proposed report.
    let base_options = pipeward_eval::ExperimentOptions {
        disable: Default::default(),
        ..settings.options.clone()
    };
    let base_settings = Settings {
        options: base_options.clone(),
        ..settings.clone()
    };
    let out = Output::new(&settings.out);
    let mut cache = BTreeMap::new();
    let mut reports = Vec::new();
    for &arm in &arms {
        let policy = policy_for(arm, &base_settings, &mut cache)?;
        if let Some(p) = &policy {
            if !settings.policies.contains_key(&arm) {
                save_policy(&out, arm, p, settings)?;
            }
        }
        let e = run_experiment(arm, &settings.suite, settings.seed, policy.as_ref(), &base_options)?;
        write_experiment(&out, arm.name(), &e)?;
        summarize(&e.report);
        reports.push(e.report);
    }
    if reports.len() >= 2 {
        write_comparison(&out, &reports)?;
    }
    if !disable.is_empty() {
        let baseline = reports
            .iter()
            .find(|r| r.arm == BaselineKind::Proposed)
            .expect("Proposed arm was run");
        let policy = if disable.contains(&Component::Rl) {
            None
        } else {
            policy_for(BaselineKind::Proposed, &base_settings, &mut cache)?
        };
        let (delta, e) = ablation(baseline, &settings.suite, policy.as_ref(), &base_options, &disable)?;
        let names: Vec<&str> = disable.iter().map(|c| c.name()).collect();
        let tag = format!("Proposed-without-{}", names.join("-"));
        write_experiment(&out, &tag, &e)?;
        out.write("ablation/ablation.json", delta.to_json() + "\n")?;
        out.write("ablation/ablation.csv", delta.to_csv())?;
        summarize(&e.report);
        for c in &delta.per_class {
            println!(
                "  without {}: {} recall {:+.3} f1 {:+.3}",
                names.join("+"),
                c.class,
                c.recall,
                c.f1
            );
        }
        println!(
            "  false positives {:+}, confusion identical: {}",
            delta.false_positive_delta, delta.confusion_identical
        );
    }
    println!("wrote {}", settings.out.display());
    Ok(())
}

pub fn compare_cmd(paths: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        reports.push(MetricsReport::from_json(&text).map_err(|e| CliError::parse(path, e))?);
    }
    write_comparison(&Output::new(out), &reports)?;
    println!("wrote {}", out.join("comparison").display());
    Ok(())
}

fn load_genesis(ledger: &Path, genesis: Option<&Path>) -> Result<GenesisConfig, CliError> {
    let path = match genesis {
        Some(p) => p.to_path_buf(),
        None => default_genesis(ledger),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::read(&path, e))?;
    GenesisConfig::from_json(&text).map_err(|e| CliError::parse(&path, e))
}

/// `x.bin` pairs with `x.genesis.json` next to it.
fn default_genesis(ledger: &Path) -> PathBuf {
    let stem = ledger.file_stem().unwrap_or_default().to_string_lossy();
    ledger.with_file_name(format!("{stem}.genesis.json"))
}

pub fn ledger_verify(path: &Path, genesis: Option<&Path>) -> Result<(), CliError> {
    let genesis = load_genesis(path, genesis)?;
    match verify_bytes(&read_bytes(path)?, &genesis) {
        ChainVerdict::Valid { blocks } => {
            println!("Valid ({blocks} blocks)");
            Ok(())
        }
        ChainVerdict::Invalid {
            first_bad_index,
            reason,
        } => {
            let reason = serde_json::to_value(reason).map_err(|e| CliError::Contract(e.to_string()))?;
            let reason = reason.as_str().unwrap_or_default();
            println!("Invalid: first_bad_index={first_bad_index} reason={reason}");
            Err(CliError::Verification(format!(
                "ledger {} is invalid at block {first_bad_index} ({reason})",
                path.display()
            )))
        }
    }
}

fn describe_block(b: &Block) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "block {} proposer={} timestamp={} signatures={} entries={}",
        b.index,
        b.proposer,
        b.timestamp,
        b.signatures.len(),
        b.entries.len()
    );
    let _ = writeln!(s, "  hash        {}", hex(&b.header_hash()));
    let _ = writeln!(s, "  prev_hash   {}", hex(&b.prev_hash));
    let _ = writeln!(s, "  merkle_root {}", hex(&b.merkle_root));
    for (i, e) in b.entries.iter().enumerate() {
        let _ = writeln!(
            s,
            "  [{i}] t={} {} ({}) {} mitigated={} false_positive={} delay={} :: {}",
            e.timestamp,
            e.agent_id,
            e.role,
            e.action,
            e.outcome.attack_mitigated,
            e.outcome.false_positive,
            e.outcome.build_delay,
            e.reasoning_summary
        );
    }
    s
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to standard output; a reader that hung up early is not an error.
fn emit(bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Contract(e.to_string())),
        _ => Ok(()),
    }
}

pub fn ledger_show(path: &Path) -> Result<(), CliError> {
    let (blocks, failure) = match decode_chain(&read_bytes(path)?) {
        Ok(blocks) => (blocks, None),
        Err((decoded, err)) => (decoded, Some(err)),
    };
    let dump: String = blocks.iter().map(describe_block).collect();
    emit(dump.as_bytes())?;
    match failure {
        None => Ok(()),
        Some(err) => Err(CliError::Verification(format!(
            "ledger {} is malformed after {} blocks: {err}",
            path.display(),
            blocks.len()
        ))),
    }
}

pub fn protocol_replay(settings: &Settings, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    // Replays serve against the plain default environment unless a config
    // names one; the calibration overlay is an evaluation concern.
    let env_config = settings.env_file.clone().unwrap_or_else(EnvConfig::default);
    let env = PipelineEnv::new(env_config).map_err(|e| CliError::config(e.to_string()))?;
    let connector = SimulatedConnector::with_world(env, &settings.world)
        .map_err(|e| CliError::config(format!("invalid protocol world: {e}")))?;
    let mut connection = Connection::new(connector.registry());
    let transcript = replay(&mut connection, &read_bytes(input)?).map_err(|e| match e {
        ReplayError::Decode { .. } => CliError::config(format!("{}: {e}", input.display())),
        ReplayError::Contract { .. } => CliError::Contract(format!("{}: {e}", input.display())),
    })?;
    match out {
        Some(dir) => {
            let path = Output::new(dir).write("transcript.ndjson", &transcript)?;
            eprintln!("wrote {}", path.display());
        }
        None => emit(&transcript)?,
    }
    Ok(())
}
