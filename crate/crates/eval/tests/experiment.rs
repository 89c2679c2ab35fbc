use std::collections::BTreeSet;

use pipeward_core::policy::Policy;
use pipeward_core::{AttackScenario, MitigationAction, PipelineStage, VulnerabilityClass};
use pipeward_eval::{
    ablation, calibration_train_config, run_experiment, train_policy, BaselineKind, Component,
    EvalError, ExperimentOptions, Label, ScenarioSuite, SuiteError,
};
use pipeward_ledger::verify_bytes;

fn quick_policy(arm: BaselineKind, suite: &ScenarioSuite) -> Policy {
    let config = pipeward_core::policy::TrainConfig {
        episodes: 20_000,
        ..calibration_train_config(3)
    };
    train_policy(arm, suite, &ExperimentOptions::default().env, &config).unwrap()
}

fn options(episodes: usize) -> ExperimentOptions {
    ExperimentOptions {
        episodes,
        ..ExperimentOptions::default()
    }
}

fn source_injection() -> ScenarioSuite {
    ScenarioSuite {
        id: "source-injection".into(),
        benign_runs: 0,
        scenarios: vec![AttackScenario {
            id: "inj".into(),
            class: VulnerabilityClass::Injection,
            stage: PipelineStage::SourceManagement,
            payload: vec!["exec_untrusted_input".into()],
            syntactic_detectable: true,
            semantic_detectable: false,
            severity: 0.9,
        }],
    }
}

#[test]
fn calibration_suite_covers_every_class() {
    let suite = ScenarioSuite::calibration();
    assert_eq!(suite.scenarios.len(), 40);
    for class in VulnerabilityClass::ALL {
        let of_class: Vec<_> = suite.scenarios.iter().filter(|s| s.class == class).collect();
        assert_eq!(of_class.len(), 10, "{class}");
        assert!(of_class.iter().any(|s| !s.syntactic_detectable), "{class} has a semantic-only case");
    }
    assert!(suite.benign_runs > 0);
    assert_eq!(suite.hash().len(), 64);
}

#[test]
fn suite_json_round_trips_and_empty_suites_are_rejected() {
    let suite = ScenarioSuite::calibration();
    let back = ScenarioSuite::from_json(&serde_json::to_string(&suite).unwrap()).unwrap();
    assert_eq!(back, suite);
    assert_eq!(back.hash(), suite.hash());
    assert!(matches!(
        ScenarioSuite::from_json(r#"{"id":"none","scenarios":[]}"#),
        Err(SuiteError::Empty(_))
    ));
}

#[test]
fn learning_arms_need_a_policy() {
    let suite = source_injection();
    for arm in [BaselineKind::Proposed, BaselineKind::RLOnly] {
        assert!(matches!(
            run_experiment(arm, &suite, 1, None, &options(2)),
            Err(EvalError::MissingPolicy(a)) if a == arm
        ));
    }
    assert!(run_experiment(BaselineKind::RuleBased, &suite, 1, None, &options(2)).is_ok());
}

#[test]
fn provenance_only_detects_source_injection_after_packaging() {
    let suite = source_injection();
    let proposed_policy = quick_policy(BaselineKind::Proposed, &ScenarioSuite::calibration());
    let prov = run_experiment(BaselineKind::ProvenanceOnly, &suite, 5, None, &options(4)).unwrap();
    for t in &prov.traces {
        let first = t.interventions().next().expect("digest mismatch is acted on");
        assert!(first.stage >= PipelineStage::ArtifactPackaging);
    }
    let proposed =
        run_experiment(BaselineKind::Proposed, &suite, 5, Some(&proposed_policy), &options(4)).unwrap();
    let (p, q) = (
        prov.report.metrics.mttm_minutes.unwrap(),
        proposed.report.metrics.mttm_minutes.unwrap(),
    );
    assert!(p > q, "provenance {p} vs proposed {q}");
}

#[test]
fn identical_inputs_give_identical_reports_and_traces() {
    let suite = ScenarioSuite::calibration();
    let policy = quick_policy(BaselineKind::Proposed, &suite);
    let a = run_experiment(BaselineKind::Proposed, &suite, 9, Some(&policy), &options(60)).unwrap();
    let b = run_experiment(BaselineKind::Proposed, &suite, 9, Some(&policy), &options(60)).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.traces, b.traces);
    assert_eq!(
        a.ledger.as_ref().unwrap().to_bytes(),
        b.ledger.as_ref().unwrap().to_bytes()
    );
    assert_eq!(a.report.suite_hash, suite.hash());
    assert_eq!(a.report.seed, 9);

    let c = run_experiment(BaselineKind::Proposed, &suite, 10, Some(&policy), &options(60)).unwrap();
    assert_ne!(a.traces, c.traces);
}

#[test]
fn every_proposed_decision_lands_on_the_ledger() {
    let suite = ScenarioSuite::calibration();
    let policy = quick_policy(BaselineKind::Proposed, &suite);
    let e = run_experiment(BaselineKind::Proposed, &suite, 2, Some(&policy), &options(80)).unwrap();
    let ledger = e.ledger.as_ref().unwrap();
    let decisions: usize = e.traces.iter().map(|t| t.decisions.len()).sum();
    let entries: usize = ledger.blocks().iter().map(|b| b.entries.len()).sum();
    assert_eq!(decisions, entries);
    assert_eq!(ledger.blocks().len(), 81);
    let summary = e.report.ledger.as_ref().unwrap();
    assert_eq!((summary.decisions, summary.entries, summary.blocks), (decisions, entries, 80));
    assert!(verify_bytes(&ledger.to_bytes(), ledger.genesis()).is_valid());

    for (t, block) in e.traces.iter().zip(&ledger.blocks()[1..]) {
        assert_eq!(t.ledger_block, Some(block.index));
        let actions: Vec<MitigationAction> = t.decisions.iter().map(|d| d.action).collect();
        let recorded: Vec<MitigationAction> = block.entries.iter().map(|e| e.action).collect();
        assert_eq!(actions, recorded);
    }
}

#[test]
fn baseline_arms_write_no_ledger() {
    let suite = ScenarioSuite::calibration();
    let e = run_experiment(BaselineKind::RuleBased, &suite, 2, None, &options(20)).unwrap();
    assert!(e.ledger.is_none() && e.report.ledger.is_none());
    assert!(e.traces.iter().all(|t| t.ledger_block.is_none()));
}

#[test]
fn disabling_the_ledger_leaves_detection_untouched() {
    let suite = ScenarioSuite::calibration();
    let policy = quick_policy(BaselineKind::Proposed, &suite);
    let base = run_experiment(BaselineKind::Proposed, &suite, 4, Some(&policy), &options(60)).unwrap();
    let (report, ablated) = ablation(
        &base.report,
        &suite,
        Some(&policy),
        &options(60),
        &BTreeSet::from([Component::Ledger]),
    )
    .unwrap();
    assert!(report.confusion_identical);
    assert!(ablated.ledger.is_none());
    assert_eq!(report.ablated.disabled, [Component::Ledger]);
    assert_eq!(base.traces.len(), ablated.traces.len());
    for (a, b) in base.traces.iter().zip(&ablated.traces) {
        assert_eq!(a.decisions, b.decisions);
    }
}

#[test]
fn ablation_needs_an_unablated_proposed_baseline() {
    let suite = ScenarioSuite::calibration();
    let rule = run_experiment(BaselineKind::RuleBased, &suite, 4, None, &options(10)).unwrap();
    assert!(matches!(
        ablation(&rule.report, &suite, None, &options(10), &BTreeSet::from([Component::Rl])),
        Err(EvalError::Mismatch(_))
    ));
}

#[test]
fn disabling_rl_acts_on_the_reasoner_preference_without_a_policy() {
    let suite = ScenarioSuite::calibration();
    let opts = ExperimentOptions {
        disable: BTreeSet::from([Component::Rl]),
        ..options(50)
    };
    let e = run_experiment(BaselineKind::Proposed, &suite, 4, None, &opts).unwrap();
    assert_eq!(e.report.disabled, [Component::Rl]);
    assert!(e.traces.iter().all(|t| t.truth.is_some()));
    assert!(run_experiment(BaselineKind::RuleBased, &suite, 4, None, &opts).is_err());
}

#[test]
fn rule_based_misses_semantic_only_attacks() {
    let suite = ScenarioSuite {
        id: "semantic-only".into(),
        benign_runs: 0,
        scenarios: ScenarioSuite::calibration()
            .scenarios
            .into_iter()
            .filter(|s| !s.syntactic_detectable)
            .collect(),
    };
    let opts = ExperimentOptions {
        env: pipeward_core::env::EnvConfig {
            decoy_rate: 0.0,
            ..pipeward_core::env::EnvConfig::default()
        },
        ..options(suite.scenarios.len())
    };
    let e = run_experiment(BaselineKind::RuleBased, &suite, 8, None, &opts).unwrap();
    for t in &e.traces {
        assert!(matches!(t.truth, Some(Label::Attack(_))));
        assert!(t.prediction().is_none(), "{} was flagged", t.run_id);
    }
}
