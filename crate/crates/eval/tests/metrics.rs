use pipeward_core::env::{AttackEvent, OutcomeFlags};
use pipeward_core::{MitigationAction, PipelineStage, VulnerabilityClass};
use pipeward_eval::{
    compute_metrics, f1_score, ClassMetrics, ConfusionCounts, DecisionRecord, EpisodeTrace, Label,
    MetricsError,
};
use proptest::prelude::*;

fn decision(action: MitigationAction, verdict: Option<VulnerabilityClass>) -> DecisionRecord {
    DecisionRecord {
        step: 0,
        stage: PipelineStage::SourceManagement,
        clock_minutes: 0.0,
        state_id: None,
        verdict,
        severity: 0.0,
        action,
        outcome: OutcomeFlags::default(),
        reward: 0.0,
        rollback_restores: true,
        rationale: String::new(),
    }
}

fn event(id: &str, class: VulnerabilityClass, clock: f64) -> AttackEvent {
    AttackEvent {
        attack_id: id.into(),
        class,
        step: 0,
        stage: PipelineStage::SourceManagement,
        clock_minutes: clock,
    }
}

fn trace(episode: usize, truth: Option<Label>, decisions: Vec<DecisionRecord>) -> EpisodeTrace {
    EpisodeTrace {
        episode,
        run_id: format!("run-{episode}"),
        seed: episode as u64,
        truth,
        decisions,
        injections: Vec::new(),
        mitigations: Vec::new(),
        build_delay: 0.0,
        undefended_minutes: 30.0,
        ledger_block: None,
    }
}

#[test]
fn nine_of_ten_detected_with_one_false_alarm() {
    let m = ClassMetrics::from_counts(ConfusionCounts {
        tp: 9,
        fp: 1,
        fn_: 1,
        tn: 0,
    });
    assert!((m.precision - 0.9).abs() < 1e-12);
    assert!((m.recall - 0.9).abs() < 1e-12);
    assert!((m.f1 - 0.9).abs() < 1e-12);
}

#[test]
fn nothing_detected_and_nothing_attacked_scores_zero() {
    let m = ClassMetrics::from_counts(ConfusionCounts::default());
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    assert_eq!(f1_score(0.0, 0.0), 0.0);
}

#[test]
fn mttm_is_the_mean_latency_of_mitigated_attacks() {
    let use_class = VulnerabilityClass::Injection;
    let mut a = trace(0, Some(Label::Attack(use_class)), vec![]);
    a.injections = vec![event("a", use_class, 2.0)];
    a.mitigations = vec![event("a", use_class, 6.0)];
    let mut b = trace(1, Some(Label::Attack(use_class)), vec![]);
    b.injections = vec![event("b", use_class, 0.0)];
    b.mitigations = vec![event("b", use_class, 8.0)];
    // Never mitigated: excluded from the mean.
    let mut c = trace(2, Some(Label::Attack(use_class)), vec![]);
    c.injections = vec![event("c", use_class, 0.0)];
    let m = compute_metrics(&[a, b, c]).unwrap();
    assert_eq!(m.mttm_minutes, Some(6.0));
    assert_eq!((m.attacks, m.mitigated_attacks), (3, 2));
}

#[test]
fn no_mitigations_means_no_mttm() {
    let m = compute_metrics(&[trace(0, Some(Label::Benign), vec![])]).unwrap();
    assert_eq!(m.mttm_minutes, None);
}

#[test]
fn missing_ground_truth_is_rejected() {
    let traces = [trace(0, Some(Label::Benign), vec![]), trace(7, None, vec![])];
    assert_eq!(
        compute_metrics(&traces).unwrap_err(),
        MetricsError::MissingGroundTruth(7)
    );
}

#[test]
fn review_actions_count_against_autonomy() {
    let decisions = vec![
        decision(MitigationAction::AllowContinue, None),
        decision(MitigationAction::RequestReview, Some(VulnerabilityClass::Injection)),
        decision(MitigationAction::BlockBuild, Some(VulnerabilityClass::Injection)),
    ];
    let m = compute_metrics(&[trace(0, Some(Label::Benign), decisions)]).unwrap();
    assert_eq!(m.interventions, 2);
    assert_eq!(m.autonomy_rate, 0.5);
}

#[test]
fn overhead_only_counts_benign_runs() {
    let mut benign = trace(0, Some(Label::Benign), vec![]);
    benign.build_delay = 3.0;
    let mut attacked = trace(1, Some(Label::Attack(VulnerabilityClass::Misconfiguration)), vec![]);
    attacked.build_delay = 50.0;
    let m = compute_metrics(&[benign, attacked]).unwrap();
    assert!((m.overhead_percent - 10.0).abs() < 1e-12);
}

#[test]
fn prediction_is_the_verdict_at_the_first_intervention() {
    let t = trace(
        0,
        Some(Label::Benign),
        vec![
            decision(MitigationAction::AllowContinue, Some(VulnerabilityClass::Injection)),
            decision(MitigationAction::PauseBuild, Some(VulnerabilityClass::Misconfiguration)),
            decision(MitigationAction::BlockBuild, Some(VulnerabilityClass::Injection)),
        ],
    );
    assert_eq!(t.prediction(), Some(VulnerabilityClass::Misconfiguration));
}

// Independent oracle: a 5x5 truth-by-prediction matrix (index 4 is
// "benign / none"), from which each class's cells are read off.
fn class_index(c: Option<VulnerabilityClass>) -> usize {
    c.map_or(4, |c| c.index())
}

fn brute_force(traces: &[EpisodeTrace]) -> Vec<[u64; 4]> {
    let mut matrix = [[0u64; 5]; 5];
    for t in traces {
        let truth = match t.truth.unwrap() {
            Label::Benign => 4,
            Label::Attack(c) => c.index(),
        };
        let mut predicted = 4;
        for d in &t.decisions {
            if d.action != MitigationAction::AllowContinue {
                predicted = class_index(d.verdict);
                break;
            }
        }
        matrix[truth][predicted] += 1;
    }
    (0..4)
        .map(|c| {
            let tp = matrix[c][c];
            let fp: u64 = (0..5).filter(|&t| t != c).map(|t| matrix[t][c]).sum();
            let fn_: u64 = (0..5).filter(|&p| p != c).map(|p| matrix[c][p]).sum();
            let all: u64 = matrix.iter().flatten().sum();
            [tp, fp, fn_, all - tp - fp - fn_]
        })
        .collect()
}

fn arb_class() -> impl Strategy<Value = Option<VulnerabilityClass>> {
    (0usize..5).prop_map(|i| VulnerabilityClass::ALL.get(i).copied())
}

fn arb_trace() -> impl Strategy<Value = EpisodeTrace> {
    let decisions = prop::collection::vec(
        (0usize..8, arb_class(), any::<bool>(), any::<bool>()),
        0..6,
    );
    (arb_class(), decisions, 0.0f64..30.0, prop::option::of(0.0f64..20.0), 0.0f64..40.0)
        .prop_map(|(truth, decisions, injected, latency, delay)| {
            let label = truth.map_or(Label::Benign, Label::Attack);
            let mut t = trace(
                0,
                Some(label),
                decisions
                    .into_iter()
                    .map(|(a, verdict, rollback, fp)| {
                        let mut d = decision(MitigationAction::ALL[a], verdict);
                        d.rollback_restores = rollback;
                        d.outcome.false_positive = fp;
                        d
                    })
                    .collect(),
            );
            t.build_delay = delay;
            if let Some(class) = truth {
                t.injections = vec![event("x", class, injected)];
                if let Some(l) = latency {
                    t.mitigations = vec![event("x", class, injected + l)];
                }
            }
            t
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metrics_agree_with_brute_force_confusion(traces in prop::collection::vec(arb_trace(), 1..40)) {
        let traces: Vec<EpisodeTrace> = traces
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| { t.episode = i; t })
            .collect();
        let m = compute_metrics(&traces).unwrap();
        let oracle = brute_force(&traces);
        for class in VulnerabilityClass::ALL {
            let c = m.per_class[&class];
            let [tp, fp, fn_, tn] = oracle[class.index()];
            prop_assert_eq!(c.counts, ConfusionCounts { tp, fp, fn_, tn });
            prop_assert_eq!(c.counts.total(), traces.len() as u64);

            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((c.precision - p).abs() < 1e-12);
            prop_assert!((c.recall - r).abs() < 1e-12);
            prop_assert!((c.f1 - f).abs() < 1e-12);
            for v in [c.precision, c.recall, c.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        let latencies: Vec<f64> = traces
            .iter()
            .flat_map(|t| t.mitigations.iter().map(|m| m.clock_minutes - t.injections[0].clock_minutes))
            .collect();
        match m.mttm_minutes {
            None => prop_assert!(latencies.is_empty()),
            Some(v) => prop_assert!((v - latencies.iter().sum::<f64>() / latencies.len() as f64).abs() < 1e-9),
        }

        let acted: Vec<&DecisionRecord> = traces
            .iter()
            .flat_map(|t| t.decisions.iter())
            .filter(|d| d.action != MitigationAction::AllowContinue)
            .collect();
        let share = |pred: &dyn Fn(&DecisionRecord) -> bool| {
            if acted.is_empty() { 0.0 } else {
                acted.iter().filter(|d| pred(d)).count() as f64 / acted.len() as f64
            }
        };
        prop_assert!((m.autonomy_rate - share(&|d| d.action != MitigationAction::RequestReview)).abs() < 1e-12);
        prop_assert!((m.rollback_success_rate - share(&|d| d.rollback_restores)).abs() < 1e-12);
        prop_assert_eq!(m.false_positive_actions, acted.iter().filter(|d| d.outcome.false_positive).count());
        prop_assert!((0.0..=1.0).contains(&m.autonomy_rate));
        prop_assert!((0.0..=1.0).contains(&m.rollback_success_rate));

        let benign: Vec<&EpisodeTrace> = traces.iter().filter(|t| t.truth == Some(Label::Benign)).collect();
        let expected = if benign.is_empty() { 0.0 } else {
            benign.iter().map(|t| t.build_delay).sum::<f64>() / (30.0 * benign.len() as f64) * 100.0
        };
        prop_assert!((m.overhead_percent - expected).abs() < 1e-9);
    }
}
