use std::collections::BTreeMap;

use pipeward_core::VulnerabilityClass;
use pipeward_eval::compare::{F1_ARM_ORDER, OVERHEAD_ARM_ORDER};
use pipeward_eval::{
    compare, BaselineKind, ClassMetrics, CompareError, ConfusionCounts, Metrics, MetricsReport,
};

fn report(arm: BaselineKind, f1: [f64; 4], mttm: f64, overhead: f64) -> MetricsReport {
    let per_class = VulnerabilityClass::ALL
        .into_iter()
        .zip(f1)
        .map(|(class, f1)| {
            (
                class,
                ClassMetrics {
                    counts: ConfusionCounts::default(),
                    precision: f1,
                    recall: f1,
                    f1,
                },
            )
        })
        .collect::<BTreeMap<_, _>>();
    MetricsReport {
        arm,
        suite_id: "fixture".into(),
        suite_hash: "00".into(),
        seed: 1,
        disabled: Vec::new(),
        metrics: Metrics {
            per_class,
            mttm_minutes: Some(mttm),
            overhead_percent: overhead,
            autonomy_rate: 1.0,
            rollback_success_rate: 1.0,
            episodes: 10,
            attacks: 0,
            mitigated_attacks: 0,
            interventions: 0,
            false_positive_actions: 0,
        },
        ledger: None,
    }
}

/// Reference mean latencies per arm, in minutes.
fn latency_fixture() -> Vec<MetricsReport> {
    vec![
        report(BaselineKind::RuleBased, [0.0; 4], 28.0, 2.5),
        report(BaselineKind::ProvenanceOnly, [0.0; 4], 34.0, 0.0),
        report(BaselineKind::RLOnly, [0.0; 4], 12.0, 0.0),
        report(BaselineKind::Proposed, [0.0; 4], 6.0, 5.8),
    ]
}

#[test]
fn latency_table_runs_fastest_to_slowest() {
    let c = compare(&latency_fixture()).unwrap();
    assert_eq!(
        c.latency_ranking(),
        [
            BaselineKind::Proposed,
            BaselineKind::RLOnly,
            BaselineKind::RuleBased,
            BaselineKind::ProvenanceOnly
        ]
    );
    assert_eq!(
        c.mttm_csv(),
        "arm,mttm_minutes\nProposed,6.0\nRLOnly,12.0\nRuleBased,28.0\nProvenanceOnly,34.0\n"
    );
}

#[test]
fn f1_gaps_match_reference_scores() {
    let reports = [
        report(BaselineKind::Proposed, [0.94, 0.91, 0.90, 0.93], 6.0, 5.8),
        report(BaselineKind::RuleBased, [0.78, 0.70, 0.72, 0.80], 28.0, 2.5),
    ];
    let c = compare(&reports).unwrap();
    let gaps: Vec<f64> = c
        .f1_gaps
        .iter()
        .filter(|g| g.against == BaselineKind::RuleBased)
        .map(|g| g.gap)
        .collect();
    let expected = [0.16, 0.21, 0.18, 0.13];
    assert_eq!(gaps.len(), 4);
    for (g, e) in gaps.iter().zip(expected) {
        assert!((g - e).abs() < 1e-9, "gap {g} vs {e}");
    }
    assert_eq!(c.arms, [BaselineKind::Proposed, BaselineKind::RuleBased]);
    assert_eq!(
        c.f1_csv().lines().next().unwrap(),
        "class,Proposed,RuleBased"
    );
}

#[test]
fn tables_use_fixed_column_and_row_orders() {
    let mut reports = latency_fixture();
    reports.reverse();
    let c = compare(&reports).unwrap();
    assert_eq!(c.arms, F1_ARM_ORDER);
    let rows: Vec<_> = c.f1.iter().map(|r| r.class).collect();
    assert_eq!(rows, VulnerabilityClass::ALL);
    let overhead: Vec<_> = c.overhead.iter().map(|v| v.arm).collect();
    assert_eq!(overhead, OVERHEAD_ARM_ORDER);
}

#[test]
fn a_single_report_cannot_be_compared() {
    let reports = &latency_fixture()[..1];
    assert_eq!(compare(reports).unwrap_err(), CompareError::TooFew(1));
    assert!(compare(&[]).is_err());
}

#[test]
fn reports_from_different_suites_are_rejected() {
    let mut reports = latency_fixture();
    reports[2].suite_id = "other".into();
    assert!(matches!(
        compare(&reports).unwrap_err(),
        CompareError::SuiteMismatch { .. }
    ));
}

#[test]
fn an_arm_may_appear_only_once() {
    let mut reports = latency_fixture();
    reports.push(reports[0].clone());
    assert_eq!(
        compare(&reports).unwrap_err(),
        CompareError::DuplicateArm(BaselineKind::RuleBased)
    );
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let reports = [
        report(BaselineKind::Proposed, [0.94, 0.1 + 0.2, 0.9, 1.0 / 3.0], 6.25, 5.8),
        report(BaselineKind::RuleBased, [0.78, 0.7, 0.72, 0.8], 28.0, 2.5),
    ];
    let c = compare(&reports).unwrap();
    let json: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
    for (line, row) in c.f1_csv().lines().skip(1).zip(json["f1"].as_array().unwrap()) {
        let csv: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let js: Vec<f64> = row["f1"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(csv, js);
    }
    for (line, v) in c.overhead_csv().lines().skip(1).zip(json["overhead"].as_array().unwrap()) {
        let csv: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(csv, v["value"].as_f64().unwrap());
    }

    let r = &reports[0];
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let csv: BTreeMap<String, String> = r
        .to_csv()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect();
    let m = &json["metrics"];
    for class in VulnerabilityClass::ALL {
        let js = &m["per_class"][class.name()];
        for key in ["precision", "recall", "f1"] {
            let from_csv: f64 = csv[&format!("{class}.{key}")].parse().unwrap();
            assert_eq!(from_csv, js[key].as_f64().unwrap());
        }
    }
    assert_eq!(csv["mttm_minutes"].parse::<f64>().unwrap(), m["mttm_minutes"].as_f64().unwrap());
    assert_eq!(csv["seed"], json["seed"].to_string());
}
