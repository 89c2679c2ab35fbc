//! Cross-arm comparison tables: F1 per class, mean time to mitigation per
//! arm, and build-time overhead per arm.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use pipeward_core::VulnerabilityClass;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{BaselineKind, MetricsReport};

/// Column order of the F1 table.
pub const F1_ARM_ORDER: [BaselineKind; 4] = [
    BaselineKind::Proposed,
    BaselineKind::RuleBased,
    BaselineKind::ProvenanceOnly,
    BaselineKind::RLOnly,
];

/// Row order of the overhead table.
pub const OVERHEAD_ARM_ORDER: [BaselineKind; 4] = [
    BaselineKind::RuleBased,
    BaselineKind::Proposed,
    BaselineKind::ProvenanceOnly,
    BaselineKind::RLOnly,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("comparison requires at least 2 reports, got {0}")]
    TooFew(usize),
    #[error("reports come from different suites: `{expected}` vs `{found}`")]
    SuiteMismatch { expected: String, found: String },
    #[error("arm {0} appears in more than one report")]
    DuplicateArm(BaselineKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Row {
    pub class: VulnerabilityClass,
    /// Aligned with [`Comparison::arms`].
    pub f1: Vec<f64>,
}

/// Proposed F1 minus another arm's F1 for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub class: VulnerabilityClass,
    pub against: BaselineKind,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmValue {
    pub arm: BaselineKind,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub suite_id: String,
    pub suite_hash: String,
    /// F1 columns, in [`F1_ARM_ORDER`] restricted to the arms present.
    pub arms: Vec<BaselineKind>,
    pub f1: Vec<F1Row>,
    /// Empty unless the Proposed arm is among the reports.
    pub f1_gaps: Vec<GapRow>,
    /// Fastest first; arms that mitigated nothing come last.
    pub mttm: Vec<ArmValue>,
    pub overhead: Vec<ArmValue>,
}

pub fn compare(reports: &[MetricsReport]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew(reports.len()));
    }
    let first = &reports[0];
    let mut seen = BTreeSet::new();
    for r in reports {
        if r.suite_id != first.suite_id || r.suite_hash != first.suite_hash {
            return Err(CompareError::SuiteMismatch {
                expected: format!("{} ({})", first.suite_id, first.suite_hash),
                found: format!("{} ({})", r.suite_id, r.suite_hash),
            });
        }
        if !seen.insert(r.arm) {
            return Err(CompareError::DuplicateArm(r.arm));
        }
    }
    let by_arm = |arm: BaselineKind| reports.iter().find(|r| r.arm == arm);
    let f1_of = |r: &MetricsReport, class| r.metrics.per_class.get(&class).map_or(0.0, |m| m.f1);

    let arms: Vec<BaselineKind> = F1_ARM_ORDER.into_iter().filter(|a| seen.contains(a)).collect();
    let f1 = VulnerabilityClass::ALL
        .into_iter()
        .map(|class| F1Row {
            class,
            f1: arms.iter().map(|a| f1_of(by_arm(*a).expect("present"), class)).collect(),
        })
        .collect();

    let mut f1_gaps = Vec::new();
    if let Some(proposed) = by_arm(BaselineKind::Proposed) {
        for class in VulnerabilityClass::ALL {
            for other in arms.iter().filter(|a| **a != BaselineKind::Proposed) {
                f1_gaps.push(GapRow {
                    class,
                    against: *other,
                    gap: f1_of(proposed, class) - f1_of(by_arm(*other).expect("present"), class),
                });
            }
        }
    }

    let mut mttm: Vec<ArmValue> = arms
        .iter()
        .map(|a| ArmValue {
            arm: *a,
            value: by_arm(*a).expect("present").metrics.mttm_minutes,
        })
        .collect();
    mttm.sort_by(|x, y| match (x.value, y.value) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let overhead = OVERHEAD_ARM_ORDER
        .into_iter()
        .filter_map(by_arm)
        .map(|r| ArmValue {
            arm: r.arm,
            value: Some(r.metrics.overhead_percent),
        })
        .collect();

    Ok(Comparison {
        suite_id: first.suite_id.clone(),
        suite_hash: first.suite_hash.clone(),
        arms,
        f1,
        f1_gaps,
        mttm,
        overhead,
    })
}

/// Values are written in shortest round-trip form, the same digits the
/// JSON serialization uses.
fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparisons serialize")
    }

    pub fn f1_csv(&self) -> String {
        let mut out = String::from("class");
        for arm in &self.arms {
            write!(out, ",{arm}").unwrap();
        }
        out.push('\n');
        for row in &self.f1 {
            out.push_str(row.class.name());
            for v in &row.f1 {
                write!(out, ",{}", cell(Some(*v))).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("class,against,gap\n");
        for g in &self.f1_gaps {
            writeln!(out, "{},{},{}", g.class, g.against, cell(Some(g.gap))).unwrap();
        }
        out
    }

    pub fn mttm_csv(&self) -> String {
        let mut out = String::from("arm,mttm_minutes\n");
        for v in &self.mttm {
            writeln!(out, "{},{}", v.arm, cell(v.value)).unwrap();
        }
        out
    }

    pub fn overhead_csv(&self) -> String {
        let mut out = String::from("arm,overhead_percent\n");
        for v in &self.overhead {
            writeln!(out, "{},{}", v.arm, cell(v.value)).unwrap();
        }
        out
    }

    /// Arms in increasing mean time to mitigation.
    pub fn latency_ranking(&self) -> Vec<BaselineKind> {
        self.mttm.iter().map(|v| v.arm).collect()
    }
}
