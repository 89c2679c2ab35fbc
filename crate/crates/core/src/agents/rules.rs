use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentRole, VulnerabilityClass};

const SHIPPED_RULES: &str = include_str!("../../data/rules.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub role: AgentRole,
    pub token: String,
    pub class: VulnerabilityClass,
    pub confidence: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("rule for token `{token}` has confidence {confidence} outside [0, 1]")]
    Confidence { token: String, confidence: f64 },
    #[error("rule has an empty token")]
    EmptyToken,
    #[error("rule table is not valid JSON: {0}")]
    Parse(String),
}

/// Declarative `token -> (class, confidence)` rules, grouped by role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn new(rules: Vec<Rule>) -> Result<RuleTable, RuleError> {
        for rule in &rules {
            if rule.token.is_empty() {
                return Err(RuleError::EmptyToken);
            }
            if !(0.0..=1.0).contains(&rule.confidence) {
                return Err(RuleError::Confidence {
                    token: rule.token.clone(),
                    confidence: rule.confidence,
                });
            }
        }
        Ok(RuleTable { rules })
    }

    pub fn from_json(json: &str) -> Result<RuleTable, RuleError> {
        let rules: Vec<Rule> =
            serde_json::from_str(json).map_err(|e| RuleError::Parse(e.to_string()))?;
        RuleTable::new(rules)
    }

    /// The rule table bundled with the crate.
    pub fn shipped() -> RuleTable {
        RuleTable::from_json(SHIPPED_RULES).expect("shipped rule table is valid")
    }

    pub fn for_role(&self, role: AgentRole) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.role == role)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Keeps only rules whose confidence is at least `min_confidence`.
    pub fn filtered(&self, min_confidence: f64) -> RuleTable {
        RuleTable {
            rules: self
                .rules
                .iter()
                .filter(|r| r.confidence >= min_confidence)
                .cloned()
                .collect(),
        }
    }
}
