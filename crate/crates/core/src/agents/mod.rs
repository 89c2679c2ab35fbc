//! The five specialized defense agents, the pluggable reasoner that fuses
//! their findings, and the execution graph that decides which agents run.

mod graph;
mod reasoner;
mod rules;

pub use graph::{
    build_graph, dispatch, Activation, DispatchTrace, Edge, ExecutionGraph, GraphError, GraphSpec,
    Guard, Node, NodeKind,
};
pub use reasoner::{Assessment, ReasonContext, Reasoner, ReasonerConfig, RuleReasoner};
pub use rules::{Rule, RuleError, RuleTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentRole, ObservationSignal, PipelineStage, SignalKind, VulnerabilityClass};

/// One matched indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub role: AgentRole,
    pub hypothesis: VulnerabilityClass,
    pub stage: PipelineStage,
    pub confidence: f64,
    pub evidence: Vec<String>,
    pub note: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("{role} cannot analyze {kind:?} signals")]
    WrongSignalKind { role: AgentRole, kind: SignalKind },
}

/// Rule-driven analyzers for all five roles.
#[derive(Debug, Clone)]
pub struct DefenseAgents {
    rules: RuleTable,
}

impl Default for DefenseAgents {
    fn default() -> Self {
        DefenseAgents::new(RuleTable::shipped())
    }
}

impl DefenseAgents {
    pub fn new(rules: RuleTable) -> DefenseAgents {
        DefenseAgents { rules }
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    /// Emits one finding per (signal, matching rule), rule-table order
    /// within a signal.
    pub fn analyze(
        &self,
        role: AgentRole,
        signals: &[ObservationSignal],
    ) -> Result<Vec<Finding>, AgentError> {
        if let Some(bad) = signals.iter().find(|s| s.kind != role.observed_kind()) {
            return Err(AgentError::WrongSignalKind {
                role,
                kind: bad.kind,
            });
        }
        let mut findings = Vec::new();
        for signal in signals {
            for rule in self.rules.for_role(role) {
                if signal.tokens().any(|t| t == rule.token) {
                    findings.push(Finding {
                        role,
                        hypothesis: rule.class,
                        stage: signal.stage,
                        confidence: rule.confidence,
                        evidence: vec![rule.token.clone()],
                        note: format!("{} matched in {:?} at {}", rule.token, signal.kind, signal.stage),
                    });
                }
            }
        }
        Ok(findings)
    }

    pub fn scan_commit(&self, signals: &[ObservationSignal]) -> Result<Vec<Finding>, AgentError> {
        self.analyze(AgentRole::CodeAnalysis, signals)
    }

    pub fn evaluate_dependency(
        &self,
        signals: &[ObservationSignal],
    ) -> Result<Vec<Finding>, AgentError> {
        self.analyze(AgentRole::DependencyIntelligence, signals)
    }

    pub fn monitor_pipeline(
        &self,
        signals: &[ObservationSignal],
    ) -> Result<Vec<Finding>, AgentError> {
        self.analyze(AgentRole::CICDMonitoring, signals)
    }

    pub fn check_access(&self, signals: &[ObservationSignal]) -> Result<Vec<Finding>, AgentError> {
        self.analyze(AgentRole::AccessControl, signals)
    }

    pub fn audit_config(&self, signals: &[ObservationSignal]) -> Result<Vec<Finding>, AgentError> {
        self.analyze(AgentRole::ConfigurationAudit, signals)
    }
}

#[cfg(test)]
mod tests;
