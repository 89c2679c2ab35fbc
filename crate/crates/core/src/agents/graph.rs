use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Assessment, DefenseAgents, Finding, ReasonContext, Reasoner};
use crate::domain::{AgentRole, VulnerabilityClass};
use crate::env::{observe, EnvState};

const DEFAULT_GRAPH: &str = include_str!("../../data/default_graph.json");
const SWEEP_GRAPH: &str = include_str!("../../data/sweep_graph.json");

/// Edge predicate over the findings accumulated so far: at least
/// `min_count` findings of `class` with confidence ≥ `min_confidence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guard {
    pub class: VulnerabilityClass,
    #[serde(default)]
    pub min_confidence: f64,
    #[serde(default = "one")]
    pub min_count: usize,
}

fn one() -> usize {
    1
}

impl Guard {
    pub fn fires(&self, findings: &[Finding]) -> bool {
        findings
            .iter()
            .filter(|f| f.hypothesis == self.class && f.confidence >= self.min_confidence)
            .count()
            >= self.min_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentRole>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub decision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Absent guard always fires.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
}

/// Unvalidated graph description, as read from a graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub entry: String,
    pub max_visits_per_node: u32,
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl GraphSpec {
    pub fn from_json(json: &str) -> Result<GraphSpec, GraphError> {
        serde_json::from_str(json).map_err(|e| GraphError::Parse(e.to_string()))
    }

    /// Code analysis, then pipeline monitoring if an injection pattern was
    /// found, then the decision node.
    pub fn shipped_default() -> GraphSpec {
        GraphSpec::from_json(DEFAULT_GRAPH).expect("shipped default graph parses")
    }

    /// Every agent once, in pipeline order, then the decision node.
    pub fn shipped_sweep() -> GraphSpec {
        GraphSpec::from_json(SWEEP_GRAPH).expect("shipped sweep graph parses")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("entry node `{0}` does not exist")]
    MissingEntry(String),
    #[error("edge references unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{0}` must be exactly one of an agent node or a decision node")]
    NodeKind(String),
    #[error("max_visits_per_node must be positive")]
    VisitBound,
    #[error("graph description is not valid JSON: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Agent(AgentRole),
    Decision,
}

/// A validated execution graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionGraph {
    ids: Vec<String>,
    kinds: Vec<NodeKind>,
    /// Outgoing edges per node, declaration order: (target, guard).
    out: Vec<Vec<(usize, Option<Guard>)>>,
    entry: usize,
    max_visits_per_node: u32,
}

impl ExecutionGraph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn entry(&self) -> &str {
        &self.ids[self.entry]
    }

    pub fn entry_kind(&self) -> NodeKind {
        self.kinds[self.entry]
    }

    pub fn max_visits_per_node(&self) -> u32 {
        self.max_visits_per_node
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, NodeKind)> {
        self.ids.iter().map(String::as_str).zip(self.kinds.iter().copied())
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }
}

pub fn build_graph(spec: &GraphSpec) -> Result<ExecutionGraph, GraphError> {
    if spec.max_visits_per_node == 0 {
        return Err(GraphError::VisitBound);
    }
    let mut index = BTreeMap::new();
    let mut kinds = Vec::with_capacity(spec.nodes.len());
    for (i, node) in spec.nodes.iter().enumerate() {
        if index.insert(node.id.clone(), i).is_some() {
            return Err(GraphError::DuplicateNode(node.id.clone()));
        }
        kinds.push(match (node.agent, node.decision) {
            (Some(role), false) => NodeKind::Agent(role),
            (None, true) => NodeKind::Decision,
            _ => return Err(GraphError::NodeKind(node.id.clone())),
        });
    }
    let entry = *index
        .get(&spec.entry)
        .ok_or_else(|| GraphError::MissingEntry(spec.entry.clone()))?;
    let mut out = vec![Vec::new(); spec.nodes.len()];
    for edge in &spec.edges {
        let from = *index
            .get(&edge.from)
            .ok_or_else(|| GraphError::UnknownNode(edge.from.clone()))?;
        let to = *index
            .get(&edge.to)
            .ok_or_else(|| GraphError::UnknownNode(edge.to.clone()))?;
        out[from].push((to, edge.guard.clone()));
    }
    Ok(ExecutionGraph {
        ids: spec.nodes.iter().map(|n| n.id.clone()).collect(),
        kinds,
        out,
        entry,
        max_visits_per_node: spec.max_visits_per_node,
    })
}

impl ExecutionGraph {
    pub fn shipped_default() -> ExecutionGraph {
        build_graph(&GraphSpec::shipped_default()).expect("shipped default graph is valid")
    }

    pub fn shipped_sweep() -> ExecutionGraph {
        build_graph(&GraphSpec::shipped_sweep()).expect("shipped sweep graph is valid")
    }
}

/// One agent node visit and what it found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub node: String,
    pub role: AgentRole,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchTrace {
    /// Every node entered, decision nodes included.
    pub path: Vec<String>,
    pub activations: Vec<Activation>,
    pub assessment: Assessment,
}

impl DispatchTrace {
    pub fn roles(&self) -> Vec<AgentRole> {
        self.activations.iter().map(|a| a.role).collect()
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.activations.iter().flat_map(|a| a.findings.iter())
    }

    pub fn reached_decision(&self, graph: &ExecutionGraph) -> bool {
        self.path.last().is_some_and(|last| {
            graph
                .nodes()
                .any(|(id, kind)| id == last && kind == NodeKind::Decision)
        })
    }
}

/// Walks `graph` from its entry over the current observations of `state`.
///
/// At each node the first outgoing edge (declaration order) whose guard
/// fires is taken; the walk stops at a decision node, when no guard fires,
/// or when the chosen target has used up its visit budget. The final
/// assessment reasons over every accumulated finding. `state` is only read.
pub fn dispatch(
    graph: &ExecutionGraph,
    agents: &DefenseAgents,
    state: &EnvState,
    reasoner: &dyn Reasoner,
) -> DispatchTrace {
    let mut visits = vec![0u32; graph.node_count()];
    let mut path = Vec::new();
    let mut activations = Vec::new();
    let mut accumulated: Vec<Finding> = Vec::new();
    let mut seen_roles = BTreeSet::new();
    let mut current = Some(graph.entry);

    while let Some(node) = current.take() {
        if visits[node] >= graph.max_visits_per_node {
            break;
        }
        visits[node] += 1;
        path.push(graph.ids[node].clone());
        let role = match graph.kinds[node] {
            NodeKind::Decision => break,
            NodeKind::Agent(role) => role,
        };
        let findings = agents
            .analyze(role, &observe(state, role))
            .expect("observe only yields the role's own signal kind");
        // A role revisited in a loop re-reads the same observations; only the
        // first visit contributes to the fused evidence.
        if seen_roles.insert(role) {
            accumulated.extend(findings.iter().cloned());
        }
        activations.push(Activation {
            node: graph.ids[node].clone(),
            role,
            findings,
        });
        current = graph.out[node]
            .iter()
            .find(|(_, guard)| guard.as_ref().is_none_or(|g| g.fires(&accumulated)))
            .map(|(to, _)| *to);
    }

    let context = ReasonContext {
        run_id: state.run_id.clone(),
        stage: state.stage,
        step: state.step,
    };
    DispatchTrace {
        path,
        activations,
        assessment: reasoner.reason(&accumulated, &context),
    }
}
