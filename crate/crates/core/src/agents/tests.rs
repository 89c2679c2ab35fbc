use proptest::prelude::*;

use super::*;
use crate::domain::{MitigationAction, VulnerabilityClass::*};
use crate::env::{EnvConfig, PipelineEnv};
use crate::AttackScenario;

fn signal(stage: PipelineStage, kind: SignalKind, content: &str) -> ObservationSignal {
    ObservationSignal {
        stage,
        kind,
        content: content.into(),
        origin_attack: None,
    }
}

fn finding(class: VulnerabilityClass, stage: PipelineStage, confidence: f64) -> Finding {
    Finding {
        role: AgentRole::CodeAnalysis,
        hypothesis: class,
        stage,
        confidence,
        evidence: vec!["token".into()],
        note: String::new(),
    }
}

fn context() -> ReasonContext {
    ReasonContext {
        run_id: "t".into(),
        stage: PipelineStage::SourceManagement,
        step: 0,
    }
}

fn quiet_env() -> PipelineEnv {
    PipelineEnv::new(EnvConfig {
        decoy_rate: 0.0,
        ..EnvConfig::default()
    })
    .unwrap()
}

#[test]
fn scan_commit_matches_shipped_rule() {
    let agents = DefenseAgents::default();
    let found = agents
        .scan_commit(&[signal(
            PipelineStage::SourceManagement,
            SignalKind::CommitDiff,
            "diff exec_untrusted_input",
        )])
        .unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].hypothesis, Injection);
    assert_eq!(found[0].confidence, 0.9);
    assert_eq!(found[0].evidence, vec!["exec_untrusted_input".to_string()]);
}

#[test]
fn benign_commit_has_no_findings() {
    let agents = DefenseAgents::default();
    let found = agents
        .scan_commit(&[signal(
            PipelineStage::SourceManagement,
            SignalKind::CommitDiff,
            "diff rename_variable add_unit_test",
        )])
        .unwrap();
    assert!(found.is_empty());
}

#[test]
fn two_tokens_follow_rule_table_order() {
    let agents = DefenseAgents::default();
    // Listed in the signal in reverse of the table order.
    let found = agents
        .scan_commit(&[signal(
            PipelineStage::SourceManagement,
            SignalKind::CommitDiff,
            "unsafe_yaml_load exec_untrusted_input",
        )])
        .unwrap();
    let table_order: Vec<&str> = agents
        .rules()
        .for_role(AgentRole::CodeAnalysis)
        .map(|r| r.token.as_str())
        .filter(|t| *t == "unsafe_yaml_load" || *t == "exec_untrusted_input")
        .collect();
    let got: Vec<&str> = found.iter().map(|f| f.evidence[0].as_str()).collect();
    assert_eq!(got, table_order);
    assert_eq!(found.len(), 2);
}

#[test]
fn role_specific_rules() {
    let agents = DefenseAgents::default();
    let dep = agents
        .evaluate_dependency(&[signal(
            PipelineStage::DependencyResolution,
            SignalKind::SbomEntry,
            "typosquat_pkg",
        )])
        .unwrap();
    assert_eq!(dep.len(), 1);
    assert_eq!(dep[0].hypothesis, Injection);
    assert_eq!(dep[0].confidence, 0.85);

    let access = agents
        .check_access(&[signal(
            PipelineStage::Deployment,
            SignalKind::PermissionRecord,
            "wildcard_admin",
        )])
        .unwrap();
    assert_eq!(access.len(), 1);
    assert_eq!(access[0].hypothesis, BrokenAccessControl);
    assert_eq!(access[0].confidence, 0.9);

    let config = agents
        .audit_config(&[signal(
            PipelineStage::ArtifactPackaging,
            SignalKind::ConfigManifest,
            "tls_enabled resource_limits_set",
        )])
        .unwrap();
    assert!(config.is_empty());
}

#[test]
fn wrong_signal_kind_is_rejected() {
    let agents = DefenseAgents::default();
    let err = agents
        .scan_commit(&[signal(
            PipelineStage::Build,
            SignalKind::PipelineLog,
            "exec_untrusted_input",
        )])
        .unwrap_err();
    assert_eq!(
        err,
        AgentError::WrongSignalKind {
            role: AgentRole::CodeAnalysis,
            kind: SignalKind::PipelineLog
        }
    );
    assert!(agents
        .monitor_pipeline(&[signal(
            PipelineStage::Build,
            SignalKind::SbomEntry,
            "x"
        )])
        .is_err());
}

#[test]
fn shipped_rules_cover_every_role() {
    let table = RuleTable::shipped();
    for role in AgentRole::ALL {
        assert!(table.for_role(role).count() > 0, "{role} has no rules");
    }
    assert!(table
        .rules()
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.confidence) && !r.token.is_empty()));
}

#[test]
fn rule_table_rejects_bad_confidence() {
    let err = RuleTable::from_json(
        r#"[{"role":"CodeAnalysis","token":"x","class":"Injection","confidence":1.5}]"#,
    )
    .unwrap_err();
    assert!(matches!(err, RuleError::Confidence { .. }));
}

#[test]
fn empty_findings_are_benign() {
    let a = RuleReasoner::default().reason(&[], &context());
    assert!(a.is_benign());
    assert_eq!(a.candidate_actions, vec![MitigationAction::AllowContinue]);
}

#[test]
fn single_strong_finding() {
    let a = RuleReasoner::default().reason(
        &[finding(Injection, PipelineStage::SourceManagement, 0.9)],
        &context(),
    );
    assert_eq!(a.verdict, Some(Injection));
    assert_eq!(a.severity, 0.9);
    assert!(!a.rationale.is_empty());
}

#[test]
fn cross_stage_bonus_in_odds_space() {
    let findings = [
        finding(Injection, PipelineStage::SourceManagement, 0.6),
        finding(Injection, PipelineStage::Build, 0.6),
    ];
    // Independent hand computation.
    let noisy_or: f64 = 1.0 - 0.4 * 0.4;
    assert!((noisy_or - 0.84).abs() < 1e-12);
    let odds = 0.84 / 0.16 * 1.5; // 7.875
    let expected = odds / (1.0 + odds); // 0.88732...
    let a = RuleReasoner::default().reason(&findings, &context());
    assert_eq!(a.verdict, Some(Injection));
    assert!((a.severity - expected).abs() < 1e-12);
    assert_eq!(format!("{:.3}", a.severity), "0.887");
    assert_eq!(a.prior_alerts, 1);
}

#[test]
fn same_stage_findings_get_no_bonus() {
    let findings = [
        finding(Injection, PipelineStage::Build, 0.6),
        finding(Injection, PipelineStage::Build, 0.6),
    ];
    let a = RuleReasoner::default().reason(&findings, &context());
    assert!((a.severity - 0.84).abs() < 1e-12);
}

#[test]
fn uncorrelated_reasoner_uses_strongest_finding() {
    let findings = [
        finding(Injection, PipelineStage::SourceManagement, 0.3),
        finding(Injection, PipelineStage::Build, 0.3),
    ];
    assert!(RuleReasoner::uncorrelated()
        .reason(&findings, &context())
        .is_benign());
    let fused = RuleReasoner::default().reason(&findings, &context());
    // 1 - 0.7^2 = 0.51, odds 0.51/0.49 * 1.5
    let odds = 0.51 / 0.49 * 1.5;
    assert!((fused.severity - odds / (1.0 + odds)).abs() < 1e-12);
    assert_eq!(fused.verdict, Some(Injection));
}

#[test]
fn below_threshold_is_benign() {
    let a = RuleReasoner::default().reason(
        &[finding(Misconfiguration, PipelineStage::Build, 0.3)],
        &context(),
    );
    assert!(a.is_benign());
}

#[test]
fn candidate_actions_prefer_targeted_mitigation() {
    let reasoner = RuleReasoner::default();
    let access = reasoner.reason(
        &[finding(BrokenAccessControl, PipelineStage::Deployment, 0.9)],
        &context(),
    );
    assert_eq!(access.candidate_actions[0], MitigationAction::RevokeCredentials);
    let dep = reasoner.reason(
        &[finding(InsecureDeserialization, PipelineStage::DependencyResolution, 0.9)],
        &context(),
    );
    assert_eq!(dep.candidate_actions[0], MitigationAction::QuarantineDependency);
    let medium = reasoner.reason(
        &[finding(Misconfiguration, PipelineStage::Build, 0.6)],
        &context(),
    );
    assert_eq!(medium.candidate_actions[0], MitigationAction::RequestReview);
}

#[test]
fn default_graph_shape() {
    let graph = ExecutionGraph::shipped_default();
    assert_eq!(graph.node_count(), 6);
    assert_eq!(graph.entry_kind(), NodeKind::Agent(AgentRole::CodeAnalysis));
    assert_eq!(graph.nodes().filter(|(_, k)| *k == NodeKind::Decision).count(), 1);
}

#[test]
fn dangling_edge_names_the_node() {
    let mut spec = GraphSpec::shipped_default();
    spec.edges.push(Edge {
        from: "code_analysis".into(),
        to: "ghost".into(),
        guard: None,
    });
    let err = build_graph(&spec).unwrap_err();
    assert_eq!(err, GraphError::UnknownNode("ghost".into()));
    assert!(err.to_string().contains("ghost"));
}

#[test]
fn missing_entry_and_zero_bound_are_rejected() {
    let mut spec = GraphSpec::shipped_default();
    spec.entry = "nowhere".into();
    assert_eq!(
        build_graph(&spec).unwrap_err(),
        GraphError::MissingEntry("nowhere".into())
    );
    let mut spec = GraphSpec::shipped_default();
    spec.max_visits_per_node = 0;
    assert_eq!(build_graph(&spec).unwrap_err(), GraphError::VisitBound);
}

fn looping_spec(max_visits: u32) -> GraphSpec {
    GraphSpec {
        entry: "a".into(),
        max_visits_per_node: max_visits,
        nodes: vec![
            Node {
                id: "a".into(),
                agent: Some(AgentRole::CodeAnalysis),
                decision: false,
            },
            Node {
                id: "d".into(),
                agent: None,
                decision: true,
            },
        ],
        edges: vec![
            Edge {
                from: "a".into(),
                to: "a".into(),
                guard: None,
            },
            Edge {
                from: "a".into(),
                to: "d".into(),
                guard: None,
            },
        ],
    }
}

#[test]
fn bounded_cycle_is_accepted() {
    assert!(build_graph(&looping_spec(2)).is_ok());
}

#[test]
fn loop_halts_at_visit_bound() {
    let graph = build_graph(&looping_spec(2)).unwrap();
    let state = quiet_env().reset(&[], 3).unwrap();
    let trace = dispatch(
        &graph,
        &DefenseAgents::default(),
        &state,
        &RuleReasoner::default(),
    );
    assert_eq!(trace.path, vec!["a".to_string(), "a".to_string()]);
    assert_eq!(trace.activations.len(), 2);
}

#[test]
fn benign_dispatch_on_default_graph() {
    let state = quiet_env().reset(&[], 11).unwrap();
    let trace = dispatch(
        &ExecutionGraph::shipped_default(),
        &DefenseAgents::default(),
        &state,
        &RuleReasoner::default(),
    );
    assert_eq!(trace.roles(), vec![AgentRole::CodeAnalysis]);
    assert!(trace.assessment.is_benign());
}

#[test]
fn injection_routes_to_pipeline_monitoring() {
    let scenario = AttackScenario {
        id: "inj".into(),
        class: Injection,
        stage: PipelineStage::SourceManagement,
        payload: vec!["exec_untrusted_input".into()],
        syntactic_detectable: true,
        semantic_detectable: false,
        severity: 0.9,
    };
    let graph = ExecutionGraph::shipped_default();
    let state = quiet_env().reset(&[scenario], 11).unwrap();
    let trace = dispatch(
        &graph,
        &DefenseAgents::default(),
        &state,
        &RuleReasoner::default(),
    );
    assert_eq!(
        trace.roles(),
        vec![AgentRole::CodeAnalysis, AgentRole::CICDMonitoring]
    );
    assert_eq!(trace.path.last().map(String::as_str), Some("decision"));
    assert!(trace.reached_decision(&graph));
    assert_eq!(trace.assessment.verdict, Some(Injection));
    assert!(trace.assessment.rationale.contains("exec_untrusted_input"));
}

/// Tokens a role's rule table maps to `class`.
fn tokens_for(role: AgentRole, class: VulnerabilityClass) -> Vec<String> {
    RuleTable::shipped()
        .for_role(role)
        .filter(|r| r.class == class)
        .map(|r| r.token.clone())
        .collect()
}

fn scenario_strategy() -> impl Strategy<Value = AttackScenario> {
    (0usize..4, 0usize..5, any::<prop::sample::Index>(), 0.0f64..=1.0).prop_map(
        |(c, s, pick, severity)| {
            let class = VulnerabilityClass::ALL[c];
            let stage = PipelineStage::ALL[s];
            let mut scenario = AttackScenario {
                id: "p".into(),
                class,
                stage,
                payload: vec![],
                syntactic_detectable: true,
                semantic_detectable: false,
                severity,
            };
            let role = scenario.signal_kind().observer();
            let tokens = tokens_for(role, class);
            scenario.payload = vec![pick.get(&tokens).clone()];
            scenario
        },
    )
}

proptest! {
    #[test]
    fn syntactic_scenarios_yield_a_finding_of_their_class(
        scenario in scenario_strategy(),
        seed in any::<u64>(),
    ) {
        let env = PipelineEnv::new(EnvConfig::default()).unwrap();
        let mut state = env.reset(std::slice::from_ref(&scenario), seed).unwrap();
        while state.stage != scenario.stage {
            state = env.step(&state, MitigationAction::AllowContinue).unwrap().next_state;
        }
        let trace = dispatch(
            &ExecutionGraph::shipped_sweep(),
            &DefenseAgents::default(),
            &state,
            &RuleReasoner::default(),
        );
        prop_assert!(trace.findings().any(|f| f.hypothesis == scenario.class));
    }

    #[test]
    fn dispatch_terminates_within_visit_bound(
        bound in 1u32..4,
        self_loop in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut spec = GraphSpec::shipped_sweep();
        spec.max_visits_per_node = bound;
        if self_loop {
            spec.edges.insert(0, Edge { from: "cicd_monitoring".into(), to: "code_analysis".into(), guard: None });
        }
        let graph = build_graph(&spec).unwrap();
        let state = PipelineEnv::new(EnvConfig::default()).unwrap().reset(&[], seed).unwrap();
        let before = state.clone();
        let trace = dispatch(&graph, &DefenseAgents::default(), &state, &RuleReasoner::default());
        prop_assert!(trace.path.len() <= graph.node_count() * bound as usize);
        prop_assert_eq!(state, before);
    }

    #[test]
    fn assessments_are_explainable(
        raw in prop::collection::vec((0usize..4, 0usize..5, 0.0f64..=1.0), 0..8),
        correlate in any::<bool>(),
    ) {
        let findings: Vec<Finding> = raw
            .iter()
            .map(|&(c, s, conf)| Finding {
                role: AgentRole::CICDMonitoring,
                hypothesis: VulnerabilityClass::ALL[c],
                stage: PipelineStage::ALL[s],
                confidence: conf,
                evidence: vec![format!("tok{c}{s}")],
                note: String::new(),
            })
            .collect();
        let reasoner = RuleReasoner::new(ReasonerConfig { correlate, ..ReasonerConfig::default() });
        let a = reasoner.reason(&findings, &context());
        prop_assert!((0.0..=1.0).contains(&a.severity));
        match a.verdict {
            None => prop_assert_eq!(a.candidate_actions, vec![MitigationAction::AllowContinue]),
            Some(class) => {
                prop_assert!(a.severity >= 0.5);
                let referenced = findings
                    .iter()
                    .filter(|f| f.hypothesis == class)
                    .any(|f| a.rationale.contains(&f.evidence[0]));
                prop_assert!(referenced);
                prop_assert!(!a.candidate_actions.contains(&MitigationAction::AllowContinue));
            }
        }
        // Order independence.
        let mut reversed = findings.clone();
        reversed.reverse();
        let b = reasoner.reason(&reversed, &context());
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert!((a.severity - b.severity).abs() < 1e-12);
    }

    #[test]
    fn correlation_never_lowers_a_score(
        confs in prop::collection::vec((0usize..5, 0.0f64..=1.0), 1..6),
    ) {
        let findings: Vec<Finding> = confs
            .iter()
            .map(|&(s, c)| finding(Injection, PipelineStage::ALL[s], c))
            .collect();
        let refs: Vec<&Finding> = findings.iter().collect();
        let fused = RuleReasoner::default().aggregate(&refs);
        let raw = RuleReasoner::uncorrelated().aggregate(&refs);
        prop_assert!(fused + 1e-12 >= raw);
        prop_assert!(fused <= 1.0);
    }
}
