use pipeward_core::env::OutcomeFlags;
use pipeward_core::{AgentRole, MitigationAction};
use pipeward_ledger::merkle::sha256;
use pipeward_ledger::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entry(agent: &str, role: AgentRole, action: MitigationAction, t: u64) -> LedgerEntry {
    LedgerEntry {
        agent_id: agent.into(),
        role,
        signals_digest: sha256(&[agent.as_bytes(), &t.to_be_bytes()]),
        reasoning_summary: format!("{role} chose {action} at minute {t}"),
        action,
        outcome: OutcomeFlags {
            attack_mitigated: action != MitigationAction::AllowContinue,
            false_positive: false,
            developer_accepted: true,
            build_delay: 1.5,
        },
        timestamp: t,
    }
}

/// Genesis plus `extra` blocks of two entries each.
fn chain_with(extra: u64) -> Ledger {
    let mut ledger = Ledger::with_defaults(7);
    for t in 1..=extra {
        let entries = vec![
            entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::BlockBuild, t),
            entry("code-1", AgentRole::CodeAnalysis, MitigationAction::OpenGuardPullRequest, t),
        ];
        ledger
            .append_block(entries, "validator-1", &Behaviors::new(), t)
            .expect("honest append commits");
    }
    ledger
}

#[test]
fn genesis_only_chain_is_valid() {
    let ledger = Ledger::with_defaults(1);
    assert_eq!(ledger.blocks().len(), 1);
    assert_eq!(ledger.blocks()[0].prev_hash, [0; 32]);
    assert_eq!(ledger.verify(), ChainVerdict::Valid { blocks: 1 });
}

#[test]
fn first_append_links_to_genesis_header() {
    let mut ledger = Ledger::with_defaults(1);
    let genesis = ledger.blocks()[0].clone();
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::PauseBuild, 3);
    let block = ledger
        .append_block(vec![e.clone()], "validator-0", &Behaviors::new(), 3)
        .unwrap();
    assert_eq!(block.index, 1);
    // Independent recomputation of the header hash from its documented layout.
    let mut header = Vec::new();
    header.extend_from_slice(&0u64.to_be_bytes());
    header.extend_from_slice(&[0; 32]);
    header.extend_from_slice(&genesis.merkle_root);
    header.extend_from_slice(&(genesis.proposer.len() as u32).to_be_bytes());
    header.extend_from_slice(genesis.proposer.as_bytes());
    header.extend_from_slice(&genesis.timestamp.to_be_bytes());
    header.extend_from_slice(&0u32.to_be_bytes());
    assert_eq!(block.prev_hash, sha256(&[&header]));
    assert_eq!(block.merkle_root, merkle_root(&[e.to_bytes()]));
    assert_eq!(block.signatures.len(), 4);
}

#[test]
fn acl_violation_names_the_role_and_penalizes() {
    let mut ledger = Ledger::with_defaults(1);
    let bad = entry("code-1", AgentRole::CodeAnalysis, MitigationAction::RevokeCredentials, 1);
    let err = ledger
        .append_block(vec![bad], "validator-0", &Behaviors::new(), 1)
        .unwrap_err();
    assert_eq!(
        err,
        AppendError::Acl {
            role: AgentRole::CodeAnalysis,
            action: MitigationAction::RevokeCredentials
        }
    );
    assert!(err.to_string().contains("CodeAnalysis"));
    assert_eq!(ledger.blocks().len(), 1);
    let account = ledger.stakes().account("code-1").unwrap();
    assert_eq!(account.penalties_applied, 1);
}

#[test]
fn eleventh_append_in_one_window_is_rate_limited() {
    let mut ledger = Ledger::with_defaults(1);
    for i in 0..10 {
        let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::AllowContinue, 0);
        assert!(ledger.append_block(vec![e], "validator-0", &Behaviors::new(), 0).is_ok(), "append {i}");
    }
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::AllowContinue, 0);
    assert_eq!(
        ledger.append_block(vec![e], "validator-0", &Behaviors::new(), 0),
        Err(AppendError::RateLimited { agent_id: "ci-1".into() })
    );
    assert_eq!(ledger.blocks().len(), 11);
}

#[test]
fn unknown_proposer_is_rejected() {
    let mut ledger = Ledger::with_defaults(1);
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::AllowContinue, 0);
    assert!(matches!(
        ledger.append_block(vec![e], "mallory", &Behaviors::new(), 0),
        Err(AppendError::UnknownProposer(_))
    ));
}

#[test]
fn aborted_consensus_leaves_chain_untouched() {
    let mut ledger = Ledger::with_defaults(1);
    let behaviors = Behaviors::from([
        ("validator-2".to_string(), Behavior::Reject),
        ("validator-3".to_string(), Behavior::Reject),
    ]);
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::AllowContinue, 0);
    assert_eq!(
        ledger.append_block(vec![e], "validator-0", &behaviors, 0),
        Err(AppendError::Aborted { valid_votes: 2, quorum: 3 })
    );
    assert_eq!(ledger.blocks().len(), 1);
}

fn proposal(ledger: &Ledger) -> Block {
    let tip = ledger.blocks().last().unwrap();
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::BlockBuild, 1);
    Block::unsigned(tip.index + 1, tip.header_hash(), vec![e], "validator-0", 1)
}

fn commit(ledger: &Ledger, behaviors: &Behaviors) -> CommitOutcome {
    let block = proposal(ledger);
    let ctx = VoteContext {
        index: block.index,
        prev_hash: block.prev_hash,
        acl: &ledger.genesis().acl,
    };
    bft_commit(ledger.validators(), &block, &ctx, behaviors)
}

#[test]
fn four_honest_validators_all_sign() {
    let ledger = Ledger::with_defaults(2);
    match commit(&ledger, &Behaviors::new()) {
        CommitOutcome::Committed { signatures } => assert_eq!(signatures.len(), 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn one_silent_validator_still_commits() {
    let ledger = Ledger::with_defaults(2);
    let b = Behaviors::from([("validator-3".to_string(), Behavior::Silent)]);
    match commit(&ledger, &b) {
        CommitOutcome::Committed { signatures } => assert_eq!(signatures.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn two_rejecting_validators_abort() {
    let ledger = Ledger::with_defaults(2);
    let b = Behaviors::from([
        ("validator-0".to_string(), Behavior::Reject),
        ("validator-1".to_string(), Behavior::Reject),
    ]);
    match commit(&ledger, &b) {
        CommitOutcome::Aborted { valid_votes, verdicts } => {
            assert_eq!(valid_votes, 2);
            assert_eq!(verdicts.len(), 4);
            assert!(matches!(verdicts[0].1, VoteVerdict::Rejected(_)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn equivocating_votes_are_discarded() {
    let ledger = Ledger::with_defaults(2);
    let b = Behaviors::from([("validator-1".to_string(), Behavior::Equivocate)]);
    match commit(&ledger, &b) {
        CommitOutcome::Committed { signatures } => {
            assert_eq!(signatures.len(), 3);
            assert!(signatures.iter().all(|s| s.validator != "validator-1"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn honest_validators_refuse_a_broken_link() {
    let ledger = Ledger::with_defaults(2);
    let mut block = proposal(&ledger);
    block.prev_hash[0] ^= 1;
    let ctx = VoteContext {
        index: block.index,
        prev_hash: ledger.blocks()[0].header_hash(),
        acl: &ledger.genesis().acl,
    };
    assert!(matches!(
        bft_commit(ledger.validators(), &block, &ctx, &Behaviors::new()),
        CommitOutcome::Aborted { valid_votes: 0, .. }
    ));
}

#[test]
fn flipping_an_entry_byte_is_a_merkle_mismatch() {
    let ledger = chain_with(2);
    let mut blocks = ledger.blocks().to_vec();
    blocks[1].entries[0].reasoning_summary.replace_range(0..1, "X");
    assert_eq!(
        verify_chain(&blocks, ledger.genesis()),
        ChainVerdict::Invalid { first_bad_index: 1, reason: InvalidReason::MerkleMismatch }
    );
}

#[test]
fn stripping_a_signature_below_quorum_is_reported() {
    let ledger = chain_with(2);
    let mut blocks = ledger.blocks().to_vec();
    blocks[2].signatures.truncate(2);
    assert_eq!(
        verify_chain(&blocks, ledger.genesis()),
        ChainVerdict::Invalid { first_bad_index: 2, reason: InvalidReason::Quorum }
    );
}

#[test]
fn foreign_signature_and_acl_breaches_are_reported() {
    let ledger = chain_with(2);
    let mut blocks = ledger.blocks().to_vec();
    blocks[1].signatures[0].signature[5] ^= 0x10;
    assert_eq!(
        verify_chain(&blocks, ledger.genesis()),
        ChainVerdict::Invalid { first_bad_index: 1, reason: InvalidReason::Signature }
    );

    // A block signed by every validator but carrying a forbidden entry.
    let mut genesis = ledger.genesis().clone();
    genesis
        .acl
        .permitted
        .get_mut(&AgentRole::CodeAnalysis)
        .unwrap()
        .remove(&MitigationAction::OpenGuardPullRequest);
    assert_eq!(
        verify_chain(ledger.blocks(), &genesis),
        ChainVerdict::Invalid { first_bad_index: 1, reason: InvalidReason::Acl }
    );
}

#[test]
fn reordered_blocks_break_the_hash_link() {
    let ledger = chain_with(3);
    let mut blocks = ledger.blocks().to_vec();
    blocks.swap(2, 3);
    assert_eq!(
        verify_chain(&blocks, ledger.genesis()),
        ChainVerdict::Invalid { first_bad_index: 2, reason: InvalidReason::HashLink }
    );
    assert!(!verify_chain(&[], ledger.genesis()).is_valid());
}

#[test]
fn chain_bytes_round_trip_and_are_deterministic() {
    let a = chain_with(3);
    let b = chain_with(3);
    assert_eq!(a.to_bytes(), b.to_bytes());
    let decoded = decode_chain(&a.to_bytes()).unwrap();
    assert_eq!(decoded, a.blocks());
    assert!(verify_bytes(&a.to_bytes(), a.genesis()).is_valid());
}

#[test]
fn truncated_file_is_malformed_at_the_cut_block() {
    let ledger = chain_with(3);
    let bytes = ledger.to_bytes();
    let cut = &bytes[..bytes.len() - 10];
    assert_eq!(
        verify_bytes(cut, ledger.genesis()),
        ChainVerdict::Invalid { first_bad_index: 3, reason: InvalidReason::Malformed }
    );
}

#[test]
fn genesis_json_round_trips() {
    let ledger = chain_with(1);
    let json = ledger.genesis().to_json();
    let parsed = GenesisConfig::from_json(&json).unwrap();
    assert_eq!(&parsed, ledger.genesis());
    assert!(verify_chain(ledger.blocks(), &parsed).is_valid());
}

#[test]
fn null_sink_keeps_nothing() {
    let mut sink = NullSink;
    let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::AllowContinue, 0);
    assert_eq!(sink.record(vec![e], 0), Ok(None));
}

/// Index of the block containing byte `pos` of a framed ledger file.
fn block_of(bytes: &[u8], pos: usize) -> usize {
    let (mut at, mut index) = (0, 0);
    loop {
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        if pos < at + 4 + len {
            return index;
        }
        at += 4 + len;
        index += 1;
    }
}

#[test]
fn random_single_bit_flips_are_always_detected() {
    let ledger = chain_with(3);
    let bytes = ledger.to_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let pos = rng.gen_range(0..bytes.len());
        let bit = rng.gen_range(0..8);
        let mut corrupted = bytes.clone();
        corrupted[pos] ^= 1 << bit;
        match verify_bytes(&corrupted, ledger.genesis()) {
            ChainVerdict::Invalid { first_bad_index, .. } => {
                assert!(first_bad_index <= block_of(&bytes, pos), "byte {pos} bit {bit}")
            }
            ChainVerdict::Valid { .. } => panic!("flip at byte {pos} bit {bit} went unnoticed"),
        }
    }
}

fn safety_and_liveness(n: usize, behaviors: &Behaviors) {
    let ledger = Ledger::new(n, 3, AclPolicy::default(), RateConfig::default()).unwrap();
    let f = ledger.genesis().validators.f();
    let faulty = behaviors.values().filter(|b| **b != Behavior::Honest).count();
    match commit(&ledger, behaviors) {
        CommitOutcome::Committed { signatures } => {
            let honest = signatures
                .iter()
                .filter(|s| behaviors.get(&s.validator).copied().unwrap_or(Behavior::Honest) == Behavior::Honest)
                .count();
            assert!(honest > f, "{behaviors:?}");
        }
        CommitOutcome::Aborted { .. } => assert!(faulty > f, "liveness lost: {behaviors:?}"),
    }
}

#[test]
fn n4_every_behavior_assignment() {
    let ids: Vec<String> = (0..4).map(|i| format!("validator-{i}")).collect();
    for code in 0..4usize.pow(4) {
        let behaviors: Behaviors = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), Behavior::ALL[code / 4usize.pow(i as u32) % 4]))
            .collect();
        safety_and_liveness(4, &behaviors);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn n7_random_assignments(assign in proptest::collection::vec(0usize..4, 7)) {
        let behaviors: Behaviors = assign
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("validator-{i}"), Behavior::ALL[*b]))
            .collect();
        safety_and_liveness(7, &behaviors);
    }

    #[test]
    fn identical_entries_give_identical_bytes(ts in proptest::collection::vec(0u64..1000, 1..6)) {
        let build = || {
            let mut ledger = Ledger::with_defaults(5);
            for &t in &ts {
                let e = entry("ci-1", AgentRole::CICDMonitoring, MitigationAction::PauseBuild, t);
                let _ = ledger.append_block(vec![e], "validator-2", &Behaviors::new(), t);
            }
            ledger.to_bytes()
        };
        prop_assert_eq!(build(), build());
    }
}
