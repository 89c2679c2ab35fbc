use pipeward_core::policy::mdp::{corpus, oracle_agreement, oracle_train_config};
use pipeward_core::policy::{train, Algorithm, MdpEnv};

#[test]
fn learners_match_value_iteration_on_corpus() {
    let mut shortfalls = Vec::new();
    for mdp in corpus() {
        for algorithm in [Algorithm::Dqn, Algorithm::Ppo] {
            for seed in 1..=5u64 {
                let config = oracle_train_config(algorithm, seed);
                let policy = train(&mut MdpEnv::new(mdp.clone(), 200), &config).unwrap();
                let (matched, reachable) = oracle_agreement(&mdp, &policy.greedy_table()).unwrap();
                if (matched as f64) < 0.95 * reachable as f64 {
                    shortfalls.push(format!("{} {algorithm:?} seed {seed}: {matched}/{reachable}", mdp.name));
                }
            }
        }
    }
    assert!(shortfalls.is_empty(), "{shortfalls:#?}");
}
