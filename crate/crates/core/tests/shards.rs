use dfa_core::consensus::{merge_rho, merged_predict, run_shards, shard_moments, split_users};
use dfa_core::simulate::{generate_dataset, SimParams};
use dfa_core::{derive, run_chain, ChainConfig, FilterRule, MergePrior, Purpose, RatingMatrix, ResampleMode, SplitStrategy};

fn data() -> RatingMatrix {
    let sim = SimParams { users: 30, items: 15, ..SimParams::default() };
    generate_dataset(&sim, &mut derive(5, Purpose::Simulate, 0)).unwrap().1
}

fn config() -> ChainConfig {
    let mut c = ChainConfig::new(60, 9);
    c.thin = 3;
    c
}

#[test]
fn one_shard_is_the_single_chain() {
    let r = data();
    let plan = split_users(r.users(), 1, SplitStrategy::Contiguous).unwrap();
    let shards = run_shards(&r, &plan, &config(), Some(1)).unwrap();
    assert_eq!(shards.len(), 1);
    assert_eq!(shards[0], run_chain(&r, &config()).unwrap());
}

#[test]
fn thread_count_does_not_change_draws() {
    let r = data();
    let plan = split_users(r.users(), 4, SplitStrategy::SeededShuffle(3)).unwrap();
    let serial = run_shards(&r, &plan, &config(), Some(1)).unwrap();
    assert_eq!(serial, run_shards(&r, &plan, &config(), Some(3)).unwrap());
    assert_eq!(serial, run_shards(&r, &plan, &config(), None).unwrap());
    assert!(serial.windows(2).all(|w| w[0] != w[1]), "shards must use distinct streams");

    let moments: Vec<_> = serial.iter().enumerate().map(|(s, d)| shard_moments(s, d).unwrap()).collect();
    let global = merge_rho(&moments, MergePrior::Flat).unwrap();
    let ens = |mode| merged_predict(&serial, &global, FilterRule::KeepFraction(0.5), mode, 17).unwrap();
    for mode in [ResampleMode::PerDraw, ResampleMode::PerShard] {
        assert_eq!(ens(mode), ens(mode));
    }
}
