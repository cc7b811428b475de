//! Shared fixtures for the benchmarks.

use dfa_core::consensus::ShardMoments;
use dfa_core::simulate::{generate_dataset, holdout_split};
use dfa_core::{derive, ChainConfig, ChainState, HoldoutMode, Purpose, RatingMatrix, SimParams};

/// Training split of a simulated `users x items` dataset.
pub fn simulated_ratings(users: usize, items: usize, seed: u64) -> RatingMatrix {
    let sim = SimParams { users, items, ..SimParams::default() };
    let (_, full) = generate_dataset(&sim, &mut derive(seed, Purpose::Simulate, 0)).expect("valid simulation");
    holdout_split(&full, HoldoutMode::GlobalFraction(0.2), &mut derive(seed, Purpose::Holdout, 0))
        .expect("valid split")
        .0
}

/// Chain state after `warmup` sweeps, so feature counts are realistic.
pub fn warm_state(ratings: &RatingMatrix, seed: u64, warmup: usize) -> ChainState {
    let config = ChainConfig::new(warmup.max(2), seed);
    let mut state = ChainState::initialize(ratings, &config).expect("valid config");
    for _ in 0..warmup {
        state.sweep(ratings);
    }
    state
}

/// Deterministic shard moments for `shards x items` merges.
pub fn shard_moments(shards: usize, items: usize) -> Vec<ShardMoments> {
    (0..shards)
        .map(|s| ShardMoments {
            shard: s,
            mean: (0..items).map(|i| ((s * 31 + i * 17) % 100) as f64 / 50.0 - 1.0).collect(),
            sd: (0..items).map(|i| 0.1 + ((s + i) % 7) as f64 / 20.0).collect(),
        })
        .collect()
}
