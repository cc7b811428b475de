use dfa_core::consensus::{filter_draws, merge_rho, rho_distance, ShardMoments};
use dfa_core::draws::{format_draw, parse_draw, DrawHeader};
use dfa_core::model::{category_probs, log_lik_row, probit_mean};
use dfa_core::normal::sample_truncated;
use dfa_core::predict::{posterior_category_probs, predict_rating};
use dfa_core::summarize::{dahl_estimate_a, map_k, min_hamming_distance, min_hamming_exhaustive, tradeoff_table};
use dfa_core::{
    derive, BinaryMatrix, FeatureAllocation, FilterRule, McmcDraw, MergePrior, ModelParams, Purpose, Rating,
    RatingMatrix,
};
use proptest::prelude::*;
use rand::Rng;

fn binary_matrix(rows: usize, cols: usize) -> impl Strategy<Value = BinaryMatrix> {
    proptest::collection::vec(proptest::collection::vec(any::<bool>(), rows), cols)
        .prop_map(move |c| BinaryMatrix::from_columns(rows, c).unwrap())
}

fn draw(alloc: FeatureAllocation, theta: Vec<f64>, rho: Vec<f64>, tau: f64) -> McmcDraw {
    McmcDraw { iteration: 0, alloc, params: ModelParams { b0: 2.5, theta, rho, tau }, p_b: 0.2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_shard_merge_is_identity(
        stats in proptest::collection::vec((-3.0f64..3.0, 0.01f64..2.0), 1..20)
    ) {
        let (mean, sd): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
        let g = merge_rho(&[ShardMoments { shard: 0, mean: mean.clone(), sd: sd.clone() }], MergePrior::Flat).unwrap();
        for i in 0..mean.len() {
            prop_assert!((g.mean[i] - mean[i]).abs() < 1e-12);
            prop_assert!((g.sd[i] - sd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_shards_divide_variance(mu in -3.0f64..3.0, sd in 0.01f64..2.0, s in 1usize..16) {
        let moments: Vec<ShardMoments> =
            (0..s).map(|j| ShardMoments { shard: j, mean: vec![mu], sd: vec![sd] }).collect();
        let g = merge_rho(&moments, MergePrior::Flat).unwrap();
        prop_assert!((g.mean[0] - mu).abs() < 1e-12);
        prop_assert!((g.sd[0] * g.sd[0] - sd * sd / s as f64).abs() < 1e-12);
    }

    #[test]
    fn merge_lies_between_shard_means(
        shards in proptest::collection::vec((-3.0f64..3.0, 0.05f64..2.0), 2..8)
    ) {
        let moments: Vec<ShardMoments> = shards
            .iter()
            .enumerate()
            .map(|(j, &(m, s))| ShardMoments { shard: j, mean: vec![m], sd: vec![s] })
            .collect();
        let g = merge_rho(&moments, MergePrior::Flat).unwrap();
        let lo = shards.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let hi = shards.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let min_sd = shards.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        prop_assert!(g.mean[0] >= lo - 1e-12 && g.mean[0] <= hi + 1e-12);
        prop_assert!(g.sd[0] <= min_sd + 1e-12);
    }

    #[test]
    fn filter_returns_valid_subset(
        rhos in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 4), 1..40),
        tilde in proptest::collection::vec(-2.0f64..2.0, 4),
        q in 0.01f64..1.0,
        eps in 0.05f64..2.0,
    ) {
        let draws: Vec<McmcDraw> =
            rhos.iter().map(|r| draw(FeatureAllocation::empty(1, 4), vec![], r.clone(), 0.5)).collect();
        let t = draws.len();
        let keep = filter_draws(&draws, &tilde, FilterRule::KeepFraction(q)).unwrap();
        prop_assert!(keep.kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(keep.kept.iter().all(|&i| i < t));
        prop_assert_eq!(keep.kept.len(), ((q * t as f64) - 1e-9).ceil().max(1.0) as usize);
        let worst_kept = keep.kept.iter().map(|&i| rho_distance(&rhos[i], &tilde)).fold(0.0, f64::max);
        for i in (0..t).filter(|i| !keep.kept.contains(i)) {
            prop_assert!(rho_distance(&rhos[i], &tilde) >= worst_kept);
        }
        let near = filter_draws(&draws, &tilde, FilterRule::Epsilon(eps)).unwrap();
        prop_assert!(!near.kept.is_empty());
        if near.fallback {
            prop_assert_eq!(near.kept.len(), 1);
            prop_assert!(rhos.iter().all(|r| rho_distance(r, &tilde) >= eps));
        } else {
            prop_assert!(near.kept.iter().all(|&i| rho_distance(&rhos[i], &tilde) < eps));
        }
    }

    #[test]
    fn hamming_is_a_symmetric_permutation_invariant(
        a in binary_matrix(7, 4),
        b in binary_matrix(7, 4),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        prop_assert_eq!(min_hamming_distance(&a, &a).unwrap(), 0);
        let mut shuffled = a.clone();
        shuffled.permute_columns(&perm);
        prop_assert_eq!(min_hamming_distance(&a, &shuffled).unwrap(), 0);
        let ab = min_hamming_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, min_hamming_distance(&b, &a).unwrap());
        prop_assert!(ab >= min_hamming_exhaustive(&a, &b).unwrap());
        prop_assert!(ab <= a.count_ones() + b.count_ones());
    }

    #[test]
    fn predicted_rating_is_monotone_in_item_effect(
        theta in -3.0f64..3.0,
        tau in 0.1f64..1.5,
        rho in -4.0f64..4.0,
        bump in 0.0f64..3.0,
    ) {
        let a = BinaryMatrix::from_row_major_bits(1, 1, "1").unwrap();
        let b = BinaryMatrix::from_row_major_bits(1, 1, "1").unwrap();
        let alloc = FeatureAllocation::new(a, b).unwrap();
        let low = posterior_category_probs(0, 0, &[draw(alloc.clone(), vec![theta], vec![rho], tau)]).unwrap();
        let high = posterior_category_probs(0, 0, &[draw(alloc, vec![theta], vec![rho + bump], tau)]).unwrap();
        prop_assert!(predict_rating(&high.probs) >= predict_rating(&low.probs));
        prop_assert!(high.score >= low.score - 1e-12);
    }

    #[test]
    fn category_probs_form_a_distribution(mean in -10.0f64..15.0, tau in 0.01f64..5.0) {
        let p = category_probs(mean, tau);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_draws_respect_brackets(mean in -20.0f64..25.0, sd in 0.01f64..3.0, r in 1u8..=5, seed in any::<u64>()) {
        let (lo, hi) = Rating::new(r).unwrap().bracket();
        let mut rng = derive(seed, Purpose::Chain, 0);
        for _ in 0..20 {
            let z = sample_truncated(mean, sd, lo, hi, &mut rng);
            prop_assert!(z > lo && z <= hi, "{} outside ({}, {}]", z, lo, hi);
        }
    }

    #[test]
    fn dahl_estimate_is_a_stored_draw(ks in proptest::collection::vec(0usize..4, 1..12), seed in any::<u64>()) {
        let mut rng = derive(seed, Purpose::Simulate, 0);
        let draws: Vec<McmcDraw> = ks
            .iter()
            .map(|&k| {
                let a = BinaryMatrix::from_columns(5, (0..k).map(|_| (0..5).map(|_| rng.random()).collect()).collect()).unwrap();
                let b = BinaryMatrix::from_columns(3, (0..k).map(|_| vec![true; 3]).collect()).unwrap();
                draw(FeatureAllocation::new(a, b).unwrap(), vec![0.5; k], vec![0.0; 3], 0.5)
            })
            .collect();
        let est = dahl_estimate_a(&draws).unwrap();
        prop_assert_eq!(est.k, map_k(&draws).unwrap());
        prop_assert_eq!(&est.a, draws[est.index].alloc.a());
    }

    #[test]
    fn tradeoff_is_monotone(m in 100usize..20000, n in 10usize..500, mut shards in proptest::collection::btree_set(1usize..60, 2..8)) {
        shards.retain(|&s| (m as f64 / s as f64) * n as f64 > 3.0);
        let shards: Vec<usize> = shards.into_iter().collect();
        let rows = tradeoff_table(m, n, &shards).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[1].per_shard_cost < w[0].per_shard_cost);
            prop_assert!(w[1].se_theta > w[0].se_theta);
        }
    }

    #[test]
    fn empty_features_do_not_change_the_likelihood(
        a in binary_matrix(4, 3),
        b in binary_matrix(5, 3),
        extra_items in proptest::collection::vec(any::<bool>(), 5),
        theta in proptest::collection::vec(-2.0f64..2.0, 4),
        seed in any::<u64>(),
    ) {
        let mut rng = derive(seed, Purpose::Simulate, 1);
        let triples: Vec<(usize, usize, u8)> = (0..4)
            .flat_map(|u| (0..5).map(move |i| (u, i)))
            .filter(|_| rng.random::<f64>() < 0.7)
            .map(|(u, i)| (u, i, 1 + ((u * 3 + i) % 5) as u8))
            .collect();
        let ratings = RatingMatrix::from_triples(4, 5, &triples).unwrap();
        let alloc = FeatureAllocation::new(a, b).unwrap();
        let params = ModelParams { b0: 2.5, theta: theta[..3].to_vec(), rho: vec![0.1; 5], tau: 0.6 };
        let mut padded = alloc.clone();
        padded.push_feature(vec![false; 4], extra_items);
        let padded_params = ModelParams { theta: theta.clone(), ..params.clone() };
        for u in 0..4 {
            let l0 = log_lik_row(u, &ratings, &alloc, &params);
            let l1 = log_lik_row(u, &ratings, &padded, &padded_params);
            prop_assert!((l0 - l1).abs() < 1e-12);
            for i in 0..5 {
                prop_assert_eq!(probit_mean(u, i, &alloc, &params).unwrap(), probit_mean(u, i, &padded, &padded_params).unwrap());
            }
        }
    }

    #[test]
    fn draw_lines_round_trip(a in binary_matrix(3, 2), b in binary_matrix(4, 2), theta in proptest::collection::vec(-5.0f64..5.0, 2), rho in proptest::collection::vec(-1e3f64..1e3, 4), tau in 1e-3f64..10.0) {
        let d = McmcDraw { iteration: 17, ..draw(FeatureAllocation::new(a, b).unwrap(), theta, rho, tau) };
        let back = parse_draw(&format_draw(&d), DrawHeader { m: 3, n: 4, b0: 2.5 }, 2).unwrap();
        prop_assert_eq!(back, d);
    }
}
