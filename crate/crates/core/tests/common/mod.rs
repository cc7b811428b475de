//! Numerical oracles shared by the oracle tests and the acceptance run.
#![allow(dead_code)]

use dfa_core::ibp;
use dfa_core::model::probit_mean;
use dfa_core::rng::{derive, Purpose};
use dfa_core::sampler::{ChainState, NewFeatureRate};
use dfa_core::{BinaryMatrix, FeatureAllocation, Hyperparams, ModelParams, PbPrior, RatingMatrix, RhoPrior};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub const TV_TOL: f64 = 1e-3;

/// Total variation between a normalized analytic density and a grid-normalized
/// unnormalized log density, both evaluated on a uniform grid.
pub fn grid_tv(grid: &[f64], log_unnorm: impl Fn(f64) -> f64, log_density: impl Fn(f64) -> f64) -> f64 {
    let dx = grid[1] - grid[0];
    let lu: Vec<f64> = grid.iter().map(|&x| log_unnorm(x)).collect();
    let top = lu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = lu.iter().map(|l| (l - top).exp()).sum::<f64>() * dx;
    0.5 * grid
        .iter()
        .zip(&lu)
        .map(|(&x, &l)| ((l - top).exp() / mass - log_density(x).exp()).abs())
        .sum::<f64>()
        * dx
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n as f64).collect()
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Random toy state: a few users and items, random structure and parameters.
pub fn toy_state(seed: u64, rho: RhoPrior) -> (RatingMatrix, ChainState) {
    let mut rng = derive(seed, Purpose::Simulate, 99);
    let (m, n, k) = (rng.random_range(2..5), rng.random_range(2..5), rng.random_range(1..4));
    let mut triples = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.random::<f64>() < 0.7 {
                triples.push((u, i, rng.random_range(1..=5u8)));
            }
        }
    }
    let ratings = RatingMatrix::from_triples(m, n, &triples).unwrap();
    let a = BinaryMatrix::from_columns(m, (0..k).map(|_| (0..m).map(|_| rng.random::<f64>() < 0.6).collect()).collect())
        .unwrap();
    let b = BinaryMatrix::from_columns(n, (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() < 0.5).collect()).collect())
        .unwrap();
    let params = ModelParams {
        b0: 2.5,
        theta: (0..k).map(|_| rng.random_range(-1.5..1.5)).collect(),
        rho: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        tau: rng.random_range(0.3..1.2),
    };
    let hyper = Hyperparams { rho, ..Hyperparams::default() };
    let state = ChainState::new(&ratings, FeatureAllocation::new(a, b).unwrap(), params, 0.3, hyper, derive(seed, Purpose::Chain, 0))
        .unwrap();
    (ratings, state)
}

/// Gaussian log-likelihood of the latent scores with one parameter overridden.
pub fn z_log_lik(ratings: &RatingMatrix, state: &ChainState, params: &ModelParams) -> f64 {
    let var = params.tau * params.tau;
    ratings
        .entries()
        .iter()
        .enumerate()
        .map(|(idx, e)| log_normal_pdf(state.z.0[idx], probit_mean(e.user, e.item, &state.alloc, params).unwrap(), var))
        .sum()
}

/// Largest TV distance between the tau^2 conjugate posterior and quadrature.
pub fn tau_tv(seed: u64) -> f64 {
    let (ratings, state) = toy_state(seed, RhoPrior::Flat);
    let (shape, scale) = state.tau_posterior(&ratings);
    let (a0, b0) = (state.hyper.tau_shape, state.hyper.tau_scale);
    let log_ig = |v: f64, a: f64, b: f64| a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v;
    let mean = scale / (shape - 1.0);
    let grid = linspace(1e-6, mean * 8.0, 40_000);
    grid_tv(
        &grid,
        |v| {
            let mut p = state.params.clone();
            p.tau = v.sqrt();
            log_ig(v, a0, b0) + z_log_lik(&ratings, &state, &p)
        },
        |v| log_ig(v, shape, scale),
    )
}

/// Largest TV distance over features of the theta conditionals.
pub fn theta_tv(seed: u64) -> f64 {
    let (ratings, state) = toy_state(seed, RhoPrior::Flat);
    let mut worst: f64 = 0.0;
    for k in 0..state.alloc.k() {
        let (mean, var) = state.theta_posterior(k, &ratings);
        let grid = linspace(mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt(), 20_000);
        let sd0 = state.hyper.theta_sd;
        worst = worst.max(grid_tv(
            &grid,
            |t| {
                let mut p = state.params.clone();
                p.theta[k] = t;
                log_normal_pdf(t, 0.0, sd0 * sd0) + z_log_lik(&ratings, &state, &p)
            },
            |t| log_normal_pdf(t, mean, var),
        ));
    }
    worst
}

/// Largest TV distance over rated items of the rho conditionals; odd seeds
/// use a normal prior, even seeds the flat one.
pub fn rho_tv(seed: u64) -> f64 {
    let prior = if seed % 2 == 0 { RhoPrior::Flat } else { RhoPrior::Normal { mean: 0.3, sd: 0.8 } };
    let (ratings, state) = toy_state(seed, prior);
    let mut worst: f64 = 0.0;
    for i in 0..ratings.items() {
        let Some((mean, var)) = state.rho_posterior(i, &ratings) else {
            assert!(ratings.col(i).is_empty());
            continue;
        };
        let grid = linspace(mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt(), 20_000);
        worst = worst.max(grid_tv(
            &grid,
            |r| {
                let mut p = state.params.clone();
                p.rho[i] = r;
                let prior_term = match prior {
                    RhoPrior::Normal { mean, sd } => log_normal_pdf(r, mean, sd * sd),
                    _ => 0.0,
                };
                prior_term + z_log_lik(&ratings, &state, &p)
            },
            |r| log_normal_pdf(r, mean, var),
        ));
    }
    worst
}

/// TV distance between the pB Beta posterior and quadrature.
pub fn pb_tv(seed: u64) -> f64 {
    let (_, mut state) = toy_state(seed, RhoPrior::Flat);
    let (a0, b0) = (1.0 + seed as f64 % 3.0, 9.0 - seed as f64 % 4.0);
    state.hyper.pb = PbPrior::Beta { a: a0, b: b0 };
    let (a, b) = state.pb_posterior().unwrap();
    let ones = state.alloc.b().count_ones() as f64;
    let zeros = (state.alloc.items() * state.alloc.k()) as f64 - ones;
    let log_beta = |p: f64, a: f64, b: f64| {
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln()
    };
    let grid = linspace(0.0, 1.0, 100_000);
    grid_tv(&grid, |p| log_beta(p, a0, b0) + ones * p.ln() + zeros * (1.0 - p).ln(), |p| log_beta(p, a, b))
}

/// Mean K over `draws` prior samples, its standard error and lambda * H_m.
pub fn prior_k_mean(m: usize, lambda: f64, draws: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = derive(seed, Purpose::Simulate, 7);
    let ks: Vec<f64> = (0..draws).map(|_| ibp::sample_prior(m, lambda, &mut rng).unwrap().k() as f64).collect();
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (ks.len() - 1) as f64;
    (mean, (var / ks.len() as f64).sqrt(), ibp::expected_features(m, lambda))
}

/// Two-sample p-value of K from a chain with no ratings against prior draws.
pub fn empty_chain_vs_prior_p(m: usize, n: usize, lambda: f64, draws: usize, seed: u64) -> f64 {
    let chain = empty_data_chain_ks(m, n, lambda, NewFeatureRate::PerUser, draws, 10, seed);
    let mut rng = derive(seed, Purpose::Simulate, 0);
    let prior: Vec<usize> = (0..draws).map(|_| ibp::sample_prior(m, lambda, &mut rng).unwrap().k()).collect();
    two_sample_chi2_p(&chain, &prior)
}

/// Pearson chi-square two-sample homogeneity test on count histograms;
/// bins with small expected counts are pooled into the tail.
pub fn two_sample_chi2_p(x: &[usize], y: &[usize]) -> f64 {
    let max = x.iter().chain(y).copied().max().unwrap_or(0);
    let hist = |v: &[usize]| {
        let mut h = vec![0f64; max + 1];
        for &k in v {
            h[k] += 1.0;
        }
        h
    };
    let (hx, hy) = (hist(x), hist(y));
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    // pool adjacent bins until each pooled bin has at least 10 combined observations
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for k in 0..=max {
        acc.0 += hx[k];
        acc.1 += hy[k];
        if acc.0 + acc.1 >= 10.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let mut stat = 0.0;
    for &(a, b) in &bins {
        let total = a + b;
        let (ea, eb) = (total * nx / (nx + ny), total * ny / (nx + ny));
        stat += (a - ea).powi(2) / ea + (b - eb).powi(2) / eb;
    }
    1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat)
}

/// Feature counts of a chain with no observed ratings, thinned.
pub fn empty_data_chain_ks(m: usize, n: usize, lambda: f64, rate: NewFeatureRate, draws: usize, thin: usize, seed: u64) -> Vec<usize> {
    let ratings = RatingMatrix::from_triples(m, n, &[]).unwrap();
    let hyper = Hyperparams { lambda, ..Hyperparams::default() };
    let params = ModelParams { b0: 2.5, theta: vec![], rho: vec![0.0; n], tau: 0.5 };
    let mut state =
        ChainState::new(&ratings, FeatureAllocation::empty(m, n), params, 0.1, hyper, derive(seed, Purpose::Chain, 0))
            .unwrap();
    state.new_feature_rate = rate;
    for _ in 0..200 {
        state.sweep(&ratings);
    }
    (0..draws)
        .map(|_| {
            for _ in 0..thin {
                state.sweep(&ratings);
            }
            state.alloc.k()
        })
        .collect()
}
