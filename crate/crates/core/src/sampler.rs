//! Single-chain MCMC for the double feature allocation model.
//!
//! A sweep runs, in order: the row updates of `A` (Gibbs for shared
//! features, reversible jump for singular ones), removal of empty
//! features, Gibbs updates of every `B` entry, `pB`, the latent scores,
//! `tau`, the feature effects and the item effects. `A` and `B` are
//! updated against the ordinal likelihood with the latent scores
//! integrated out; the scores are redrawn right after, before the
//! conjugate updates that condition on them.
//!
//! The state caches the probit mean and ordinal log-likelihood of every
//! observed entry. The `A` and `B` kernels patch the entries they touch;
//! the continuous updates recompute the log-likelihoods in one pass.

use crate::error::{Error, Result};
use crate::ibp::{self, poisson};
use crate::mf::{self, CvGrid, MfParams};
use crate::model::{
    log_category_prob, probit_mean_unchecked, BinaryMatrix, FeatureAllocation, Hyperparams, LatentScores,
    McmcDraw, ModelParams, PbPrior, RhoPrior,
};
use crate::normal;
use crate::ratings::RatingMatrix;
use crate::rng::{derive, ChainRng, Purpose};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

/// How the chain is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `A` from the IBP prior, `B` Bernoulli(pB), `theta` from its prior, `rho = 0`.
    Prior,
    /// Binarized matrix factorization: feature count from the MF rank (chosen
    /// by cross validation when `rank` is `None`), user/item membership where
    /// the absolute factor loading exceeds that factor's median.
    Mf { rank: Option<usize>, params: MfParams, grid: CvGrid, folds: usize },
}

impl Init {
    pub fn mf_default() -> Self {
        Init::Mf { rank: None, params: MfParams::default(), grid: CvGrid::default(), folds: 5 }
    }
}

/// Divisor of `lambda` in the Poisson rate of the reversible-jump birth proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewFeatureRate {
    /// `lambda / m`, the rate under which the IBP prior is stationary.
    PerUser,
    /// `lambda / n`.
    PerItem,
}

impl NewFeatureRate {
    pub fn rate(self, lambda: f64, users: usize, items: usize) -> f64 {
        match self {
            NewFeatureRate::PerUser => lambda / users.max(1) as f64,
            NewFeatureRate::PerItem => lambda / items.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub init: Init,
    pub new_feature_rate: NewFeatureRate,
}

impl ChainConfig {
    /// Defaults: half the iterations as burn-in, every 5th sweep stored.
    pub fn new(iterations: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burn_in: iterations / 2,
            thin: 5,
            seed,
            hyper: Hyperparams::default(),
            init: Init::Prior,
            new_feature_rate: NewFeatureRate::PerUser,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::domain("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::domain(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::domain("thin must be at least 1"));
        }
        self.hyper.validate()
    }

    /// Number of draws `run_chain` will store.
    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub rj_proposals: u64,
    pub rj_accepted: u64,
    /// Items left untouched by the last flat-prior `rho` update for lack of data.
    pub uninformed_items: Vec<usize>,
}

/// Outcome of one reversible-jump proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOutcome {
    pub log_alpha: f64,
    pub accepted: bool,
    pub dropped: usize,
    pub born: usize,
}

/// `min(1, alpha)` from `ln alpha`.
pub fn acceptance_probability(log_alpha: f64) -> f64 {
    log_alpha.min(0.0).exp()
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub alloc: FeatureAllocation,
    pub params: ModelParams,
    pub z: LatentScores,
    pub p_b: f64,
    pub iteration: usize,
    pub rng: ChainRng,
    pub hyper: Hyperparams,
    pub new_feature_rate: NewFeatureRate,
    pub diagnostics: ChainDiagnostics,
    /// Probit mean of every observed entry.
    eta: Vec<f64>,
    /// Log-likelihood of every observed entry at its cached mean.
    ll: Vec<f64>,
    /// Users per feature.
    counts: Vec<usize>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ChainState {
    /// Builds a state from explicit parameters and draws fresh latent scores.
    pub fn new(
        ratings: &RatingMatrix,
        alloc: FeatureAllocation,
        params: ModelParams,
        p_b: f64,
        hyper: Hyperparams,
        rng: ChainRng,
    ) -> Result<Self> {
        if alloc.users() != ratings.users() || alloc.items() != ratings.items() {
            return Err(Error::Contract(format!(
                "allocation is {}x{} but ratings are {}x{}",
                alloc.users(),
                alloc.items(),
                ratings.users(),
                ratings.items()
            )));
        }
        params.check(&alloc)?;
        let mut state = ChainState {
            alloc,
            params,
            z: LatentScores(vec![0.0; ratings.len()]),
            p_b,
            iteration: 0,
            rng,
            hyper,
            new_feature_rate: NewFeatureRate::PerUser,
            diagnostics: ChainDiagnostics::default(),
            eta: Vec::new(),
            ll: Vec::new(),
            counts: Vec::new(),
        };
        state.refresh_caches(ratings);
        state.sample_z(ratings);
        Ok(state)
    }

    /// Initial state per `config.init`, on stream 0.
    pub fn initialize(ratings: &RatingMatrix, config: &ChainConfig) -> Result<Self> {
        Self::initialize_stream(ratings, config, 0)
    }

    /// Initial state per `config.init`, drawing randomness from seed stream `stream`.
    pub fn initialize_stream(ratings: &RatingMatrix, config: &ChainConfig, stream: u32) -> Result<Self> {
        config.validate()?;
        let hyper = config.hyper;
        let (m, n) = (ratings.users(), ratings.items());
        let mut init_rng = derive(config.seed, Purpose::Initialize, stream);
        let p_b = hyper.pb.initial();
        let alloc = match &config.init {
            Init::Prior => {
                let a = ibp::sample_prior(m, hyper.lambda, &mut init_rng)?.a;
                let b_cols =
                    (0..a.cols()).map(|_| (0..n).map(|_| init_rng.random::<f64>() < p_b).collect()).collect();
                FeatureAllocation::new(a, BinaryMatrix::from_columns(n, b_cols)?)?
            }
            Init::Mf { rank, params, grid, folds } => {
                let rank = match rank {
                    Some(k) => *k,
                    None => mf::cv_select_rank(ratings, grid, *params, *folds, &mut init_rng)?.rank,
                };
                let model = mf::train_mf(ratings, MfParams { rank, ..*params }, &mut init_rng)?;
                binarize_factors(&model)
            }
        };
        let theta_prior = Normal::new(0.0, hyper.theta_sd).map_err(|e| Error::domain(e.to_string()))?;
        let theta = match config.init {
            Init::Prior => (0..alloc.k()).map(|_| theta_prior.sample(&mut init_rng)).collect(),
            Init::Mf { .. } => vec![0.0; alloc.k()],
        };
        let tau = if hyper.tau_shape > 1.0 { (hyper.tau_scale / (hyper.tau_shape - 1.0)).sqrt() } else { 1.0 };
        let params = ModelParams { b0: hyper.b0, theta, rho: vec![0.0; n], tau };
        let mut state = ChainState::new(ratings, alloc, params, p_b, hyper, derive(config.seed, Purpose::Chain, stream))?;
        state.new_feature_rate = config.new_feature_rate;
        state.compact();
        Ok(state)
    }

    /// Recomputes the cached probit means and feature sizes from scratch.
    pub fn refresh_caches(&mut self, ratings: &RatingMatrix) {
        self.eta = ratings
            .entries()
            .iter()
            .map(|e| probit_mean_unchecked(e.user, e.item, &self.alloc, &self.params))
            .collect();
        self.refresh_log_lik(ratings);
        self.counts = (0..self.alloc.k()).map(|k| self.alloc.a().column_sum(k)).collect();
    }

    fn refresh_log_lik(&mut self, ratings: &RatingMatrix) {
        let tau = self.params.tau;
        self.ll = ratings.entries().iter().zip(&self.eta).map(|(e, &m)| log_category_prob(m, tau, e.rating)).collect();
    }

    #[inline]
    fn shift_eta(&mut self, e: usize, delta: f64, ratings: &RatingMatrix) {
        self.eta[e] += delta;
        self.ll[e] = log_category_prob(self.eta[e], self.params.tau, ratings.entry(e).rating);
    }

    /// Whether the caches agree with a fresh recomputation (to 1e-9).
    pub fn caches_consistent(&self, ratings: &RatingMatrix) -> bool {
        let eta_ok = ratings.entries().iter().zip(&self.eta).all(|(e, &cached)| {
            (probit_mean_unchecked(e.user, e.item, &self.alloc, &self.params) - cached).abs() < 1e-9
        });
        let counts_ok = self.counts.len() == self.alloc.k()
            && (0..self.alloc.k()).all(|k| self.counts[k] == self.alloc.a().column_sum(k));
        let tau = self.params.tau;
        let ll_ok = ratings.entries().iter().zip(self.eta.iter().zip(&self.ll)).all(|(e, (&m, &l))| {
            (log_category_prob(m, tau, e.rating) - l).abs() < 1e-9
        });
        eta_ok && ll_ok && counts_ok
    }

    /// Cached probit mean of entry `idx`.
    #[inline]
    pub fn entry_mean(&self, idx: usize) -> f64 {
        self.eta[idx]
    }

    pub fn draw(&self) -> McmcDraw {
        McmcDraw { iteration: self.iteration, alloc: self.alloc.clone(), params: self.params.clone(), p_b: self.p_b }
    }

    /// Ordinal log-likelihood of user `u`'s ratings from the cache.
    pub fn row_log_lik(&self, u: usize, ratings: &RatingMatrix) -> f64 {
        ratings.row(u).iter().map(|&e| self.ll[e]).sum()
    }

    /// Change in user `u`'s log-likelihood from setting `A_uk` to 1 versus 0.
    fn row_toggle_log_ratio(&self, u: usize, k: usize, ratings: &RatingMatrix) -> f64 {
        let theta = self.params.theta[k];
        let current = self.alloc.user_in(u, k);
        let tau = self.params.tau;
        let mut diff = 0.0;
        for &e in ratings.row(u) {
            let entry = ratings.entry(e);
            if !self.alloc.item_in(entry.item, k) {
                continue;
            }
            diff += if current {
                self.ll[e] - log_category_prob(self.eta[e] - theta, tau, entry.rating)
            } else {
                log_category_prob(self.eta[e] + theta, tau, entry.rating) - self.ll[e]
            };
        }
        diff
    }

    /// Full-conditional probability that `A_uk = 1` for a shared feature
    /// (`m_{-u,k} > 0`); `None` for singular features.
    pub fn user_inclusion_probability(&self, u: usize, k: usize, ratings: &RatingMatrix) -> Option<f64> {
        let others = self.counts[k] - self.alloc.user_in(u, k) as usize;
        if others == 0 {
            return None;
        }
        let prior = ibp::conditional_inclusion_prob(others, self.alloc.users()).ok()?;
        let log_odds = prior.ln() - (-prior).ln_1p() + self.row_toggle_log_ratio(u, k, ratings);
        Some(sigmoid(log_odds))
    }

    fn set_user_membership(&mut self, u: usize, k: usize, value: bool, ratings: &RatingMatrix) {
        if self.alloc.user_in(u, k) == value {
            return;
        }
        self.alloc.set_user(u, k, value);
        let delta = if value { self.params.theta[k] } else { -self.params.theta[k] };
        if value {
            self.counts[k] += 1;
        } else {
            self.counts[k] -= 1;
        }
        for &e in ratings.row(u) {
            if self.alloc.item_in(ratings.entry(e).item, k) {
                self.shift_eta(e, delta, ratings);
            }
        }
    }

    /// Row update of `A_u·`: Gibbs for shared features, then one
    /// reversible-jump proposal replacing the user's singular features.
    pub fn update_row_a(&mut self, u: usize, ratings: &RatingMatrix) -> JumpOutcome {
        for k in 0..self.alloc.k() {
            if let Some(p) = self.user_inclusion_probability(u, k, ratings) {
                let value = self.rng.random::<f64>() < p;
                self.set_user_membership(u, k, value, ratings);
            }
        }
        self.jump_singular(u, ratings)
    }

    /// Drops every singular feature of user `u` and proposes
    /// `Poisson(rate)` fresh ones with prior-drawn `theta` and `B` columns.
    /// Prior and proposal terms cancel, so `alpha` is the likelihood ratio.
    pub fn jump_singular(&mut self, u: usize, ratings: &RatingMatrix) -> JumpOutcome {
        let (m, n) = (self.alloc.users(), self.alloc.items());
        let singular: Vec<usize> =
            (0..self.alloc.k()).filter(|&k| self.counts[k] - self.alloc.user_in(u, k) as usize == 0).collect();
        let rate = self.new_feature_rate.rate(self.hyper.lambda, m, n);
        let born = poisson(rate, &mut self.rng);
        let theta_prior = Normal::new(0.0, self.hyper.theta_sd).expect("validated theta sd");
        let new_theta: Vec<f64> = (0..born).map(|_| theta_prior.sample(&mut self.rng)).collect();
        let new_items: Vec<Vec<bool>> =
            (0..born).map(|_| (0..n).map(|_| self.rng.random::<f64>() < self.p_b).collect()).collect();
        self.diagnostics.rj_proposals += 1;

        let tau = self.params.tau;
        let row = ratings.row(u);
        let mut proposed = Vec::with_capacity(row.len());
        let mut log_alpha = 0.0;
        for &e in row {
            let entry = ratings.entry(e);
            let i = entry.item;
            let mut mean = self.eta[e];
            for &k in &singular {
                if self.alloc.user_in(u, k) && self.alloc.item_in(i, k) {
                    mean -= self.params.theta[k];
                }
            }
            for (t, items) in new_theta.iter().zip(&new_items) {
                if items[i] {
                    mean += t;
                }
            }
            let ll = log_category_prob(mean, tau, entry.rating);
            log_alpha += ll - self.ll[e];
            proposed.push((mean, ll));
        }
        let accepted = self.rng.random::<f64>().ln() < log_alpha;
        if accepted {
            self.diagnostics.rj_accepted += 1;
            for &k in singular.iter().rev() {
                self.alloc.remove_feature(k);
                self.params.theta.remove(k);
                self.counts.remove(k);
            }
            for (t, items) in new_theta.into_iter().zip(new_items) {
                let mut users = vec![false; m];
                users[u] = true;
                self.alloc.push_feature(users, items);
                self.params.theta.push(t);
                self.counts.push(1);
            }
            for (&e, (mean, ll)) in row.iter().zip(proposed) {
                self.eta[e] = mean;
                self.ll[e] = ll;
            }
        }
        JumpOutcome { log_alpha, accepted, dropped: if accepted { singular.len() } else { 0 }, born }
    }

    /// Removes features with no users.
    pub fn compact(&mut self) {
        for k in self.alloc.empty_features().into_iter().rev() {
            self.alloc.remove_feature(k);
            self.params.theta.remove(k);
            self.counts.remove(k);
        }
    }

    /// Full-conditional probability that `B_ik = 1`.
    pub fn item_inclusion_probability(&self, i: usize, k: usize, ratings: &RatingMatrix) -> f64 {
        let theta = self.params.theta[k];
        let current = self.alloc.item_in(i, k);
        let tau = self.params.tau;
        let mut diff = 0.0;
        for &e in ratings.col(i) {
            let entry = ratings.entry(e);
            if !self.alloc.user_in(entry.user, k) {
                continue;
            }
            diff += if current {
                self.ll[e] - log_category_prob(self.eta[e] - theta, tau, entry.rating)
            } else {
                log_category_prob(self.eta[e] + theta, tau, entry.rating) - self.ll[e]
            };
        }
        sigmoid(self.p_b.ln() - (-self.p_b).ln_1p() + diff)
    }

    pub fn update_b_entry(&mut self, i: usize, k: usize, ratings: &RatingMatrix) {
        let p = self.item_inclusion_probability(i, k, ratings);
        let value = self.rng.random::<f64>() < p;
        if value == self.alloc.item_in(i, k) {
            return;
        }
        self.alloc.set_item(i, k, value);
        let delta = if value { self.params.theta[k] } else { -self.params.theta[k] };
        for &e in ratings.col(i) {
            if self.alloc.user_in(ratings.entry(e).user, k) {
                self.shift_eta(e, delta, ratings);
            }
        }
    }

    /// Beta posterior parameters for `pB`, or `None` when `pB` is fixed.
    pub fn pb_posterior(&self) -> Option<(f64, f64)> {
        match self.hyper.pb {
            PbPrior::Fixed(_) => None,
            PbPrior::Beta { a, b } => {
                let ones = self.alloc.b().count_ones() as f64;
                let cells = (self.alloc.items() * self.alloc.k()) as f64;
                Some((a + ones, b + cells - ones))
            }
        }
    }

    pub fn update_pb(&mut self) {
        if let Some((a, b)) = self.pb_posterior() {
            let d = Beta::new(a, b).expect("positive beta parameters");
            // Keep pB strictly inside (0, 1) so its log-odds stay finite.
            self.p_b = d.sample(&mut self.rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        }
    }

    /// Redraws every latent score from its truncated normal full conditional.
    pub fn sample_z(&mut self, ratings: &RatingMatrix) {
        let tau = self.params.tau;
        for (idx, entry) in ratings.entries().iter().enumerate() {
            let (lo, hi) = entry.rating.bracket();
            self.z.0[idx] = normal::sample_truncated(self.eta[idx], tau, lo, hi, &mut self.rng);
        }
    }

    /// Inverse-gamma posterior `(shape, scale)` of `tau²`.
    pub fn tau_posterior(&self, ratings: &RatingMatrix) -> (f64, f64) {
        let sse: f64 = self.z.0.iter().zip(&self.eta).map(|(z, m)| (z - m) * (z - m)).sum();
        (self.hyper.tau_shape + ratings.len() as f64 / 2.0, self.hyper.tau_scale + 0.5 * sse)
    }

    pub fn update_tau(&mut self, ratings: &RatingMatrix) {
        self.draw_tau(ratings);
        self.refresh_log_lik(ratings);
    }

    fn draw_tau(&mut self, ratings: &RatingMatrix) {
        let (shape, scale) = self.tau_posterior(ratings);
        let precision = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters").sample(&mut self.rng);
        self.params.tau = (1.0 / precision).sqrt();
    }

    /// Normal posterior `(mean, variance)` of `theta_k` given everything else.
    pub fn theta_posterior(&self, k: usize, ratings: &RatingMatrix) -> (f64, f64) {
        let theta = self.params.theta[k];
        let tau2 = self.params.tau * self.params.tau;
        let mut count = 0usize;
        let mut resid = 0.0;
        for u in 0..self.alloc.users() {
            if !self.alloc.user_in(u, k) {
                continue;
            }
            for &e in ratings.row(u) {
                if self.alloc.item_in(ratings.entry(e).item, k) {
                    count += 1;
                    resid += self.z.0[e] - (self.eta[e] - theta);
                }
            }
        }
        let sd0 = self.hyper.theta_sd;
        let precision = 1.0 / (sd0 * sd0) + count as f64 / tau2;
        ((resid / tau2) / precision, 1.0 / precision)
    }

    /// Sequential conjugate updates of every feature effect.
    pub fn update_theta(&mut self, ratings: &RatingMatrix) {
        self.draw_theta(ratings);
        self.refresh_log_lik(ratings);
    }

    fn draw_theta(&mut self, ratings: &RatingMatrix) {
        for k in 0..self.alloc.k() {
            let (mean, var) = self.theta_posterior(k, ratings);
            let fresh = mean + var.sqrt() * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
            let delta = fresh - self.params.theta[k];
            self.params.theta[k] = fresh;
            for u in 0..self.alloc.users() {
                if !self.alloc.user_in(u, k) {
                    continue;
                }
                for &e in ratings.row(u) {
                    if self.alloc.item_in(ratings.entry(e).item, k) {
                        self.eta[e] += delta;
                    }
                }
            }
        }
    }

    /// Normal posterior `(mean, variance)` of `rho_i`; `None` when the prior
    /// is flat and the item has no observations, or `rho` is switched off.
    pub fn rho_posterior(&self, i: usize, ratings: &RatingMatrix) -> Option<(f64, f64)> {
        let tau2 = self.params.tau * self.params.tau;
        let rho = self.params.rho[i];
        let col = ratings.col(i);
        let resid: f64 = col.iter().map(|&e| self.z.0[e] - (self.eta[e] - rho)).sum();
        let count = col.len() as f64;
        match self.hyper.rho {
            RhoPrior::Off => None,
            RhoPrior::Flat if col.is_empty() => None,
            RhoPrior::Flat => Some((resid / count, tau2 / count)),
            RhoPrior::Normal { mean, sd } => {
                let precision = 1.0 / (sd * sd) + count / tau2;
                Some(((mean / (sd * sd) + resid / tau2) / precision, 1.0 / precision))
            }
        }
    }

    pub fn update_rho(&mut self, ratings: &RatingMatrix) {
        self.draw_rho(ratings);
        self.refresh_log_lik(ratings);
    }

    fn draw_rho(&mut self, ratings: &RatingMatrix) {
        self.diagnostics.uninformed_items.clear();
        if self.hyper.rho == RhoPrior::Off {
            return;
        }
        for i in 0..self.alloc.items() {
            let Some((mean, var)) = self.rho_posterior(i, ratings) else {
                self.diagnostics.uninformed_items.push(i);
                continue;
            };
            let fresh = mean + var.sqrt() * self.rng.sample::<f64, _>(rand_distr::StandardNormal);
            let delta = fresh - self.params.rho[i];
            self.params.rho[i] = fresh;
            for &e in ratings.col(i) {
                self.eta[e] += delta;
            }
        }
    }

    /// One full pass over all kernels.
    pub fn sweep(&mut self, ratings: &RatingMatrix) {
        for u in 0..self.alloc.users() {
            self.update_row_a(u, ratings);
        }
        self.compact();
        for k in 0..self.alloc.k() {
            for i in 0..self.alloc.items() {
                self.update_b_entry(i, k, ratings);
            }
        }
        self.update_pb();
        self.sample_z(ratings);
        self.draw_tau(ratings);
        self.draw_theta(ratings);
        self.draw_rho(ratings);
        self.refresh_log_lik(ratings);
        self.iteration += 1;
    }
}

/// Binarizes MF factors: membership where |loading| exceeds the factor's median.
fn binarize_factors(model: &mf::MfModel) -> FeatureAllocation {
    let threshold = |values: Vec<f64>| -> Vec<bool> {
        let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
        values.iter().map(|v| v.abs() > median).collect()
    };
    let mut alloc = FeatureAllocation::empty(model.m, model.n);
    for f in 0..model.k {
        let users = threshold((0..model.m).map(|u| model.p[u * model.k + f]).collect());
        let items = threshold((0..model.n).map(|i| model.q[i * model.k + f]).collect());
        alloc.push_feature(users, items);
    }
    alloc
}

/// Runs `config.iterations` sweeps and stores every `thin`-th state after burn-in.
pub fn run_chain(ratings: &RatingMatrix, config: &ChainConfig) -> Result<Vec<McmcDraw>> {
    run_chain_stream(ratings, config, 0)
}

/// [`run_chain`] on seed stream `stream`; independent chains sharing a
/// master seed use distinct streams.
pub fn run_chain_stream(ratings: &RatingMatrix, config: &ChainConfig, stream: u32) -> Result<Vec<McmcDraw>> {
    if ratings.is_empty() {
        return Err(Error::domain("cannot run a chain on an empty rating matrix"));
    }
    let mut state = ChainState::initialize_stream(ratings, config, stream)?;
    let mut draws = Vec::with_capacity(config.stored_draws());
    for it in 1..=config.iterations {
        state.sweep(ratings);
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            draws.push(state.draw());
        }
        if it % 1000 == 0 {
            log::debug!(
                "iteration {it}: K={} tau={:.4} pB={:.3} rj {}/{}",
                state.alloc.k(),
                state.params.tau,
                state.p_b,
                state.diagnostics.rj_accepted,
                state.diagnostics.rj_proposals
            );
        }
    }
    Ok(draws)
}
