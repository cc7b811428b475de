//! Synthetic data generated from the model, with the truth retained.

use crate::draws::fmt_f64;
use crate::error::{Error, Result};
use crate::ibp;
use crate::model::{probit_mean_unchecked, rating_from_score, BinaryMatrix, FeatureAllocation, ModelParams};
use crate::ratings::{Entry, RatingMatrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub users: usize,
    pub items: usize,
    pub lambda: f64,
    pub p_b: f64,
    pub theta_sd: f64,
    pub tau: f64,
    pub b0: f64,
    /// SD of the item effects; `None` leaves them out.
    pub rho_sd: Option<f64>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { users: 100, items: 150, lambda: 3.0, p_b: 0.2, theta_sd: 2.0, tau: 0.25, b0: 2.5, rho_sd: None }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 {
            return Err(Error::domain("simulation needs at least one user and one item"));
        }
        if !(0.0..=1.0).contains(&self.p_b) {
            return Err(Error::domain(format!("pB must lie in [0, 1], got {}", self.p_b)));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.lambda) || !positive(self.theta_sd) || !positive(self.tau) {
            return Err(Error::domain("lambda, theta sd and tau must be positive"));
        }
        if let Some(sd) = self.rho_sd {
            if !positive(sd) {
                return Err(Error::domain("rho sd must be positive"));
            }
        }
        Ok(())
    }
}

/// Everything used to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub alloc: FeatureAllocation,
    /// Effects as the model sees them (`rho` all zero when omitted).
    pub params: ModelParams,
    pub has_rho: bool,
    /// Latent scores, row-major `m x n`.
    pub z: Vec<f64>,
}

/// Draws `A ~ IBP`, `B ~ Bernoulli(pB)`, `theta`, optional `rho`, then a
/// latent score and rating for every user-item pair.
pub fn generate_dataset<R: Rng + ?Sized>(sim: &SimParams, rng: &mut R) -> Result<(SimTruth, RatingMatrix)> {
    sim.validate()?;
    let (m, n) = (sim.users, sim.items);
    let a = ibp::sample_prior(m, sim.lambda, rng)?.a;
    let k = a.cols();
    let b_cols = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() < sim.p_b).collect()).collect();
    let alloc = FeatureAllocation::new(a, BinaryMatrix::from_columns(n, b_cols)?)?;
    let theta_prior = Normal::new(0.0, sim.theta_sd).map_err(|e| Error::domain(e.to_string()))?;
    let theta = (0..k).map(|_| theta_prior.sample(rng)).collect();
    let rho = match sim.rho_sd {
        Some(sd) => {
            let d = Normal::new(0.0, sd).map_err(|e| Error::domain(e.to_string()))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        None => vec![0.0; n],
    };
    let params = ModelParams { b0: sim.b0, theta, rho, tau: sim.tau };
    let mut z = Vec::with_capacity(m * n);
    let mut entries = Vec::with_capacity(m * n);
    for u in 0..m {
        for i in 0..n {
            let mean = probit_mean_unchecked(u, i, &alloc, &params);
            let score = mean + sim.tau * rng.sample::<f64, _>(rand_distr::StandardNormal);
            z.push(score);
            entries.push(Entry { user: u, item: i, rating: rating_from_score(score)? });
        }
    }
    let ratings = RatingMatrix::new(m, n, entries)?;
    Ok((SimTruth { alloc, params, has_rho: sim.rho_sd.is_some(), z }, ratings))
}

/// Writes the truth in the same bitstring/decimal conventions as draw files.
pub fn write_truth<W: Write>(mut out: W, truth: &SimTruth) -> Result<()> {
    let list = |v: &[f64]| {
        if v.is_empty() {
            "-".to_string()
        } else {
            v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
        }
    };
    let bits = |m: &BinaryMatrix| if m.cols() == 0 { "-".to_string() } else { m.to_row_major_bits() };
    writeln!(
        out,
        "# dfa-truth v1 m={} n={} K={} b0={} tau={}",
        truth.alloc.users(),
        truth.alloc.items(),
        truth.alloc.k(),
        fmt_f64(truth.params.b0),
        fmt_f64(truth.params.tau)
    )?;
    writeln!(out, "A\t{}", bits(truth.alloc.a()))?;
    writeln!(out, "B\t{}", bits(truth.alloc.b()))?;
    writeln!(out, "theta\t{}", list(&truth.params.theta))?;
    writeln!(out, "rho\t{}", if truth.has_rho { list(&truth.params.rho) } else { "-".to_string() })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoldoutMode {
    /// `floor(f N)` entries chosen uniformly at random.
    GlobalFraction(f64),
    /// One rated item per user.
    PerUserOneTest,
}

/// Splits observed entries into disjoint train and test matrices of the same shape.
pub fn holdout_split<R: Rng + ?Sized>(
    ratings: &RatingMatrix,
    mode: HoldoutMode,
    rng: &mut R,
) -> Result<(RatingMatrix, RatingMatrix)> {
    let mut in_test = vec![false; ratings.len()];
    match mode {
        HoldoutMode::GlobalFraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::domain(format!("holdout fraction must lie in (0, 1), got {f}")));
            }
            let mut order: Vec<usize> = (0..ratings.len()).collect();
            order.shuffle(rng);
            let count = (f * ratings.len() as f64).floor() as usize;
            for &e in &order[..count] {
                in_test[e] = true;
            }
        }
        HoldoutMode::PerUserOneTest => {
            for u in 0..ratings.users() {
                let row = ratings.row(u);
                if row.len() < 2 {
                    return Err(Error::domain(format!(
                        "user {} has {} rating(s); holding one out needs at least 2",
                        u + 1,
                        row.len()
                    )));
                }
                in_test[row[rng.random_range(0..row.len())]] = true;
            }
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (e, &held) in ratings.entries().iter().zip(&in_test) {
        if held {
            test.push(*e);
        } else {
            train.push(*e);
        }
    }
    Ok((
        RatingMatrix::new(ratings.users(), ratings.items(), train)?,
        RatingMatrix::new(ratings.users(), ratings.items(), test)?,
    ))
}
