//! Indian buffet process prior on the user-feature matrix.

use crate::error::{Error, Result};
use crate::model::BinaryMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

/// A draw from the IBP: an m x K binary matrix without empty columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IbpSample {
    pub a: BinaryMatrix,
}

impl IbpSample {
    pub fn k(&self) -> usize {
        self.a.cols()
    }
}

/// `H_m = sum_{u=1}^m 1/u`.
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|u| 1.0 / u as f64).sum()
}

/// Poisson draw that tolerates a zero rate.
pub(crate) fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let d = Poisson::new(rate).expect("positive finite rate");
    d.sample(rng) as usize
}

/// Sequential ("buffet") construction: user `u` joins existing feature `k`
/// with probability `m_{u-1,k}/u`, then opens `Poisson(lambda/u)` new
/// features. Columns are finally shuffled uniformly.
pub fn sample_prior<R: Rng + ?Sized>(m: usize, lambda: f64, rng: &mut R) -> Result<IbpSample> {
    if m == 0 {
        return Err(Error::domain("IBP needs at least one user"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("IBP concentration must be positive, got {lambda}")));
    }
    let mut columns: Vec<Vec<bool>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for u in 0..m {
        let denom = (u + 1) as f64;
        for (col, count) in columns.iter_mut().zip(counts.iter_mut()) {
            if rng.random::<f64>() < *count as f64 / denom {
                col[u] = true;
                *count += 1;
            }
        }
        let fresh = poisson(lambda / denom, rng);
        for _ in 0..fresh {
            let mut col = vec![false; m];
            col[u] = true;
            columns.push(col);
            counts.push(1);
        }
    }
    columns.shuffle(rng);
    Ok(IbpSample { a: BinaryMatrix::from_columns(m, columns)? })
}

/// Prior probability that a user joins a feature held by `col_count_excl`
/// of the other users: `m_{-u,k} / m`.
pub fn conditional_inclusion_prob(col_count_excl: usize, m: usize) -> Result<f64> {
    if m == 0 || col_count_excl >= m {
        return Err(Error::domain(format!(
            "column count {col_count_excl} must be below user count {m}"
        )));
    }
    Ok(col_count_excl as f64 / m as f64)
}

/// `ln p(A) = K ln(lambda) - lambda H_m - ln K! + sum_k ln[Γ(m_k) Γ(m - m_k + 1) / Γ(m + 1)]`.
pub fn log_prior(a: &BinaryMatrix, lambda: f64) -> Result<f64> {
    let m = a.rows();
    let k = a.cols();
    let ln_m_fact = ln_gamma(m as f64 + 1.0);
    let mut total = k as f64 * lambda.ln() - lambda * harmonic(m) - ln_gamma(k as f64 + 1.0);
    for c in 0..k {
        let mk = a.column_sum(c);
        if mk == 0 {
            return Err(Error::Contract(format!("feature {c} has no users")));
        }
        total += ln_gamma(mk as f64) + ln_gamma((m - mk) as f64 + 1.0) - ln_m_fact;
    }
    Ok(total)
}

/// `E[K] = lambda * H_m`.
pub fn expected_features(m: usize, lambda: f64) -> f64 {
    lambda * harmonic(m)
}
