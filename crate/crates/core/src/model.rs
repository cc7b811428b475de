//! Model state types and the ordinal-probit link.

use crate::error::{Error, Result};
use crate::normal;
use crate::ratings::{Rating, RatingMatrix};

/// Column-major binary matrix with a fixed row count and a variable
/// number of columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    columns: Vec<Vec<bool>>,
}

impl BinaryMatrix {
    pub fn new(rows: usize) -> Self {
        BinaryMatrix { rows, columns: Vec::new() }
    }

    pub fn from_columns(rows: usize, columns: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(Error::Contract(format!(
                "column {bad} has {} rows, expected {rows}",
                columns[bad].len()
            )));
        }
        Ok(BinaryMatrix { rows, columns })
    }

    /// Parses a row-major string of `0`/`1` characters.
    pub fn from_row_major_bits(rows: usize, cols: usize, bits: &str) -> Result<Self> {
        let bytes = bits.as_bytes();
        if bytes.len() != rows * cols {
            return Err(Error::domain(format!(
                "bitstring has {} characters, expected {rows}x{cols}",
                bytes.len()
            )));
        }
        let mut columns = vec![vec![false; rows]; cols];
        for r in 0..rows {
            for (c, column) in columns.iter_mut().enumerate() {
                column[r] = match bytes[r * cols + c] {
                    b'0' => false,
                    b'1' => true,
                    other => {
                        return Err(Error::domain(format!("invalid bit character {:?}", other as char)))
                    }
                };
            }
        }
        Ok(BinaryMatrix { rows, columns })
    }

    pub fn to_row_major_bits(&self) -> String {
        let mut s = String::with_capacity(self.rows * self.columns.len());
        for r in 0..self.rows {
            for c in &self.columns {
                s.push(if c[r] { '1' } else { '0' });
            }
        }
        s
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.columns[c][r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.columns[c][r] = value;
    }

    #[inline]
    pub fn column(&self, c: usize) -> &[bool] {
        &self.columns[c]
    }

    pub fn columns(&self) -> &[Vec<bool>] {
        &self.columns
    }

    pub fn column_sum(&self, c: usize) -> usize {
        self.columns[c].iter().filter(|&&x| x).count()
    }

    pub fn count_ones(&self) -> usize {
        (0..self.cols()).map(|c| self.column_sum(c)).sum()
    }

    pub fn push_column(&mut self, column: Vec<bool>) {
        assert_eq!(column.len(), self.rows, "column length mismatch");
        self.columns.push(column);
    }

    pub fn remove_column(&mut self, c: usize) -> Vec<bool> {
        self.columns.remove(c)
    }

    /// Reorders columns so that new column `j` is old column `order[j]`.
    pub fn permute_columns(&mut self, order: &[usize]) {
        let old = std::mem::take(&mut self.columns);
        self.columns = order.iter().map(|&c| old[c].clone()).collect();
    }

    /// Appends all-zero columns until there are `cols` of them.
    pub fn padded(&self, cols: usize) -> BinaryMatrix {
        let mut out = self.clone();
        while out.cols() < cols {
            out.columns.push(vec![false; self.rows]);
        }
        out
    }
}

/// Paired user-feature (`A`, m x K) and item-feature (`B`, n x K) matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureAllocation {
    a: BinaryMatrix,
    b: BinaryMatrix,
}

impl FeatureAllocation {
    pub fn empty(m: usize, n: usize) -> Self {
        FeatureAllocation { a: BinaryMatrix::new(m), b: BinaryMatrix::new(n) }
    }

    pub fn new(a: BinaryMatrix, b: BinaryMatrix) -> Result<Self> {
        if a.cols() != b.cols() {
            return Err(Error::Contract(format!(
                "A has {} columns but B has {}",
                a.cols(),
                b.cols()
            )));
        }
        Ok(FeatureAllocation { a, b })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.a.cols()
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.a.rows()
    }

    #[inline]
    pub fn items(&self) -> usize {
        self.b.rows()
    }

    #[inline]
    pub fn a(&self) -> &BinaryMatrix {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &BinaryMatrix {
        &self.b
    }

    #[inline]
    pub fn user_in(&self, u: usize, k: usize) -> bool {
        self.a.get(u, k)
    }

    #[inline]
    pub fn item_in(&self, i: usize, k: usize) -> bool {
        self.b.get(i, k)
    }

    #[inline]
    pub fn set_user(&mut self, u: usize, k: usize, value: bool) {
        self.a.set(u, k, value);
    }

    #[inline]
    pub fn set_item(&mut self, i: usize, k: usize, value: bool) {
        self.b.set(i, k, value);
    }

    pub fn push_feature(&mut self, users: Vec<bool>, items: Vec<bool>) {
        self.a.push_column(users);
        self.b.push_column(items);
    }

    pub fn remove_feature(&mut self, k: usize) {
        self.a.remove_column(k);
        self.b.remove_column(k);
    }

    pub fn permute_features(&mut self, order: &[usize]) {
        self.a.permute_columns(order);
        self.b.permute_columns(order);
    }

    /// Features shared by user `u` and item `i`.
    pub fn shared_features(&self, u: usize, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(move |&k| self.a.get(u, k) && self.b.get(i, k))
    }

    /// Indexes of features with an empty user column, ascending.
    pub fn empty_features(&self) -> Vec<usize> {
        (0..self.k()).filter(|&k| self.a.column(k).iter().all(|&x| !x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub b0: f64,
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub tau: f64,
}

impl ModelParams {
    pub fn check(&self, alloc: &FeatureAllocation) -> Result<()> {
        if self.theta.len() != alloc.k() {
            return Err(Error::Contract(format!(
                "theta has {} entries for {} features",
                self.theta.len(),
                alloc.k()
            )));
        }
        if self.rho.len() != alloc.items() {
            return Err(Error::Contract(format!(
                "rho has {} entries for {} items",
                self.rho.len(),
                alloc.items()
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Contract(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Prior on the Bernoulli inclusion probability of `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PbPrior {
    Fixed(f64),
    Beta { a: f64, b: f64 },
}

impl PbPrior {
    pub fn initial(&self) -> f64 {
        match *self {
            PbPrior::Fixed(p) => p,
            PbPrior::Beta { a, b } => a / (a + b),
        }
    }
}

/// Prior on the item effects `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPrior {
    /// Improper flat prior (infinite prior SD).
    Flat,
    Normal { mean: f64, sd: f64 },
    /// Item effects pinned at zero and never updated.
    Off,
}

impl RhoPrior {
    /// Normal prior, or flat when `sd` is infinite.
    pub fn normal(mean: f64, sd: f64) -> Self {
        if sd.is_infinite() {
            RhoPrior::Flat
        } else {
            RhoPrior::Normal { mean, sd }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// IBP concentration.
    pub lambda: f64,
    pub pb: PbPrior,
    /// Prior SD of each feature effect.
    pub theta_sd: f64,
    /// Inverse-gamma shape on tau².
    pub tau_shape: f64,
    /// Inverse-gamma scale on tau².
    pub tau_scale: f64,
    pub rho: RhoPrior,
    /// Baseline probit mean.
    pub b0: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 3.0,
            pb: PbPrior::Beta { a: 1.0, b: 9.0 },
            theta_sd: 2.0,
            tau_shape: 5.0,
            tau_scale: 1.0,
            rho: RhoPrior::Flat,
            b0: 2.5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("theta_sd", self.theta_sd)?;
        positive("tau_shape", self.tau_shape)?;
        positive("tau_scale", self.tau_scale)?;
        match self.pb {
            PbPrior::Fixed(p) if !(p > 0.0 && p < 1.0) => {
                return Err(Error::domain(format!("pB must lie in (0, 1), got {p}")))
            }
            PbPrior::Beta { a, b } => {
                positive("pB beta a", a)?;
                positive("pB beta b", b)?;
            }
            _ => {}
        }
        if let RhoPrior::Normal { sd, .. } = self.rho {
            positive("rho prior sd", sd)?;
        }
        if !self.b0.is_finite() {
            return Err(Error::domain("b0 must be finite"));
        }
        Ok(())
    }
}

/// One latent probit score per observed entry, aligned with
/// [`RatingMatrix::entries`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentScores(pub Vec<f64>);

impl LatentScores {
    /// Whether every score lies inside its rating's bracket.
    pub fn consistent_with(&self, ratings: &RatingMatrix) -> bool {
        self.0.len() == ratings.len()
            && ratings.entries().iter().zip(&self.0).all(|(e, &z)| {
                let (lo, hi) = e.rating.bracket();
                z > lo && z <= hi
            })
    }
}

/// One stored posterior snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraw {
    pub iteration: usize,
    pub alloc: FeatureAllocation,
    pub params: ModelParams,
    pub p_b: f64,
}

impl McmcDraw {
    pub fn check(&self) -> Result<()> {
        self.params.check(&self.alloc)
    }
}

/// `b0 + sum of theta over features shared by (u, i) + rho_i`.
pub fn probit_mean(u: usize, i: usize, alloc: &FeatureAllocation, params: &ModelParams) -> Result<f64> {
    if u >= alloc.users() {
        return Err(Error::Index { what: "user", index: u, bound: alloc.users() });
    }
    if i >= alloc.items() {
        return Err(Error::Index { what: "item", index: i, bound: alloc.items() });
    }
    Ok(probit_mean_unchecked(u, i, alloc, params))
}

#[inline]
pub(crate) fn probit_mean_unchecked(u: usize, i: usize, alloc: &FeatureAllocation, params: &ModelParams) -> f64 {
    let mut mean = params.b0 + params.rho[i];
    for k in 0..alloc.k() {
        if alloc.user_in(u, k) && alloc.item_in(i, k) {
            mean += params.theta[k];
        }
    }
    mean
}

/// Maps a latent score to its rating: `(-inf, 1] -> 1`, `(x-1, x] -> x`, `(4, inf) -> 5`.
pub fn rating_from_score(z: f64) -> Result<Rating> {
    if !z.is_finite() {
        return Err(Error::domain(format!("non-finite probit score {z}")));
    }
    let r = if z <= 1.0 {
        1
    } else if z > 4.0 {
        5
    } else {
        z.ceil() as u8
    };
    Rating::new(r)
}

/// `ln P(r = x)` under N(mean, tau²) cut at the rating thresholds.
#[inline]
pub fn log_category_prob(mean: f64, tau: f64, x: Rating) -> f64 {
    let (lo, hi) = x.bracket();
    normal::log_interval_mass((lo - mean) / tau, (hi - mean) / tau)
}

/// `P(r = x)` under N(mean, tau²) cut at the rating thresholds.
pub fn category_prob(mean: f64, tau: f64, x: Rating) -> f64 {
    log_category_prob(mean, tau, x).exp()
}

/// All five category probabilities.
pub fn category_probs(mean: f64, tau: f64) -> [f64; 5] {
    Rating::ALL.map(|x| category_prob(mean, tau, x))
}

/// Ordinal log-likelihood of user `u`'s observed ratings.
pub fn log_lik_row(u: usize, ratings: &RatingMatrix, alloc: &FeatureAllocation, params: &ModelParams) -> f64 {
    ratings
        .row_ratings(u)
        .map(|(i, r)| log_category_prob(probit_mean_unchecked(u, i, alloc, params), params.tau, r))
        .sum()
}
