//! Regularized matrix factorization baseline, `r_ui ≈ p_u · q_i`, fitted by
//! per-entry stochastic gradient descent on
//!
//! ```text
//! E = ½ Σ_obs (r_ui - p_u·q_i)² + (λ_P/2) Σ_u |p_u|² + (λ_Q/2) Σ_i |q_i|²
//! ```
//!
//! Regularization is applied at every visited entry.

use crate::error::{Error, Result};
use crate::ratings::{Rating, RatingMatrix};
use crate::rng::{derive, Purpose};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfParams {
    pub rank: usize,
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MfParams {
    fn default() -> Self {
        MfParams { rank: 5, lambda_p: 0.05, lambda_q: 0.05, learning_rate: 0.01, epochs: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// User factors, user-major (`p[u * k + f]`).
    pub p: Vec<f64>,
    /// Item factors, item-major (`q[i * k + f]`).
    pub q: Vec<f64>,
    pub params: MfParams,
    /// Objective after each epoch.
    pub objective_trace: Vec<f64>,
}

impl MfModel {
    #[inline]
    pub fn user_factors(&self, u: usize) -> &[f64] {
        &self.p[u * self.k..(u + 1) * self.k]
    }

    #[inline]
    pub fn item_factors(&self, i: usize) -> &[f64] {
        &self.q[i * self.k..(i + 1) * self.k]
    }

    /// Writes `k m n` followed by P (k rows of m values) and Q (k rows of n values).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.k, self.m, self.n)?;
        for f in 0..self.k {
            let row: Vec<String> = (0..self.m).map(|u| format!("{:.16e}", self.p[u * self.k + f])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        for f in 0..self.k {
            let row: Vec<String> = (0..self.n).map(|i| format!("{:.16e}", self.q[i * self.k + f])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Reads factors written by [`MfModel::write_text`]; training metadata is not stored.
    pub fn read_text<R: BufRead>(input: R) -> Result<MfModel> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let dims: Vec<usize> = header?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(1, format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        let [k, m, n] = dims[..] else {
            return Err(Error::parse(1, "header must be `k m n`"));
        };
        let mut p = vec![0.0; m * k];
        let mut q = vec![0.0; n * k];
        for row in 0..2 * k {
            let (idx, line) = lines.next().ok_or_else(|| Error::parse(row + 2, "missing factor row"))?;
            let values: Vec<f64> = line?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse(idx + 1, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            let (f, width, target) = if row < k { (row, m, &mut p) } else { (row - k, n, &mut q) };
            if values.len() != width {
                return Err(Error::parse(idx + 1, format!("expected {width} values, got {}", values.len())));
            }
            for (j, v) in values.into_iter().enumerate() {
                target[j * k + f] = v;
            }
        }
        Ok(MfModel {
            k,
            m,
            n,
            p,
            q,
            params: MfParams { rank: k, ..MfParams::default() },
            objective_trace: Vec::new(),
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized squared-error objective on the observed entries.
pub fn objective(model: &MfModel, ratings: &RatingMatrix) -> f64 {
    let fit: f64 = ratings
        .entries()
        .iter()
        .map(|e| {
            let err = e.rating.value() as f64 - dot(model.user_factors(e.user), model.item_factors(e.item));
            err * err
        })
        .sum();
    let pn: f64 = model.p.iter().map(|x| x * x).sum();
    let qn: f64 = model.q.iter().map(|x| x * x).sum();
    0.5 * fit + 0.5 * model.params.lambda_p * pn + 0.5 * model.params.lambda_q * qn
}

/// One SGD update on entry `(u, i)` with observed value `r`.
pub(crate) fn sgd_step(model: &mut MfModel, u: usize, i: usize, r: f64) {
    let k = model.k;
    let MfParams { lambda_p, lambda_q, learning_rate: lr, .. } = model.params;
    let (pu, qi) = (u * k, i * k);
    let err = r - dot(&model.p[pu..pu + k], &model.q[qi..qi + k]);
    for f in 0..k {
        let p = model.p[pu + f];
        let q = model.q[qi + f];
        model.p[pu + f] += lr * (err * q - lambda_p * p);
        model.q[qi + f] += lr * (err * p - lambda_q * q);
    }
}

pub fn train_mf<R: Rng + ?Sized>(ratings: &RatingMatrix, params: MfParams, rng: &mut R) -> Result<MfModel> {
    if params.rank == 0 {
        return Err(Error::domain("rank must be at least 1"));
    }
    if !(params.learning_rate > 0.0) || params.epochs == 0 {
        return Err(Error::domain("learning rate must be positive and epochs at least 1"));
    }
    if params.lambda_p < 0.0 || params.lambda_q < 0.0 {
        return Err(Error::domain("regularization must be non-negative"));
    }
    let (m, n, k) = (ratings.users(), ratings.items(), params.rank);
    let init = Normal::new(0.0, 0.1).expect("valid normal");
    let p = (0..m * k).map(|_| init.sample(rng)).collect();
    let q = (0..n * k).map(|_| init.sample(rng)).collect();
    let mut model = MfModel { k, m, n, p, q, params, objective_trace: Vec::with_capacity(params.epochs) };
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(rng);
        for &idx in &order {
            let e = ratings.entry(idx);
            sgd_step(&mut model, e.user, e.item, e.rating.value() as f64);
        }
        let obj = objective(&model, ratings);
        if !obj.is_finite() {
            return Err(Error::Diverged { epoch, objective: obj });
        }
        model.objective_trace.push(obj);
    }
    Ok(model)
}

#[inline]
pub fn predict_mf(model: &MfModel, u: usize, i: usize) -> f64 {
    dot(model.user_factors(u), model.item_factors(i))
}

/// Nearest integer rating (halves round up), clipped to 1..=5.
pub fn mf_rating(model: &MfModel, u: usize, i: usize) -> Rating {
    round_to_rating(predict_mf(model, u, i))
}

pub(crate) fn round_to_rating(x: f64) -> Rating {
    let r = (x + 0.5).floor().clamp(1.0, 5.0);
    Rating::new(r as u8).expect("clipped into range")
}

pub fn rmse(model: &MfModel, test: &RatingMatrix) -> f64 {
    if test.is_empty() {
        return f64::NAN;
    }
    let sse: f64 = test
        .entries()
        .iter()
        .map(|e| (e.rating.value() as f64 - predict_mf(model, e.user, e.item)).powi(2))
        .sum();
    (sse / test.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub ranks: Vec<usize>,
    /// Regularization values, applied to both user and item factors.
    pub lambdas: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid { ranks: vec![1, 2, 3, 5, 8, 12], lambdas: vec![0.01, 0.05, 0.1, 0.2, 0.5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSelection {
    pub rank: usize,
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub mean_rmse: f64,
}

/// Grid search over `(rank, lambda)` minimizing mean held-out RMSE across
/// `folds`; ties go to the smaller rank. Fold assignment and every fit are
/// seeded from `rng`, and fits run in parallel.
pub fn cv_select_rank<R: Rng + ?Sized>(
    ratings: &RatingMatrix,
    grid: &CvGrid,
    base: MfParams,
    folds: usize,
    rng: &mut R,
) -> Result<CvSelection> {
    if folds < 2 {
        return Err(Error::domain("cross validation needs at least two folds"));
    }
    if grid.ranks.is_empty() || grid.lambdas.is_empty() {
        return Err(Error::domain("empty cross-validation grid"));
    }
    if ratings.len() < folds {
        return Err(Error::domain("fewer ratings than folds"));
    }
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; ratings.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % folds;
    }
    let splits: Vec<(RatingMatrix, RatingMatrix)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) =
                ratings.entries().iter().enumerate().partition(|(idx, _)| fold_of[*idx] == f);
            let strip = |v: Vec<(usize, &crate::ratings::Entry)>| v.into_iter().map(|(_, e)| *e).collect();
            Ok((
                RatingMatrix::new(ratings.users(), ratings.items(), strip(train))?,
                RatingMatrix::new(ratings.users(), ratings.items(), strip(test))?,
            ))
        })
        .collect::<Result<_>>()?;

    let seed: u64 = rng.random();
    let points: Vec<(usize, f64)> =
        grid.ranks.iter().flat_map(|&k| grid.lambdas.iter().map(move |&l| (k, l))).collect();
    let scores: Vec<Result<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(pi, &(rank, lambda))| {
            let params = MfParams { rank, lambda_p: lambda, lambda_q: lambda, ..base };
            let mut total = 0.0;
            for (f, (train, test)) in splits.iter().enumerate() {
                let mut fit_rng = derive(seed, Purpose::CrossValidation, (pi * folds + f) as u32);
                let model = train_mf(train, params, &mut fit_rng)?;
                total += rmse(&model, test);
            }
            Ok(total / folds as f64)
        })
        .collect();

    let mut best: Option<CvSelection> = None;
    for (&(rank, lambda), score) in points.iter().zip(scores) {
        let score = score?;
        let better = match best {
            None => true,
            Some(b) => score < b.mean_rmse || (score == b.mean_rmse && rank < b.rank),
        };
        if better {
            best = Some(CvSelection { rank, lambda_p: lambda, lambda_q: lambda, mean_rmse: score });
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_from(p: Vec<f64>, q: Vec<f64>, k: usize, params: MfParams) -> MfModel {
        let m = p.len() / k;
        let n = q.len() / k;
        MfModel { k, m, n, p, q, params, objective_trace: vec![] }
    }

    #[test]
    fn predictions_examples() {
        let params = MfParams { rank: 2, ..MfParams::default() };
        let model = model_from(vec![1.0, 2.0], vec![3.0, -1.0], 2, params);
        assert_eq!(predict_mf(&model, 0, 0), 1.0);
        let doubled = model_from(vec![2.0, 4.0], vec![3.0, -1.0], 2, params);
        assert_eq!(predict_mf(&doubled, 0, 0), 2.0);
        let zero = model_from(vec![0.0, 0.0], vec![3.0, -1.0], 2, params);
        assert_eq!(predict_mf(&zero, 0, 0), 0.0);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_rating(3.4).value(), 3);
        assert_eq!(round_to_rating(3.5).value(), 4);
        assert_eq!(round_to_rating(6.2).value(), 5);
        assert_eq!(round_to_rating(0.1).value(), 1);
    }

    #[test]
    fn exact_factorization_is_recovered() {
        // rank-1 complete 3x3 matrix: outer((1,2,1),(1,2,2))
        let u = [1.0, 2.0, 1.0];
        let v = [1.0, 2.0, 2.0];
        let mut triples = Vec::new();
        for (a, x) in u.iter().enumerate() {
            for (b, y) in v.iter().enumerate() {
                triples.push((a, b, (x * y) as u8));
            }
        }
        let r = RatingMatrix::from_triples(3, 3, &triples).unwrap();
        let params = MfParams { rank: 2, lambda_p: 0.0, lambda_q: 0.0, learning_rate: 0.02, epochs: 20000 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = train_mf(&r, params, &mut rng).unwrap();
        assert!(rmse(&model, &r) < 1e-3, "rmse {}", rmse(&model, &r));
    }

    #[test]
    fn objective_decreases_over_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let triples: Vec<_> = (0..20)
            .flat_map(|u| (0..15).map(move |i| (u, i)))
            .filter(|_| rng.random::<f64>() < 0.6)
            .map(|(u, i)| (u, i, 1 + ((u * 7 + i * 3) % 5) as u8))
            .collect();
        let r = RatingMatrix::from_triples(20, 15, &triples).unwrap();
        let params = MfParams { rank: 3, epochs: 60, ..MfParams::default() };
        let model = train_mf(&r, params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let windows: Vec<f64> = model.objective_trace.chunks(5).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        for pair in windows.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "{windows:?}");
        }
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let r = RatingMatrix::from_triples(2, 2, &[(0, 0, 5), (0, 1, 5), (1, 0, 5), (1, 1, 5)]).unwrap();
        let params = MfParams { rank: 2, learning_rate: 50.0, epochs: 50, ..MfParams::default() };
        let err = train_mf(&r, params, &mut ChaCha8Rng::seed_from_u64(4)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn text_round_trip() {
        let params = MfParams { rank: 2, ..MfParams::default() };
        let model = model_from(vec![0.1, -0.2, 0.3, 0.4, 1.0 / 3.0, 2.0], vec![1.5, -0.5], 2, params);
        let mut buf = Vec::new();
        model.write_text(&mut buf).unwrap();
        let back = MfModel::read_text(&buf[..]).unwrap();
        assert_eq!(back.p, model.p);
        assert_eq!(back.q, model.q);
        assert_eq!((back.k, back.m, back.n), (2, 3, 1));
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let r = RatingMatrix::from_triples(3, 3, &[(0, 0, 3), (1, 1, 4), (2, 2, 2), (0, 1, 5), (1, 2, 1), (2, 0, 3)]).unwrap();
        let grid = CvGrid { ranks: vec![2], lambdas: vec![0.1] };
        let base = MfParams { epochs: 5, ..MfParams::default() };
        let sel = cv_select_rank(&r, &grid, base, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!((sel.rank, sel.lambda_p, sel.lambda_q), (2, 0.1, 0.1));
        let again = cv_select_rank(&r, &grid, base, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(sel, again);
    }

    /// Objective of a single observed entry, the quantity one SGD step descends.
    fn entry_objective(m: &MfModel, u: usize, i: usize, r: f64) -> f64 {
        let err = r - dot(m.user_factors(u), m.item_factors(i));
        let pn: f64 = m.user_factors(u).iter().map(|x| x * x).sum();
        let qn: f64 = m.item_factors(i).iter().map(|x| x * x).sum();
        0.5 * err * err + 0.5 * m.params.lambda_p * pn + 0.5 * m.params.lambda_q * qn
    }

    #[test]
    fn sgd_direction_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.0, 0.7).unwrap();
        for _ in 0..20 {
            let k = 3;
            let params = MfParams { rank: k, lambda_p: 0.3, lambda_q: 0.1, learning_rate: 1.0, epochs: 1 };
            let p: Vec<f64> = (0..2 * k).map(|_| normal.sample(&mut rng)).collect();
            let q: Vec<f64> = (0..2 * k).map(|_| normal.sample(&mut rng)).collect();
            let base = model_from(p, q, k, params);
            let (u, i, r) = (1, 0, rng.random_range(1..=5) as f64);
            let mut stepped = base.clone();
            sgd_step(&mut stepped, u, i, r);
            let h = 1e-6;
            for f in 0..k {
                for (is_p, idx) in [(true, u * k + f), (false, i * k + f)] {
                    let mut plus = base.clone();
                    let mut minus = base.clone();
                    let (a, b) = if is_p { (&mut plus.p, &mut minus.p) } else { (&mut plus.q, &mut minus.q) };
                    a[idx] += h;
                    b[idx] -= h;
                    let numeric = (entry_objective(&plus, u, i, r) - entry_objective(&minus, u, i, r)) / (2.0 * h);
                    // with lr = 1 the update equals minus the gradient
                    let analytic = if is_p { base.p[idx] - stepped.p[idx] } else { base.q[idx] - stepped.q[idx] };
                    let rel = (numeric - analytic).abs() / analytic.abs().max(1e-3);
                    assert!(rel < 1e-5, "factor {f}: numeric {numeric} analytic {analytic}");
                }
            }
        }
    }

    #[test]
    fn small_step_reduces_entry_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..200 {
            let k = 4;
            let params = MfParams { rank: k, lambda_p: 0.0, lambda_q: 0.0, learning_rate: 1e-3, epochs: 1 };
            let mut m = model_from(
                (0..k).map(|_| normal.sample(&mut rng)).collect(),
                (0..k).map(|_| normal.sample(&mut rng)).collect(),
                k,
                params,
            );
            let r = rng.random_range(1..=5) as f64;
            let before = (r - predict_mf(&m, 0, 0)).powi(2);
            if before < 1e-12 {
                continue;
            }
            sgd_step(&mut m, 0, 0, r);
            assert!((r - predict_mf(&m, 0, 0)).powi(2) < before);
        }
    }
}
