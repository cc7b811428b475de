//! Posterior predictive distributions, point predictions and evaluation metrics.

use crate::consensus::GlobalRho;
use crate::error::{Error, Result};
use crate::model::{category_probs, probit_mean, McmcDraw};
use crate::ratings::{Rating, RatingMatrix};
use rayon::prelude::*;
use std::io::Write;

/// `z_{0.975}`, the two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Posterior predictive summary for one `(user, item)` query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub user: usize,
    pub item: usize,
    /// Probabilities of ratings 1..=5.
    pub probs: [f64; 5],
    /// Posterior mean of the probit mean.
    pub score: f64,
    /// Central 95% interval of the per-draw probit means.
    pub score_lo: f64,
    pub score_hi: f64,
}

impl Prediction {
    pub fn rating(&self) -> Rating {
        predict_rating(&self.probs)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Averages the category probabilities over the ensemble.
pub fn posterior_category_probs(u: usize, i: usize, ensemble: &[McmcDraw]) -> Result<Prediction> {
    if ensemble.is_empty() {
        return Err(Error::domain("empty prediction ensemble"));
    }
    let mut probs = [0.0; 5];
    let mut means = Vec::with_capacity(ensemble.len());
    for d in ensemble {
        let mu = probit_mean(u, i, &d.alloc, &d.params)?;
        for (acc, p) in probs.iter_mut().zip(category_probs(mu, d.params.tau)) {
            *acc += p;
        }
        means.push(mu);
    }
    let t = ensemble.len() as f64;
    probs.iter_mut().for_each(|p| *p /= t);
    let score = means.iter().sum::<f64>() / t;
    means.sort_by(f64::total_cmp);
    Ok(Prediction {
        user: u,
        item: i,
        probs,
        score,
        score_lo: quantile_sorted(&means, 0.025),
        score_hi: quantile_sorted(&means, 0.975),
    })
}

/// Predictions for many queries, evaluated in parallel.
pub fn predict_all(queries: &[(usize, usize)], ensemble: &[McmcDraw]) -> Result<Vec<Prediction>> {
    queries.par_iter().map(|&(u, i)| posterior_category_probs(u, i, ensemble)).collect()
}

/// Posterior mode; ties go to the lower rating.
pub fn predict_rating(probs: &[f64; 5]) -> Rating {
    let mut best = 0;
    for x in 1..5 {
        if probs[x] > probs[best] {
            best = x;
        }
    }
    Rating::ALL[best]
}

/// A proportion with its normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl Proportion {
    pub fn new(successes: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("proportion of an empty sample"));
        }
        let p = successes as f64 / n as f64;
        let half = Z_95 * (p * (1.0 - p) / n as f64).sqrt();
        Ok(Proportion { value: p, ci_lo: p - half, ci_hi: p + half, n })
    }
}

fn check_aligned(truth: &[Rating], predicted: &[Rating]) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} true ratings but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    Ok(())
}

/// Fraction of predictions within `k` stars of the truth.
pub fn within_k_star_accuracy(truth: &[Rating], predicted: &[Rating], k: u8) -> Result<Proportion> {
    check_aligned(truth, predicted)?;
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t.value().abs_diff(p.value()) <= k).count();
    Proportion::new(hits, truth.len())
}

pub fn exact_accuracy(truth: &[Rating], predicted: &[Rating]) -> Result<Proportion> {
    within_k_star_accuracy(truth, predicted, 0)
}

/// Pair counts of the pairwise preference test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairwiseCounts {
    pub correct: usize,
    pub counted: usize,
    /// Users contributing at least one pair.
    pub users: usize,
}

impl PairwiseCounts {
    pub fn accuracy(&self) -> Result<Proportion> {
        Proportion::new(self.correct, self.counted)
    }

    pub fn add(&mut self, other: PairwiseCounts) {
        self.correct += other.correct;
        self.counted += other.counted;
        self.users += other.users;
    }
}

/// Compares each user's held-out item with every trained item the user
/// rated differently. A pair is correct when the predicted scores order the
/// two items strictly in the same direction as the true ratings.
pub fn pairwise_preference_eval<F>(train: &RatingMatrix, test: &RatingMatrix, score: F) -> Result<PairwiseCounts>
where
    F: Fn(usize, usize) -> Result<f64>,
{
    if train.users() != test.users() || train.items() != test.items() {
        return Err(Error::Contract("train and test matrices differ in shape".into()));
    }
    let mut counts = PairwiseCounts::default();
    for u in 0..test.users() {
        let mut user_pairs = 0;
        for (test_item, test_rating) in test.row_ratings(u) {
            let test_score = score(u, test_item)?;
            for (item, rating) in train.row_ratings(u) {
                if rating == test_rating {
                    continue;
                }
                let predicted = test_score - score(u, item)?;
                let truth_higher = test_rating > rating;
                if (truth_higher && predicted > 0.0) || (!truth_higher && predicted < 0.0) {
                    counts.correct += 1;
                }
                counts.counted += 1;
                user_pairs += 1;
            }
        }
        if user_pairs > 0 {
            counts.users += 1;
        }
    }
    Ok(counts)
}

/// Posterior mean probit score of `(u, i)` under the ensemble.
pub fn ensemble_score(u: usize, i: usize, ensemble: &[McmcDraw]) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::domain("empty prediction ensemble"));
    }
    let mut total = 0.0;
    for d in ensemble {
        total += probit_mean(u, i, &d.alloc, &d.params)?;
    }
    Ok(total / ensemble.len() as f64)
}

/// The `l` items with the highest merged mean, ties to the lower index.
pub fn top_l_items(global: &GlobalRho, l: usize) -> Result<Vec<usize>> {
    if l > global.mean.len() {
        return Err(Error::domain(format!("asked for {l} items out of {}", global.mean.len())));
    }
    let mut order: Vec<usize> = (0..global.mean.len()).collect();
    order.sort_by(|&a, &b| global.mean[b].total_cmp(&global.mean[a]).then(a.cmp(&b)));
    order.truncate(l);
    Ok(order)
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    /// `None` for a pooled figure.
    pub shard: Option<usize>,
    pub value: Proportion,
}

pub fn write_report<W: Write>(mut out: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(out, "metric,shard,value,ci_lo,ci_hi,n")?;
    for r in rows {
        let shard = r.shard.map_or_else(|| "all".to_string(), |s| s.to_string());
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.metric, shard, r.value.value, r.value.ci_lo, r.value.ci_hi, r.value.n
        )?;
    }
    Ok(())
}
