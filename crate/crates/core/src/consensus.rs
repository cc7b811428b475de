//! Semi-local consensus Monte Carlo.
//!
//! Users are split into shards that each keep every item. Each shard runs
//! its own chain; only the item effects `rho` are treated as global. Their
//! shard posteriors are merged by precision weighting, and prediction in
//! each shard uses its own feature structure with `rho` replaced by draws
//! from the merged posterior.

use crate::error::{Error, Result};
use crate::model::McmcDraw;
use crate::ratings::RatingMatrix;
use crate::rng::{derive, Purpose};
use crate::sampler::{run_chain_stream, ChainConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    RoundRobin,
    Contiguous,
    /// Uniform random permutation, then contiguous blocks.
    SeededShuffle(u64),
}

/// Partition of the users into non-empty shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    assignment: Vec<usize>,
    shards: Vec<Vec<usize>>,
}

impl ShardPlan {
    /// Plan from explicit user lists; they must partition `0..m`.
    pub fn from_shards(m: usize, shards: Vec<Vec<usize>>) -> Result<Self> {
        let mut assignment = vec![usize::MAX; m];
        for (s, users) in shards.iter().enumerate() {
            if users.is_empty() {
                return Err(Error::domain(format!("shard {s} is empty")));
            }
            for &u in users {
                if u >= m {
                    return Err(Error::Index { what: "user", index: u, bound: m });
                }
                if assignment[u] != usize::MAX {
                    return Err(Error::domain(format!("user {u} assigned to two shards")));
                }
                assignment[u] = s;
            }
        }
        if let Some(u) = assignment.iter().position(|&s| s == usize::MAX) {
            return Err(Error::domain(format!("user {u} is in no shard")));
        }
        Ok(ShardPlan { assignment, shards })
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn users(&self, s: usize) -> &[usize] {
        &self.shards[s]
    }

    pub fn shard_of(&self, u: usize) -> usize {
        self.assignment[u]
    }

    /// Position of user `u` inside its shard's restricted rating matrix.
    pub fn local_index(&self, u: usize) -> usize {
        let s = self.assignment[u];
        self.shards[s].iter().position(|&v| v == u).expect("user is listed in its shard")
    }
}

/// Balanced split of `m` users into `s` shards (sizes differ by at most one).
pub fn split_users(m: usize, s: usize, strategy: SplitStrategy) -> Result<ShardPlan> {
    if s == 0 || s > m {
        return Err(Error::domain(format!("shard count {s} must be between 1 and the user count {m}")));
    }
    let blocks = |order: &[usize]| -> Vec<Vec<usize>> {
        let (base, extra) = (m / s, m % s);
        let mut start = 0;
        (0..s)
            .map(|j| {
                let len = base + usize::from(j < extra);
                let block = order[start..start + len].to_vec();
                start += len;
                block
            })
            .collect()
    };
    let shards = match strategy {
        SplitStrategy::RoundRobin => (0..s).map(|j| (j..m).step_by(s).collect()).collect(),
        SplitStrategy::Contiguous => blocks(&(0..m).collect::<Vec<_>>()),
        SplitStrategy::SeededShuffle(seed) => {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut derive(seed, Purpose::Shuffle, 0));
            blocks(&order)
        }
    };
    ShardPlan::from_shards(m, shards)
}

/// Rating matrix restricted to each shard's users (all items kept).
pub fn shard_ratings(ratings: &RatingMatrix, plan: &ShardPlan) -> Result<Vec<RatingMatrix>> {
    if plan.assignment.len() != ratings.users() {
        return Err(Error::Contract(format!(
            "plan covers {} users, ratings have {}",
            plan.assignment.len(),
            ratings.users()
        )));
    }
    (0..plan.shard_count()).map(|s| ratings.restrict_users(plan.users(s))).collect()
}

/// Runs one chain per shard, shard `s` on seed stream `s` of `config.seed`.
///
/// `jobs` caps the worker threads (`None`: rayon's default). Output order
/// and content do not depend on `jobs`.
pub fn run_shards(
    ratings: &RatingMatrix,
    plan: &ShardPlan,
    config: &ChainConfig,
    jobs: Option<usize>,
) -> Result<Vec<Vec<McmcDraw>>> {
    let data = shard_ratings(ratings, plan)?;
    if let Some(s) = data.iter().position(RatingMatrix::is_empty) {
        return Err(Error::domain(format!("shard {s} has no observed ratings")));
    }
    let run = |(s, r): (usize, &RatingMatrix)| run_chain_stream(r, config, s as u32);
    match jobs {
        Some(1) => data.iter().enumerate().map(run).collect(),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?;
            pool.install(|| data.par_iter().enumerate().map(run).collect())
        }
        None => data.par_iter().enumerate().map(run).collect(),
    }
}

/// Per-item posterior mean and SD of `rho` within one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardMoments {
    pub shard: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Sample mean and SD (denominator `T - 1`, zero for a single draw).
pub fn shard_moments(shard: usize, draws: &[McmcDraw]) -> Result<ShardMoments> {
    let first = draws.first().ok_or_else(|| Error::domain(format!("shard {shard} stored no draws")))?;
    let n = first.params.rho.len();
    let t = draws.len() as f64;
    let mut mean = vec![0.0; n];
    for d in draws {
        for (acc, r) in mean.iter_mut().zip(&d.params.rho) {
            *acc += r;
        }
    }
    mean.iter_mut().for_each(|x| *x /= t);
    let sd = if draws.len() == 1 {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|i| {
                let ss: f64 = draws.iter().map(|d| (d.params.rho[i] - mean[i]).powi(2)).sum();
                (ss / (t - 1.0)).sqrt()
            })
            .collect()
    };
    Ok(ShardMoments { shard, mean, sd })
}

/// Prior on `rho` used in the merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergePrior {
    Flat,
    Normal { mean: f64, sd: f64 },
}

/// Merged normal posterior of `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalRho {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Precision-weighted merge: `1/s² = 1/s0² + sum 1/s_s²`,
/// `mu = (mu0/s0² + sum mu_s/s_s²) s²`.
pub fn merge_rho(moments: &[ShardMoments], prior: MergePrior) -> Result<GlobalRho> {
    let first = moments.first().ok_or_else(|| Error::domain("no shard moments to merge"))?;
    let n = first.mean.len();
    if let Some(bad) = moments.iter().find(|m| m.mean.len() != n || m.sd.len() != n) {
        return Err(Error::Contract(format!("shard {} has moments of the wrong length", bad.shard)));
    }
    let mut mean = Vec::with_capacity(n);
    let mut sd = Vec::with_capacity(n);
    for i in 0..n {
        if moments.len() == 1 && first.sd[i] == 0.0 {
            mean.push(first.mean[i]);
            sd.push(0.0);
            continue;
        }
        let (mut precision, mut weighted) = match prior {
            MergePrior::Flat => (0.0, 0.0),
            MergePrior::Normal { mean, sd } => (1.0 / (sd * sd), mean / (sd * sd)),
        };
        for m in moments {
            if m.sd[i] == 0.0 {
                return Err(Error::DegeneratePrecision { item: i, shard: m.shard });
            }
            let w = 1.0 / (m.sd[i] * m.sd[i]);
            precision += w;
            weighted += w * m.mean[i];
        }
        mean.push(weighted / precision);
        sd.push((1.0 / precision).sqrt());
    }
    Ok(GlobalRho { mean, sd })
}

/// Independent `N(mean_i, sd_i²)` draws.
pub fn resample_rho<R: Rng + ?Sized>(global: &GlobalRho, rng: &mut R) -> Vec<f64> {
    global
        .mean
        .iter()
        .zip(&global.sd)
        .map(|(&mu, &sd)| if sd == 0.0 { mu } else { mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal) })
        .collect()
}

/// Mean absolute deviation between two `rho` vectors.
pub fn rho_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Which stored draws enter the merged prediction ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterRule {
    /// Keep draws within this `rho_distance` of the resampled vector.
    Epsilon(f64),
    /// Keep this fraction of draws (at least one), closest first.
    KeepFraction(f64),
}

impl FilterRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterRule::Epsilon(e) if e > 0.0 => Ok(()),
            FilterRule::KeepFraction(q) if q > 0.0 && q <= 1.0 => Ok(()),
            other => Err(Error::domain(format!("invalid filter rule {other}"))),
        }
    }
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule::KeepFraction(0.2)
    }
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterRule::Epsilon(e) => write!(f, "epsilon:{e}"),
            FilterRule::KeepFraction(q) => write!(f, "keep:{q}"),
        }
    }
}

impl FromStr for FilterRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').ok_or_else(|| Error::domain(format!("bad filter rule {s:?}")))?;
        let value: f64 = value.parse().map_err(|_| Error::domain(format!("bad filter value {value:?}")))?;
        let rule = match kind {
            "epsilon" => FilterRule::Epsilon(value),
            "keep" => FilterRule::KeepFraction(value),
            _ => return Err(Error::domain(format!("unknown filter rule {kind:?}"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Indexes of the kept draws, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    /// No draw passed the threshold; `kept` holds only the closest one.
    pub fallback: bool,
}

fn select(distances: &[f64], rule: FilterRule) -> FilterOutcome {
    let mut by_distance: Vec<usize> = (0..distances.len()).collect();
    by_distance.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let (mut kept, fallback) = match rule {
        FilterRule::Epsilon(eps) => {
            let kept: Vec<usize> = (0..distances.len()).filter(|&t| distances[t] < eps).collect();
            if kept.is_empty() {
                (by_distance.into_iter().take(1).collect(), true)
            } else {
                (kept, false)
            }
        }
        FilterRule::KeepFraction(q) => {
            let count = ((q * distances.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            (by_distance.into_iter().take(count).collect(), false)
        }
    };
    kept.sort_unstable();
    FilterOutcome { kept, fallback }
}

/// Selects draws whose `rho` is close to `rho_tilde`. Never returns an empty set.
pub fn filter_draws(draws: &[McmcDraw], rho_tilde: &[f64], rule: FilterRule) -> Result<FilterOutcome> {
    if draws.is_empty() {
        return Err(Error::domain("no draws to filter"));
    }
    if let Some(d) = draws.iter().find(|d| d.params.rho.len() != rho_tilde.len()) {
        return Err(Error::Contract(format!(
            "draw at iteration {} has {} item effects, expected {}",
            d.iteration,
            d.params.rho.len(),
            rho_tilde.len()
        )));
    }
    let distances: Vec<f64> = draws.iter().map(|d| rho_distance(&d.params.rho, rho_tilde)).collect();
    Ok(select(&distances, rule))
}

/// When the merged `rho` is resampled for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// A fresh vector for every stored draw, compared with that draw only.
    PerDraw,
    /// One vector per shard, compared with all of the shard's draws.
    PerShard,
}

impl fmt::Display for ResampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMode::PerDraw => "per-draw",
            ResampleMode::PerShard => "per-shard",
        })
    }
}

impl FromStr for ResampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-draw" => Ok(ResampleMode::PerDraw),
            "per-shard" => Ok(ResampleMode::PerShard),
            _ => Err(Error::domain(format!("unknown resample mode {s:?}"))),
        }
    }
}

/// A shard's prediction ensemble: kept draws with `rho` replaced by resampled values.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardEnsemble {
    pub shard: usize,
    pub draws: Vec<McmcDraw>,
    pub fallback: bool,
}

/// Resamples `rho`, filters each shard's draws and substitutes the resampled
/// values. Shard `s` draws from stream `s` of `seed`.
pub fn merged_predict(
    shard_draws: &[Vec<McmcDraw>],
    global: &GlobalRho,
    rule: FilterRule,
    mode: ResampleMode,
    seed: u64,
) -> Result<Vec<ShardEnsemble>> {
    rule.validate()?;
    shard_draws
        .iter()
        .enumerate()
        .map(|(s, draws)| {
            if draws.is_empty() {
                return Err(Error::domain(format!("shard {s} stored no draws")));
            }
            let mut rng = derive(seed, Purpose::Resample, s as u32);
            let (kept, fallback, tilde): (Vec<usize>, bool, Vec<Vec<f64>>) = match mode {
                ResampleMode::PerShard => {
                    let tilde = resample_rho(global, &mut rng);
                    let out = filter_draws(draws, &tilde, rule)?;
                    let kept_tilde = vec![tilde; out.kept.len()];
                    (out.kept, out.fallback, kept_tilde)
                }
                ResampleMode::PerDraw => {
                    let tildes: Vec<Vec<f64>> = draws.iter().map(|_| resample_rho(global, &mut rng)).collect();
                    let distances: Vec<f64> =
                        draws.iter().zip(&tildes).map(|(d, t)| rho_distance(&d.params.rho, t)).collect();
                    let out = select(&distances, rule);
                    let kept_tilde = out.kept.iter().map(|&t| tildes[t].clone()).collect();
                    (out.kept, out.fallback, kept_tilde)
                }
            };
            if fallback {
                log::warn!("shard {s}: no draw within the filter threshold, using the closest one");
            }
            let draws = kept
                .iter()
                .zip(tilde)
                .map(|(&t, rho)| {
                    let mut d = draws[t].clone();
                    d.params.rho = rho;
                    d
                })
                .collect();
            Ok(ShardEnsemble { shard: s, draws, fallback })
        })
        .collect()
}

/// Record of a merge, written next to the shard draw files.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeManifest {
    pub shards: usize,
    pub seed: u64,
    pub strategy: String,
    pub rule: FilterRule,
    pub mode: ResampleMode,
    pub prior: MergePrior,
    pub global: GlobalRho,
}

impl MergeManifest {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# dfa-merge v1")?;
        writeln!(out, "shards={}", self.shards)?;
        writeln!(out, "seed={}", self.seed)?;
        writeln!(out, "split={}", self.strategy)?;
        writeln!(out, "filter={}", self.rule)?;
        writeln!(out, "resample={}", self.mode)?;
        match self.prior {
            MergePrior::Flat => writeln!(out, "prior=flat")?,
            MergePrior::Normal { mean, sd } => writeln!(out, "prior=normal:{mean},{sd}")?,
        }
        writeln!(out, "item\tmean\tsd")?;
        for (i, (mu, sd)) in self.global.mean.iter().zip(&self.global.sd).enumerate() {
            writeln!(out, "{}\t{}\t{}", i + 1, crate::draws::fmt_f64(*mu), crate::draws::fmt_f64(*sd))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        if lines.first().map(String::as_str) != Some("# dfa-merge v1") {
            return Err(Error::parse(1, "not a merge manifest"));
        }
        let mut fields = std::collections::HashMap::new();
        let mut idx = 1;
        while idx < lines.len() && lines[idx] != "item\tmean\tsd" {
            let (k, v) = lines[idx]
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("expected key=value, got {:?}", lines[idx])))?;
            fields.insert(k.to_string(), v.to_string());
            idx += 1;
        }
        let get = |k: &str| fields.get(k).cloned().ok_or_else(|| Error::parse(idx, format!("missing {k}")));
        let prior = match get("prior")?.as_str() {
            "flat" => MergePrior::Flat,
            other => {
                let spec = other.strip_prefix("normal:").ok_or_else(|| Error::parse(idx, "bad prior"))?;
                let (m, s) = spec.split_once(',').ok_or_else(|| Error::parse(idx, "bad prior"))?;
                MergePrior::Normal { mean: crate::draws::parse_f64(m, idx)?, sd: crate::draws::parse_f64(s, idx)? }
            }
        };
        let mut global = GlobalRho { mean: Vec::new(), sd: Vec::new() };
        for (j, line) in lines.iter().enumerate().skip(idx + 1) {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::parse(j + 1, "expected item, mean, sd"));
            }
            global.mean.push(crate::draws::parse_f64(parts[1], j + 1)?);
            global.sd.push(crate::draws::parse_f64(parts[2], j + 1)?);
        }
        Ok(MergeManifest {
            shards: get("shards")?.parse().map_err(|_| Error::parse(idx, "bad shard count"))?,
            seed: get("seed")?.parse().map_err(|_| Error::parse(idx, "bad seed"))?,
            strategy: get("split")?,
            rule: get("filter")?.parse()?,
            mode: get("resample")?.parse()?,
            prior,
            global,
        })
    }
}
