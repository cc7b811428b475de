//! Posterior structure summaries and the shard-count tradeoff table.

use crate::draws::fmt_f64;
use crate::error::{Error, Result};
use crate::model::{BinaryMatrix, McmcDraw};
use rayon::prelude::*;
use std::io::Write;

/// Mode of `K` over the draws; ties go to the smaller `K`.
pub fn map_k(draws: &[McmcDraw]) -> Result<usize> {
    if draws.is_empty() {
        return Err(Error::domain("no draws to summarize"));
    }
    let max_k = draws.iter().map(|d| d.alloc.k()).max().unwrap_or(0);
    let mut counts = vec![0usize; max_k + 1];
    for d in draws {
        counts[d.alloc.k()] += 1;
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Columns packed into 64-bit words for fast Hamming distances.
#[derive(Debug, Clone)]
struct PackedColumns {
    words: usize,
    data: Vec<u64>,
    cols: usize,
}

impl PackedColumns {
    fn new(m: &BinaryMatrix) -> Self {
        let words = m.rows().div_ceil(64).max(1);
        let mut data = vec![0u64; words * m.cols()];
        for c in 0..m.cols() {
            for (r, &bit) in m.column(c).iter().enumerate() {
                if bit {
                    data[c * words + r / 64] |= 1 << (r % 64);
                }
            }
        }
        PackedColumns { words, data, cols: m.cols() }
    }

    fn column(&self, c: usize) -> &[u64] {
        &self.data[c * self.words..(c + 1) * self.words]
    }

    fn distance(&self, c: usize, other: &PackedColumns, d: usize) -> usize {
        self.column(c).iter().zip(other.column(d)).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
    }
}

/// Greedy matching: repeatedly pairs the closest unmatched columns.
/// Returns the summed distance and, for each column of `a`, its partner in `b`.
fn greedy_match(a: &PackedColumns, b: &PackedColumns) -> (usize, Vec<usize>) {
    let k = a.cols;
    let mut pairs: Vec<(usize, usize, usize)> =
        (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| (a.distance(i, b, j), i, j)).collect();
    pairs.sort_unstable();
    let mut partner = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    let mut total = 0;
    let mut matched = 0;
    for (cost, i, j) in pairs {
        if partner[i] != usize::MAX || taken[j] {
            continue;
        }
        partner[i] = j;
        taken[j] = true;
        total += cost;
        matched += 1;
        if matched == k {
            break;
        }
    }
    (total, partner)
}

fn check_same_shape(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::domain(format!(
            "cannot compare a {}x{} matrix with a {}x{} matrix",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn packed_distance(a: &PackedColumns, b: &PackedColumns) -> (usize, Vec<usize>) {
    let forward = greedy_match(a, b);
    let backward = greedy_match(b, a);
    if backward.0 < forward.0 {
        let mut partner = vec![0; a.cols];
        for (j, &i) in backward.1.iter().enumerate() {
            partner[i] = j;
        }
        (backward.0, partner)
    } else {
        forward
    }
}

/// Column matching found by the greedy search; `partner[k]` is the column of
/// the second matrix paired with column `k` of the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub distance: usize,
    pub partner: Vec<usize>,
}

/// Greedy column-permutation Hamming distance. The greedy search is run
/// from both matrices and the smaller total kept, so the result is symmetric.
pub fn min_hamming_matching(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<Matching> {
    check_same_shape(a, b)?;
    let (distance, partner) = packed_distance(&PackedColumns::new(a), &PackedColumns::new(b));
    Ok(Matching { distance, partner })
}

pub fn min_hamming_distance(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<usize> {
    Ok(min_hamming_matching(a, b)?.distance)
}

/// [`min_hamming_distance`] after padding the narrower matrix with empty columns.
pub fn min_hamming_distance_padded(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<usize> {
    let k = a.cols().max(b.cols());
    min_hamming_distance(&a.padded(k), &b.padded(k))
}

/// Exact minimum over all column permutations; feasible for `K <= 8`.
pub fn min_hamming_exhaustive(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<usize> {
    check_same_shape(a, b)?;
    if a.cols() > 8 {
        return Err(Error::domain("exhaustive matching is limited to 8 columns"));
    }
    let (pa, pb) = (PackedColumns::new(a), PackedColumns::new(b));
    fn search(i: usize, used: u32, acc: usize, best: &mut usize, pa: &PackedColumns, pb: &PackedColumns) {
        if acc >= *best {
            return;
        }
        if i == pa.cols {
            *best = acc;
            return;
        }
        for j in 0..pb.cols {
            if used & (1 << j) == 0 {
                search(i + 1, used | (1 << j), acc + pa.distance(i, pb, j), best, pa, pb);
            }
        }
    }
    let mut best = usize::MAX;
    search(0, 0, 0, &mut best, &pa, &pb);
    Ok(best)
}

/// Medoid of the draws sharing the MAP feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct DahlEstimate {
    /// Position of the chosen draw in the input.
    pub index: usize,
    pub k: usize,
    pub a: BinaryMatrix,
    pub mean_distance: f64,
}

/// Among draws with `K = map_k`, the one with the smallest mean greedy
/// Hamming distance to the others (ties to the earliest).
pub fn dahl_estimate_a(draws: &[McmcDraw]) -> Result<DahlEstimate> {
    let k = map_k(draws)?;
    let candidates: Vec<usize> = (0..draws.len()).filter(|&t| draws[t].alloc.k() == k).collect();
    let packed: Vec<PackedColumns> = candidates.iter().map(|&t| PackedColumns::new(draws[t].alloc.a())).collect();
    let c = candidates.len();
    let upper: Vec<Vec<usize>> =
        (0..c).into_par_iter().map(|x| ((x + 1)..c).map(|y| packed_distance(&packed[x], &packed[y]).0).collect()).collect();
    let mut totals = vec![0usize; c];
    for x in 0..c {
        for (offset, &d) in upper[x].iter().enumerate() {
            totals[x] += d;
            totals[x + 1 + offset] += d;
        }
    }
    let best = (0..c).min_by_key(|&x| (totals[x], x)).expect("at least one candidate");
    let index = candidates[best];
    Ok(DahlEstimate {
        index,
        k,
        a: draws[index].alloc.a().clone(),
        mean_distance: if c > 1 { totals[best] as f64 / (c - 1) as f64 } else { 0.0 },
    })
}

/// `B` and `theta` estimates conditional on `A`: each draw with matching `K`
/// is aligned to `a_hat` column by column, then `B` is a majority vote
/// (ties to 0) and `theta` an average.
pub fn conditional_estimates(draws: &[McmcDraw], a_hat: &BinaryMatrix) -> Result<(BinaryMatrix, Vec<f64>)> {
    let k = a_hat.cols();
    let matching: Vec<&McmcDraw> = draws.iter().filter(|d| d.alloc.k() == k).collect();
    let first = matching.first().ok_or_else(|| Error::domain(format!("no draw has {k} features")))?;
    let n = first.alloc.items();
    let target = PackedColumns::new(a_hat);
    let mut votes = vec![vec![0usize; n]; k];
    let mut theta = vec![0.0; k];
    for d in &matching {
        check_same_shape(a_hat, d.alloc.a())?;
        let (_, partner) = packed_distance(&target, &PackedColumns::new(d.alloc.a()));
        for (col, &p) in partner.iter().enumerate() {
            theta[col] += d.params.theta[p];
            for (i, vote) in votes[col].iter_mut().enumerate() {
                *vote += usize::from(d.alloc.item_in(i, p));
            }
        }
    }
    let t = matching.len();
    theta.iter_mut().for_each(|x| *x /= t as f64);
    let columns = votes.into_iter().map(|col| col.into_iter().map(|v| 2 * v > t).collect()).collect();
    Ok((BinaryMatrix::from_columns(n, columns)?, theta))
}

/// Point estimates written as text alongside draw files.
pub fn write_estimate<W: Write>(mut out: W, a: &BinaryMatrix, b: &BinaryMatrix, theta: &[f64]) -> Result<()> {
    let bits = |m: &BinaryMatrix| if m.cols() == 0 { "-".to_string() } else { m.to_row_major_bits() };
    writeln!(out, "# dfa-estimate v1 m={} n={} K={}", a.rows(), b.rows(), a.cols())?;
    writeln!(out, "A\t{}", bits(a))?;
    writeln!(out, "B\t{}", bits(b))?;
    let theta: Vec<String> = theta.iter().map(|&x| fmt_f64(x)).collect();
    writeln!(out, "theta\t{}", if theta.is_empty() { "-".to_string() } else { theta.join(",") })?;
    Ok(())
}

/// Cost and precision of one shard count, in relative units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRow {
    pub shards: usize,
    pub users_per_shard: f64,
    /// `(m/S)^3`
    pub per_shard_cost: f64,
    /// `S (m/S)^3`
    pub total_cost: f64,
    /// `((m_s n) / ln(m_s n))^(-1/2)`
    pub se_theta: f64,
}

pub fn tradeoff_table(m: usize, n: usize, shard_counts: &[usize]) -> Result<Vec<TradeoffRow>> {
    shard_counts
        .iter()
        .map(|&s| {
            if s == 0 {
                return Err(Error::domain("shard count must be positive"));
            }
            let ms = m as f64 / s as f64;
            let cells = ms * n as f64;
            if cells <= 1.0 {
                return Err(Error::domain(format!("{ms} users per shard times {n} items is at most 1")));
            }
            Ok(TradeoffRow {
                shards: s,
                users_per_shard: ms,
                per_shard_cost: ms.powi(3),
                total_cost: s as f64 * ms.powi(3),
                se_theta: (cells / cells.ln()).powf(-0.5),
            })
        })
        .collect()
}

pub fn write_tradeoff<W: Write>(mut out: W, rows: &[TradeoffRow]) -> Result<()> {
    writeln!(out, "shards,users_per_shard,per_shard_cost,total_cost,se_theta")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e}",
            r.shards, r.users_per_shard, r.per_shard_cost, r.total_cost, r.se_theta
        )?;
    }
    Ok(())
}
