//! Ratings CSV ingestion with dense re-indexing and optional filters.

use anyhow::{anyhow, bail, Context};
use dfa_core::{Entry, Rating, RatingMatrix};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Filters {
    /// Keep only the `n` most-rated items (ties to the smaller id).
    pub top_items: Option<usize>,
    /// Then keep only users with at least this many remaining ratings.
    pub min_user_ratings: Option<usize>,
}

/// A re-indexed rating matrix with the original ids of its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ratings: RatingMatrix,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

struct Raw {
    line: usize,
    user: u64,
    item: u64,
    rating: Rating,
}

fn parse_lines<R: BufRead>(input: R) -> anyhow::Result<Vec<Raw>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("user")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            bail!("line {line_no}: expected user,item,rating");
        }
        let id = |s: &str, what: &str| -> anyhow::Result<u64> {
            let v: u64 = s.parse().map_err(|_| anyhow!("line {line_no}: invalid {what} id {s:?}"))?;
            if v == 0 {
                bail!("line {line_no}: {what} ids are 1-based");
            }
            Ok(v)
        };
        let (user, item) = (id(fields[0], "user")?, id(fields[1], "item")?);
        let value: u8 = fields[2].parse().map_err(|_| anyhow!("line {line_no}: invalid rating {:?}", fields[2]))?;
        let rating = Rating::new(value).map_err(|_| anyhow!("line {line_no}: rating {value} outside 1-5"))?;
        out.push(Raw { line: line_no, user, item, rating });
    }
    Ok(out)
}

pub fn ingest<R: BufRead>(input: R, filters: Filters) -> anyhow::Result<Dataset> {
    let mut raw = parse_lines(input)?;
    let mut seen = HashMap::new();
    for r in &raw {
        if let Some(first) = seen.insert((r.user, r.item), r.line) {
            bail!("line {}: duplicate rating for user {} item {} (first on line {first})", r.line, r.user, r.item);
        }
    }
    if let Some(n) = filters.top_items {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for r in &raw {
            *counts.entry(r.item).or_default() += 1;
        }
        let mut items: Vec<(u64, usize)> = counts.into_iter().collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep: HashMap<u64, ()> = items.into_iter().take(n).map(|(i, _)| (i, ())).collect();
        raw.retain(|r| keep.contains_key(&r.item));
    }
    if let Some(min) = filters.min_user_ratings {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for r in &raw {
            *counts.entry(r.user).or_default() += 1;
        }
        raw.retain(|r| counts[&r.user] >= min);
    }
    if raw.is_empty() {
        bail!("no ratings left after reading and filtering");
    }
    let index = |ids: Vec<u64>| -> (Vec<u64>, HashMap<u64, usize>) {
        let mut ids = ids;
        ids.sort_unstable();
        ids.dedup();
        let map = ids.iter().enumerate().map(|(d, &o)| (o, d)).collect();
        (ids, map)
    };
    let (user_ids, users) = index(raw.iter().map(|r| r.user).collect());
    let (item_ids, items) = index(raw.iter().map(|r| r.item).collect());
    let entries = raw
        .iter()
        .map(|r| Entry { user: users[&r.user], item: items[&r.item], rating: r.rating })
        .collect();
    let ratings = RatingMatrix::new(user_ids.len(), item_ids.len(), entries)?;
    Ok(Dataset { ratings, user_ids, item_ids })
}

pub fn ingest_path(path: &Path, filters: Filters) -> anyhow::Result<Dataset> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    ingest(std::io::BufReader::new(file), filters).with_context(|| format!("reading {}", path.display()))
}

/// Reads an already dense, 1-based ratings file of known shape.
pub fn read_dense(path: &Path, users: usize, items: usize) -> anyhow::Result<RatingMatrix> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let raw = parse_lines(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::with_capacity(raw.len());
    for r in raw {
        if r.user as usize > users || r.item as usize > items {
            bail!("{}: line {}: id outside the {users}x{items} model", path.display(), r.line);
        }
        entries.push(Entry { user: r.user as usize - 1, item: r.item as usize - 1, rating: r.rating });
    }
    Ok(RatingMatrix::new(users, items, entries)?)
}

/// `(user, item, rating)` triples with their ids as written.
pub fn read_triples(path: &Path) -> anyhow::Result<Vec<(u64, u64, Rating)>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let raw = parse_lines(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    Ok(raw.into_iter().map(|r| (r.user, r.item, r.rating)).collect())
}

/// `kind,dense,original` rows mapping dense 1-based ids back to the input.
pub fn write_index<W: Write>(mut out: W, data: &Dataset) -> std::io::Result<()> {
    writeln!(out, "kind,dense,original")?;
    for (d, o) in data.user_ids.iter().enumerate() {
        writeln!(out, "user,{},{o}", d + 1)?;
    }
    for (d, o) in data.item_ids.iter().enumerate() {
        writeln!(out, "item,{},{o}", d + 1)?;
    }
    Ok(())
}
