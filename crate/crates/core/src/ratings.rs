//! Sparse ordinal rating matrix with dual row/column indexes.

use crate::error::{Error, Result};
use std::collections::HashSet;
use std::fmt;
use std::io::Write;

/// An ordinal rating on the 1-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rating(u8);

impl Rating {
    pub const MIN: Rating = Rating(1);
    pub const MAX: Rating = Rating(5);
    pub const ALL: [Rating; 5] = [Rating(1), Rating(2), Rating(3), Rating(4), Rating(5)];

    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(Rating(value))
        } else {
            Err(Error::domain(format!("rating {value} outside 1..=5")))
        }
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based category index (rating 1 -> 0).
    #[inline]
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    /// Probit-scale bracket `(lo, hi]` mapped to this rating.
    #[inline]
    pub fn bracket(self) -> (f64, f64) {
        match self.0 {
            1 => (f64::NEG_INFINITY, 1.0),
            5 => (4.0, f64::INFINITY),
            x => ((x - 1) as f64, x as f64),
        }
    }
}

impl TryFrom<u8> for Rating {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Rating::new(value)
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub user: usize,
    pub item: usize,
    pub rating: Rating,
}

/// Observed ratings of `m` users on `n` items.
///
/// Entries are stored once; `rows[u]` and `cols[i]` hold indexes into
/// `entries`, so both views always describe the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    m: usize,
    n: usize,
    entries: Vec<Entry>,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl RatingMatrix {
    pub fn new(m: usize, n: usize, entries: Vec<Entry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut rows = vec![Vec::new(); m];
        let mut cols = vec![Vec::new(); n];
        for (idx, e) in entries.iter().enumerate() {
            if e.user >= m {
                return Err(Error::Index { what: "user", index: e.user, bound: m });
            }
            if e.item >= n {
                return Err(Error::Index { what: "item", index: e.item, bound: n });
            }
            if !seen.insert((e.user, e.item)) {
                return Err(Error::domain(format!(
                    "duplicate rating for user {} item {}",
                    e.user, e.item
                )));
            }
            rows[e.user].push(idx);
            cols[e.item].push(idx);
        }
        Ok(RatingMatrix { m, n, entries, rows, cols })
    }

    /// Builds from `(user, item, rating)` triples with zero-based indexes.
    pub fn from_triples(m: usize, n: usize, triples: &[(usize, usize, u8)]) -> Result<Self> {
        let entries = triples
            .iter()
            .map(|&(user, item, r)| Ok(Entry { user, item, rating: Rating::new(r)? }))
            .collect::<Result<Vec<_>>>()?;
        RatingMatrix::new(m, n, entries)
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn items(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, idx: usize) -> &Entry {
        &self.entries[idx]
    }

    /// Entry indexes observed for user `u`.
    #[inline]
    pub fn row(&self, u: usize) -> &[usize] {
        &self.rows[u]
    }

    /// Entry indexes observed for item `i`.
    #[inline]
    pub fn col(&self, i: usize) -> &[usize] {
        &self.cols[i]
    }

    /// `(item, rating)` pairs for user `u`.
    pub fn row_ratings(&self, u: usize) -> impl Iterator<Item = (usize, Rating)> + '_ {
        self.rows[u].iter().map(move |&e| (self.entries[e].item, self.entries[e].rating))
    }

    /// `(user, rating)` pairs for item `i`.
    pub fn col_ratings(&self, i: usize) -> impl Iterator<Item = (usize, Rating)> + '_ {
        self.cols[i].iter().map(move |&e| (self.entries[e].user, self.entries[e].rating))
    }

    pub fn get(&self, u: usize, i: usize) -> Option<Rating> {
        self.row_ratings(u).find(|&(item, _)| item == i).map(|(_, r)| r)
    }

    /// Restriction to the given users (re-indexed in the order given),
    /// keeping every item.
    pub fn restrict_users(&self, users: &[usize]) -> Result<RatingMatrix> {
        let mut entries = Vec::new();
        for (local, &u) in users.iter().enumerate() {
            if u >= self.m {
                return Err(Error::Index { what: "user", index: u, bound: self.m });
            }
            for &e in &self.rows[u] {
                entries.push(Entry { user: local, ..self.entries[e] });
            }
        }
        RatingMatrix::new(users.len(), self.n, entries)
    }

    /// Writes `user,item,rating` CSV with 1-based ids, in entry order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user,item,rating")?;
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.user + 1, e.item + 1, e.rating)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_and_column_views_agree() {
        let r = RatingMatrix::from_triples(3, 4, &[(0, 1, 5), (2, 1, 3), (2, 3, 1), (1, 0, 2)]).unwrap();
        let mut from_rows: Vec<_> = (0..3).flat_map(|u| r.row_ratings(u).map(move |(i, x)| (u, i, x))).collect();
        let mut from_cols: Vec<_> = (0..4).flat_map(|i| r.col_ratings(i).map(move |(u, x)| (u, i, x))).collect();
        from_rows.sort();
        from_cols.sort();
        assert_eq!(from_rows, from_cols);
        assert_eq!(r.get(2, 3), Some(Rating::MIN));
        assert_eq!(r.get(0, 0), None);
    }

    #[test]
    fn rejects_duplicates_and_bad_indexes() {
        assert!(RatingMatrix::from_triples(2, 2, &[(0, 0, 3), (0, 0, 4)]).is_err());
        assert!(matches!(
            RatingMatrix::from_triples(2, 2, &[(2, 0, 3)]),
            Err(Error::Index { what: "user", .. })
        ));
        assert!(RatingMatrix::from_triples(2, 2, &[(0, 0, 6)]).is_err());
        assert!(Rating::new(0).is_err());
    }

    #[test]
    fn restriction_reindexes_users() {
        let r = RatingMatrix::from_triples(3, 2, &[(0, 0, 1), (1, 1, 2), (2, 0, 3)]).unwrap();
        let s = r.restrict_users(&[2, 0]).unwrap();
        assert_eq!(s.users(), 2);
        assert_eq!(s.items(), 2);
        assert_eq!(s.get(0, 0).map(Rating::value), Some(3));
        assert_eq!(s.get(1, 0).map(Rating::value), Some(1));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn brackets_follow_half_open_convention() {
        assert_eq!(Rating::new(1).unwrap().bracket(), (f64::NEG_INFINITY, 1.0));
        assert_eq!(Rating::new(3).unwrap().bracket(), (2.0, 3.0));
        assert_eq!(Rating::new(5).unwrap().bracket(), (4.0, f64::INFINITY));
    }
}
