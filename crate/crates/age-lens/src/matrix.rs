//! Sparse user-item rating matrix with id index maps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ReviewRecord;
use crate::date::Day;
use crate::error::{Error, Result};

/// One (user, item, rating, date) interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub user_id: String,
    pub item_id: String,
    pub rating: u8,
    pub date: Day,
}

/// Sparse ratings with dense integer indices for users and items.
///
/// Indices are assigned in sorted id order, so the matrix layout is
/// independent of input row order. Duplicate (user, item) pairs collapse to
/// the entry with the greatest (date, rating).
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
    rows: Vec<Vec<(u32, f64)>>,
    cols: Vec<Vec<(u32, f64)>>,
    n_ratings: usize,
}

impl RatingMatrix {
    pub fn from_ratings(ratings: &[Rating]) -> RatingMatrix {
        let mut dedup: BTreeMap<(&str, &str), &Rating> = BTreeMap::new();
        for r in ratings {
            dedup
                .entry((r.user_id.as_str(), r.item_id.as_str()))
                .and_modify(|kept| {
                    if (r.date, r.rating) > (kept.date, kept.rating) {
                        *kept = r;
                    }
                })
                .or_insert(r);
        }

        let users: BTreeSet<&str> = dedup.keys().map(|(u, _)| *u).collect();
        let items: BTreeSet<&str> = dedup.keys().map(|(_, i)| *i).collect();
        let user_ids: Vec<String> = users.into_iter().map(str::to_string).collect();
        let item_ids: Vec<String> = items.into_iter().map(str::to_string).collect();
        let user_index: BTreeMap<String, usize> = user_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let item_index: BTreeMap<String, usize> = item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();

        let mut rows = vec![Vec::new(); user_ids.len()];
        let mut cols = vec![Vec::new(); item_ids.len()];
        let mut n_ratings = 0;
        for ((u, i), r) in dedup {
            let ui = user_index[u];
            let ii = item_index[i];
            rows[ui].push((ii as u32, f64::from(r.rating)));
            cols[ii].push((ui as u32, f64::from(r.rating)));
            n_ratings += 1;
        }
        // BTreeMap iteration already yields rows sorted by (user, item) and
        // therefore sorted row entries; columns need an explicit sort
        for col in &mut cols {
            col.sort_by_key(|(u, _)| *u);
        }

        RatingMatrix {
            user_ids,
            item_ids,
            user_index,
            item_index,
            rows,
            cols,
            n_ratings,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.n_ratings
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_index.get(item_id).copied()
    }

    pub fn user_id(&self, index: usize) -> &str {
        &self.user_ids[index]
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.item_ids[index]
    }

    /// Ratings of one user as sorted (item index, rating) pairs.
    pub fn row(&self, user: usize) -> &[(u32, f64)] {
        &self.rows[user]
    }

    /// Ratings on one item as sorted (user index, rating) pairs.
    pub fn col(&self, item: usize) -> &[(u32, f64)] {
        &self.cols[item]
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&(item as u32), |(i, _)| *i)
            .ok()
            .map(|pos| row[pos].1)
    }

    /// Mean of the user's ratings; zero for a user with no ratings.
    pub fn user_mean(&self, user: usize) -> f64 {
        let row = &self.rows[user];
        if row.is_empty() {
            return 0.0;
        }
        row.iter().map(|(_, r)| r).sum::<f64>() / row.len() as f64
    }
}

/// Reads a `user_id,item_id,rating,timestamp` CSV; a header row is optional.
pub fn load_ratings_csv(path: &Path) -> Result<Vec<Rating>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut ratings = Vec::new();
    for (no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if record.len() != 4 {
            return Err(Error::Data(format!(
                "{}:{}: expected 4 columns, got {}",
                path.display(),
                no + 1,
                record.len()
            )));
        }
        if no == 0 && record[0].eq_ignore_ascii_case("user_id") {
            continue;
        }
        let rating: u8 = record[2]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("{}:{}: bad rating", path.display(), no + 1)))?;
        if !(1..=5).contains(&rating) {
            return Err(Error::Data(format!(
                "{}:{}: rating out of 1..=5",
                path.display(),
                no + 1
            )));
        }
        let secs: i64 = record[3]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("{}:{}: bad timestamp", path.display(), no + 1)))?;
        ratings.push(Rating {
            user_id: record[0].to_string(),
            item_id: record[1].to_string(),
            rating,
            date: Day::from_unix_seconds(secs),
        });
    }
    Ok(ratings)
}

pub fn write_ratings_csv(path: &Path, ratings: &[Rating]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["user_id", "item_id", "rating", "timestamp"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in ratings {
        writer
            .write_record([
                r.user_id.as_str(),
                r.item_id.as_str(),
                &r.rating.to_string(),
                &r.date.to_unix_seconds().to_string(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Collapses duplicate (user, item) pairs with the same rule the matrix
/// uses: keep the entry with the greatest (date, rating).
pub fn dedupe_ratings(ratings: &[Rating]) -> Vec<Rating> {
    let mut dedup: BTreeMap<(&str, &str), &Rating> = BTreeMap::new();
    for r in ratings {
        dedup
            .entry((r.user_id.as_str(), r.item_id.as_str()))
            .and_modify(|kept| {
                if (r.date, r.rating) > (kept.date, kept.rating) {
                    *kept = r;
                }
            })
            .or_insert(r);
    }
    dedup.into_values().cloned().collect()
}

/// Projects reviews down to their rating interactions.
pub fn ratings_from_reviews(reviews: &[ReviewRecord]) -> Vec<Rating> {
    reviews
        .iter()
        .map(|r| Rating {
            user_id: r.user_id.clone(),
            item_id: r.item_id.clone(),
            rating: r.rating,
            date: r.date,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(u: &str, i: &str, r: u8, day: i64) -> Rating {
        Rating {
            user_id: u.into(),
            item_id: i.into(),
            rating: r,
            date: Day(day),
        }
    }

    #[test]
    fn build_indexes_by_sorted_id() {
        let m = RatingMatrix::from_ratings(&[
            rating("ub", "i2", 4, 0),
            rating("ua", "i1", 5, 0),
            rating("ub", "i1", 3, 1),
        ]);
        assert_eq!(m.n_users(), 2);
        assert_eq!(m.n_items(), 2);
        assert_eq!(m.n_ratings(), 3);
        assert_eq!(m.user_id(0), "ua");
        assert_eq!(m.item_id(1), "i2");
        assert_eq!(m.rating(1, 0), Some(3.0));
        assert_eq!(m.rating(0, 1), None);
        assert_eq!(m.user_mean(1), 3.5);
    }

    #[test]
    fn duplicates_keep_latest() {
        let m = RatingMatrix::from_ratings(&[
            rating("u", "i", 2, 5),
            rating("u", "i", 5, 9),
            rating("u", "i", 3, 1),
        ]);
        assert_eq!(m.n_ratings(), 1);
        assert_eq!(m.rating(0, 0), Some(5.0));
    }

    #[test]
    fn build_is_order_invariant() {
        let mut ratings = vec![
            rating("u1", "i1", 5, 0),
            rating("u2", "i1", 3, 2),
            rating("u1", "i2", 4, 1),
        ];
        let a = RatingMatrix::from_ratings(&ratings);
        ratings.reverse();
        let b = RatingMatrix::from_ratings(&ratings);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.cols, b.cols);
    }

    #[test]
    fn csv_roundtrip() {
        let ratings = vec![rating("u1", "i1", 5, 86_400), rating("u2", "i2", 1, 0)];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_ratings_csv(f.path(), &ratings).unwrap();
        let back = load_ratings_csv(f.path()).unwrap();
        assert_eq!(back, ratings);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "u1,i1,9,0\n").unwrap();
        assert!(load_ratings_csv(f.path()).is_err());
    }
}
