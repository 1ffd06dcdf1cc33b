//! Review dataset ingestion, corpus statistics, and minimum-activity filters.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::date::Day;
use crate::error::{Error, Result};
use crate::extract::AgeMention;

/// One product review.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRecord {
    pub review_id: String,
    pub user_id: String,
    pub item_id: String,
    /// Star rating, 1..=5.
    pub rating: u8,
    pub date: Day,
    pub text: String,
    pub summary: String,
}

/// Wire format of one JSON-lines review record.
///
/// Field names follow the public Amazon review dumps. `reviewID` is optional
/// on input; a line-derived id is synthesized when absent.
#[derive(Debug, Serialize, Deserialize)]
struct RawReview {
    #[serde(rename = "reviewID", skip_serializing_if = "Option::is_none")]
    review_id: Option<String>,
    #[serde(rename = "reviewerID")]
    reviewer_id: String,
    asin: String,
    overall: f64,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: i64,
    #[serde(rename = "reviewText", default)]
    review_text: String,
    #[serde(default)]
    summary: String,
}

/// Streaming JSON-lines reader. Malformed lines are counted, not fatal.
pub struct ReviewReader {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    skipped: usize,
    path: PathBuf,
}

impl ReviewReader {
    pub fn open(path: &Path) -> Result<ReviewReader> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(ReviewReader {
            lines: BufReader::new(file).lines(),
            line_no: 0,
            skipped: 0,
            path: path.to_path_buf(),
        })
    }

    /// Lines skipped so far (malformed JSON, bad rating, bad timestamp).
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn parse_line(&mut self, line: &str) -> Option<ReviewRecord> {
        if line.trim().is_empty() {
            self.skipped += 1;
            return None;
        }
        let raw: RawReview = match serde_json::from_str(line) {
            Ok(raw) => raw,
            Err(_) => {
                self.skipped += 1;
                return None;
            }
        };
        // Ratings arrive as floats in the dumps; accept only integral 1..=5.
        let rating = raw.overall;
        if !(1.0..=5.0).contains(&rating) || rating.fract() != 0.0 {
            self.skipped += 1;
            return None;
        }
        let review_id = raw
            .review_id
            .unwrap_or_else(|| format!("r{:08}", self.line_no));
        Some(ReviewRecord {
            review_id,
            user_id: raw.reviewer_id,
            item_id: raw.asin,
            rating: rating as u8,
            date: Day::from_unix_seconds(raw.unix_review_time),
            text: raw.review_text,
            summary: raw.summary,
        })
    }
}

impl Iterator for ReviewReader {
    type Item = Result<ReviewRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if let Some(record) = self.parse_line(&line) {
                return Some(Ok(record));
            }
        }
    }
}

/// Result of loading a whole file at once.
#[derive(Debug)]
pub struct LoadOutcome {
    pub reviews: Vec<ReviewRecord>,
    pub skipped: usize,
}

/// Reads every parseable record from a JSON-lines file, preserving file order.
///
/// Fails if the file is unreadable or yields zero parseable records.
pub fn load_reviews(path: &Path) -> Result<LoadOutcome> {
    let mut reader = ReviewReader::open(path)?;
    let mut reviews = Vec::new();
    for record in &mut reader {
        reviews.push(record?);
    }
    if reviews.is_empty() {
        return Err(Error::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    Ok(LoadOutcome {
        reviews,
        skipped: reader.skipped(),
    })
}

/// Writes records as JSON lines in the same shape `load_reviews` accepts.
pub fn write_reviews(path: &Path, reviews: &[ReviewRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in reviews {
        let raw = RawReview {
            review_id: Some(r.review_id.clone()),
            reviewer_id: r.user_id.clone(),
            asin: r.item_id.clone(),
            overall: f64::from(r.rating),
            unix_review_time: r.date.to_unix_seconds(),
            review_text: r.text.clone(),
            summary: r.summary.clone(),
        };
        serde_json::to_writer(&mut out, &raw).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Corpus-level counts and averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_reviews: usize,
    pub n_items: usize,
    pub n_users: usize,
    pub n_users_with_possessives: usize,
    pub avg_reviews_per_item: f64,
    pub avg_terms_per_user: f64,
    pub avg_poss_terms_per_user: f64,
}

/// Counts distinct reviews/items/users and mention-term averages.
///
/// Averages are exact-count ratios over all distinct items/users in the
/// review set; empty inputs yield zeros.
pub fn corpus_stats(reviews: &[ReviewRecord], mentions: &[AgeMention]) -> CorpusStats {
    let mut review_ids = HashSet::new();
    let mut items = HashSet::new();
    let mut users = HashSet::new();
    for r in reviews {
        review_ids.insert(r.review_id.as_str());
        items.insert(r.item_id.as_str());
        users.insert(r.user_id.as_str());
    }
    let mut poss_users = HashSet::new();
    let mut n_poss_terms = 0usize;
    for m in mentions {
        if m.possessive {
            poss_users.insert(m.user_id.as_str());
            n_poss_terms += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    CorpusStats {
        n_reviews: review_ids.len(),
        n_items: items.len(),
        n_users: users.len(),
        n_users_with_possessives: poss_users.len(),
        avg_reviews_per_item: ratio(review_ids.len(), items.len()),
        avg_terms_per_user: ratio(mentions.len(), users.len()),
        avg_poss_terms_per_user: ratio(n_poss_terms, users.len()),
    }
}

/// Which id a mention is counted against, and in what unit.
///
/// Items count distinct mention-bearing reviews; users count mention terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Item,
    User,
}

/// Ids with at least `k` associated mentions, under the kind's counting unit.
pub fn filter_min_mentions(kind: EntityKind, mentions: &[AgeMention], k: usize) -> BTreeSet<String> {
    assert!(k >= 1, "threshold must be at least 1");
    match kind {
        EntityKind::Item => {
            let mut reviews_per_item: HashMap<&str, HashSet<&str>> = HashMap::new();
            for m in mentions {
                reviews_per_item
                    .entry(m.item_id.as_str())
                    .or_default()
                    .insert(m.review_id.as_str());
            }
            reviews_per_item
                .into_iter()
                .filter(|(_, reviews)| reviews.len() >= k)
                .map(|(id, _)| id.to_string())
                .collect()
        }
        EntityKind::User => {
            let mut terms_per_user: HashMap<&str, usize> = HashMap::new();
            for m in mentions {
                *terms_per_user.entry(m.user_id.as_str()).or_default() += 1;
            }
            terms_per_user
                .into_iter()
                .filter(|(_, count)| *count >= k)
                .map(|(id, _)| id.to_string())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::tests::mention;
    use proptest::prelude::*;
    use std::io::Write as _;

    fn write_temp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    const VALID_LINE: &str = r#"{"reviewerID":"A1","asin":"B001","overall":5,"unixReviewTime":1357516800,"reviewText":"Great.","summary":"ok"}"#;

    #[test]
    fn load_maps_fields() {
        let f = write_temp(&[VALID_LINE]);
        let out = load_reviews(f.path()).unwrap();
        assert_eq!(out.reviews.len(), 1);
        assert_eq!(out.skipped, 0);
        let r = &out.reviews[0];
        assert_eq!(r.user_id, "A1");
        assert_eq!(r.item_id, "B001");
        assert_eq!(r.rating, 5);
        assert_eq!(r.date.to_string(), "2013-01-07");
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        match load_reviews(f.path()) {
            Err(Error::EmptyCorpus { .. }) => {}
            other => panic!("expected empty-corpus error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_skipped_and_counted() {
        let f = write_temp(&[VALID_LINE, "{not json"]);
        let out = load_reviews(f.path()).unwrap();
        assert_eq!(out.reviews.len(), 1);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn out_of_range_rating_is_skipped() {
        let bad = r#"{"reviewerID":"A1","asin":"B001","overall":4.5,"unixReviewTime":0,"reviewText":"","summary":""}"#;
        let f = write_temp(&[VALID_LINE, bad]);
        let out = load_reviews(f.path()).unwrap();
        assert_eq!(out.reviews.len(), 1);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        match load_reviews(Path::new("/nonexistent/reviews.jsonl")) {
            Err(Error::Io { .. }) => {}
            other => panic!("expected i/o error, got {other:?}"),
        }
    }

    #[test]
    fn stats_examples() {
        // 2 items with 3 and 5 reviews -> avg 4.0
        let mut reviews = Vec::new();
        for i in 0..3 {
            reviews.push(ReviewRecord {
                review_id: format!("ra{i}"),
                user_id: format!("u{i}"),
                item_id: "item-a".into(),
                rating: 5,
                date: Day(0),
                text: String::new(),
                summary: String::new(),
            });
        }
        for i in 0..5 {
            reviews.push(ReviewRecord {
                review_id: format!("rb{i}"),
                user_id: format!("u{i}"),
                item_id: "item-b".into(),
                rating: 4,
                date: Day(0),
                text: String::new(),
                summary: String::new(),
            });
        }
        let stats = corpus_stats(&reviews, &[]);
        assert_eq!(stats.n_reviews, 8);
        assert_eq!(stats.n_items, 2);
        assert_eq!(stats.n_users, 5);
        assert_eq!(stats.avg_reviews_per_item, 4.0);
        assert_eq!(stats.n_users_with_possessives, 0);
        assert_eq!(stats.avg_poss_terms_per_user, 0.0);
    }

    #[test]
    fn stats_count_possessive_users() {
        let reviews = vec![ReviewRecord {
            review_id: "r1".into(),
            user_id: "u1".into(),
            item_id: "i1".into(),
            rating: 5,
            date: Day(0),
            text: String::new(),
            summary: String::new(),
        }];
        let mentions = vec![
            mention("r1", "u1", "i1", 2.0, true, 5, Day(0)),
            mention("r1", "u1", "i1", 1.0, false, 5, Day(0)),
        ];
        let stats = corpus_stats(&reviews, &mentions);
        assert_eq!(stats.n_users_with_possessives, 1);
        assert_eq!(stats.avg_terms_per_user, 2.0);
        assert_eq!(stats.avg_poss_terms_per_user, 1.0);
    }

    #[test]
    fn filter_counts_reviews_for_items() {
        // item with 3 mention-bearing reviews is excluded at k=4, even though
        // those reviews carry 5 mentions in total
        let mentions = vec![
            mention("r1", "u1", "i1", 1.0, false, 5, Day(0)),
            mention("r1", "u1", "i1", 2.0, false, 5, Day(0)),
            mention("r2", "u2", "i1", 1.0, false, 5, Day(0)),
            mention("r2", "u2", "i1", 2.0, false, 5, Day(0)),
            mention("r3", "u3", "i1", 1.0, false, 5, Day(0)),
        ];
        assert!(filter_min_mentions(EntityKind::Item, &mentions, 4).is_empty());
        assert_eq!(
            filter_min_mentions(EntityKind::Item, &mentions, 3),
            BTreeSet::from(["i1".to_string()])
        );
    }

    #[test]
    fn filter_counts_terms_for_users_boundary_inclusive() {
        let mentions: Vec<_> = (0..4)
            .map(|i| mention(&format!("r{i}"), "u1", "i1", 1.0, false, 5, Day(0)))
            .collect();
        assert_eq!(
            filter_min_mentions(EntityKind::User, &mentions, 4),
            BTreeSet::from(["u1".to_string()])
        );
        assert!(filter_min_mentions(EntityKind::User, &mentions, 5).is_empty());
    }

    #[test]
    fn filter_empty_mentions() {
        assert!(filter_min_mentions(EntityKind::Item, &[], 1).is_empty());
    }

    #[test]
    fn roundtrip_identity() {
        let f = write_temp(&[VALID_LINE]);
        let original = load_reviews(f.path()).unwrap().reviews;
        let out = tempfile::NamedTempFile::new().unwrap();
        write_reviews(out.path(), &original).unwrap();
        let reloaded = load_reviews(out.path()).unwrap().reviews;
        assert_eq!(original, reloaded);
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary_records(
            texts in proptest::collection::vec("[^\\p{Cc}]{0,40}", 1..8),
            ratings in proptest::collection::vec(1u8..=5, 8),
            days in proptest::collection::vec(0i64..20_000, 8),
        ) {
            let reviews: Vec<ReviewRecord> = texts
                .iter()
                .enumerate()
                .map(|(i, text)| ReviewRecord {
                    review_id: format!("r{i}"),
                    user_id: format!("user{i}"),
                    item_id: format!("item{}", i % 3),
                    rating: ratings[i],
                    date: Day(days[i]),
                    text: text.clone(),
                    summary: String::new(),
                })
                .collect();
            let out = tempfile::NamedTempFile::new().unwrap();
            write_reviews(out.path(), &reviews).unwrap();
            let reloaded = load_reviews(out.path()).unwrap();
            prop_assert_eq!(reloaded.reviews, reviews);
            prop_assert_eq!(reloaded.skipped, 0);
        }

        #[test]
        fn filter_is_monotone_in_k(
            counts in proptest::collection::vec(1usize..6, 1..10),
            k in 1usize..5,
        ) {
            let mut mentions = Vec::new();
            for (u, n) in counts.iter().enumerate() {
                for t in 0..*n {
                    mentions.push(mention(
                        &format!("r{u}-{t}"),
                        &format!("u{u}"),
                        "i1",
                        1.0,
                        false,
                        5,
                        Day(0),
                    ));
                }
            }
            let lower = filter_min_mentions(EntityKind::User, &mentions, k);
            let higher = filter_min_mentions(EntityKind::User, &mentions, k + 1);
            prop_assert!(higher.is_subset(&lower));
        }

        #[test]
        fn stats_invariant_under_reordering(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut reviews: Vec<ReviewRecord> = (0..12)
                .map(|i| ReviewRecord {
                    review_id: format!("r{i}"),
                    user_id: format!("u{}", i % 5),
                    item_id: format!("i{}", i % 3),
                    rating: 1 + (i % 5) as u8,
                    date: Day(i),
                    text: String::new(),
                    summary: String::new(),
                })
                .collect();
            let before = corpus_stats(&reviews, &[]);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            reviews.shuffle(&mut rng);
            prop_assert_eq!(corpus_stats(&reviews, &[]), before);
        }
    }
}
