//! Per-item target age ranges from mention subsets with outlier removal.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{filter_min_mentions, EntityKind};
use crate::error::{Error, Result};
use crate::extract::{group_by, AgeMention};

/// Which mention subset feeds an item's age range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetStrategy {
    /// Every mention on the item.
    All,
    /// Mentions from reviews rated above 3.
    RatingBased,
    /// Mentions carrying a possessive pronoun.
    Possessive,
    /// Positively rated and possessive.
    RatingPossessive,
}

impl SubsetStrategy {
    pub const ALL: [SubsetStrategy; 4] = [
        SubsetStrategy::All,
        SubsetStrategy::RatingBased,
        SubsetStrategy::Possessive,
        SubsetStrategy::RatingPossessive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubsetStrategy::All => "all",
            SubsetStrategy::RatingBased => "rating",
            SubsetStrategy::Possessive => "poss",
            SubsetStrategy::RatingPossessive => "rating-poss",
        }
    }

    pub fn parse(s: &str) -> Result<SubsetStrategy> {
        match s {
            "all" => Ok(SubsetStrategy::All),
            "rating" => Ok(SubsetStrategy::RatingBased),
            "poss" => Ok(SubsetStrategy::Possessive),
            "rating-poss" => Ok(SubsetStrategy::RatingPossessive),
            other => Err(Error::config(format!(
                "unknown strategy `{other}` (expected all|rating|poss|rating-poss)"
            ))),
        }
    }

    fn admits(self, mention: &AgeMention) -> bool {
        match self {
            SubsetStrategy::All => true,
            SubsetStrategy::RatingBased => mention.rating > 3,
            SubsetStrategy::Possessive => mention.possessive,
            SubsetStrategy::RatingPossessive => mention.rating > 3 && mention.possessive,
        }
    }
}

/// Target age range of one item under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAgeProfile {
    pub item_id: String,
    pub strategy: SubsetStrategy,
    pub low_years: f64,
    pub high_years: f64,
    pub n_mentions_used: usize,
    pub n_outliers_removed: usize,
}

impl ItemAgeProfile {
    pub fn contains(&self, age_years: f64) -> bool {
        self.low_years <= age_years && age_years <= self.high_years
    }

    /// Range midpoint, the single-number item age used by drift analysis.
    pub fn midpoint(&self) -> f64 {
        (self.low_years + self.high_years) / 2.0
    }
}

/// Mention values (in years) admitted by the strategy, order preserved.
pub fn select_mentions(mentions: &[&AgeMention], strategy: SubsetStrategy) -> Vec<f64> {
    mentions
        .iter()
        .filter(|m| strategy.admits(m))
        .map(|m| m.value_years)
        .collect()
}

/// Percentile of a sorted slice under the linear-interpolation definition:
/// rank = p * (n - 1), interpolating between the two closest order statistics.
///
/// Golden files depend on this exact definition.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&p), "percentile out of [0,1]");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Outlier fence parameters: low/high percentiles and the fence multiplier.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TukeyParams {
    pub p_low: f64,
    pub p_high: f64,
    pub fence_k: f64,
}

impl Default for TukeyParams {
    fn default() -> Self {
        TukeyParams {
            p_low: 0.05,
            p_high: 0.95,
            fence_k: 1.5,
        }
    }
}

/// Removes values outside the fences built from the low/high percentiles:
/// keep v with L - k*(H-L) <= v <= H + k*(H-L). Order is preserved; with
/// `fence_k = 0` this clips to the percentile interval itself.
pub fn tukey_filter(values: &[f64], params: &TukeyParams) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let low = percentile_sorted(&sorted, params.p_low);
    let high = percentile_sorted(&sorted, params.p_high);
    let spread = high - low;
    let lower_fence = low - params.fence_k * spread;
    let upper_fence = high + params.fence_k * spread;
    values
        .iter()
        .copied()
        .filter(|v| (lower_fence..=upper_fence).contains(v))
        .collect()
}

/// Min/max of the retained values; `None` when nothing survived.
pub fn target_age_range(retained: &[f64]) -> Option<(f64, f64)> {
    if retained.is_empty() {
        return None;
    }
    let mut low = f64::INFINITY;
    let mut high = f64::NEG_INFINITY;
    for &v in retained {
        low = low.min(v);
        high = high.max(v);
    }
    Some((low, high))
}

/// Builds one profile per item under `strategy`.
///
/// Items need at least `min_reviews` distinct mention-bearing reviews; items
/// whose selected subset comes up empty are skipped.
pub fn profile_items(
    mentions: &[AgeMention],
    strategy: SubsetStrategy,
    min_reviews: usize,
    params: &TukeyParams,
) -> BTreeMap<String, ItemAgeProfile> {
    let eligible = filter_min_mentions(EntityKind::Item, mentions, min_reviews);
    let by_item = group_by(mentions, |m| m.item_id.clone());
    let profiles: Vec<(String, ItemAgeProfile)> = by_item
        .into_iter()
        .filter(|(item_id, _)| eligible.contains(item_id))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(item_id, group)| {
            profile_one_item(&item_id, &group, strategy, params).map(|p| (item_id, p))
        })
        .collect();
    profiles.into_iter().collect()
}

fn profile_one_item(
    item_id: &str,
    mentions: &[&AgeMention],
    strategy: SubsetStrategy,
    params: &TukeyParams,
) -> Option<ItemAgeProfile> {
    let selected = select_mentions(mentions, strategy);
    if selected.is_empty() {
        return None;
    }
    let retained = tukey_filter(&selected, params);
    let (low, high) = target_age_range(&retained)?;
    Some(ItemAgeProfile {
        item_id: item_id.to_string(),
        strategy,
        low_years: low,
        high_years: high,
        n_mentions_used: retained.len(),
        n_outliers_removed: selected.len() - retained.len(),
    })
}

/// Serialized shape of one profile record.
#[derive(Debug, Serialize, Deserialize)]
struct ProfileRecord {
    item_id: String,
    strategy: SubsetStrategy,
    low_years: f64,
    high_years: f64,
    n_used: usize,
    n_removed: usize,
}

pub fn write_item_profiles(path: &Path, profiles: &BTreeMap<String, ItemAgeProfile>) -> Result<()> {
    let records: Vec<ProfileRecord> = profiles
        .values()
        .map(|p| ProfileRecord {
            item_id: p.item_id.clone(),
            strategy: p.strategy,
            low_years: p.low_years,
            high_years: p.high_years,
            n_used: p.n_mentions_used,
            n_removed: p.n_outliers_removed,
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_item_profiles(path: &Path) -> Result<BTreeMap<String, ItemAgeProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<ProfileRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad profile file: {e}")))?;
    Ok(records
        .into_iter()
        .map(|r| {
            (
                r.item_id.clone(),
                ItemAgeProfile {
                    item_id: r.item_id,
                    strategy: r.strategy,
                    low_years: r.low_years,
                    high_years: r.high_years,
                    n_mentions_used: r.n_used,
                    n_outliers_removed: r.n_removed,
                },
            )
        })
        .collect())
}
