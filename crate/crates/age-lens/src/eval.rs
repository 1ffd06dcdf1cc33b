//! Temporal splitting, ranking metrics, drift analysis, and the experiment
//! grid comparing raw engines against their age-post-filtered counterparts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ReviewRecord;
use crate::date::Day;
use crate::error::{Error, Result};
use crate::extract::{extract_corpus, load_mentions, AgeMention, ExtractOptions};
use crate::item_profile::{
    load_item_profiles, profile_items, ItemAgeProfile, SubsetStrategy, TukeyParams,
};
use crate::lexicon::UnitLexicon;
use crate::matrix::{dedupe_ratings, load_ratings_csv, ratings_from_reviews, Rating, RatingMatrix};
use crate::recommend::{post_filter, EngineKind, ItemSimilarities, Recommender};
use crate::user_profile::{
    build_user_models, load_user_models, preferred_model, ModelVariant, UserAgeModel,
};

/// Per-user chronological train/test partition.
#[derive(Debug, Clone)]
pub struct TemporalSplit {
    pub train: Vec<Rating>,
    pub test: Vec<Rating>,
    /// Date of each user's first held-out rating; absent for all-train users.
    pub cuts: BTreeMap<String, Day>,
    pub train_fraction: f64,
}

impl TemporalSplit {
    /// A review dated strictly before the user's cut (or belonging to a user
    /// with no test data) is on the training side.
    pub fn is_train_side(&self, user_id: &str, date: Day) -> bool {
        match self.cuts.get(user_id) {
            Some(cut) => date < *cut,
            None => true,
        }
    }
}

/// Splits each user's ratings chronologically: the first
/// ceil(train_fraction * count) go to train, the rest to test. Users with
/// fewer than two ratings stay entirely in train.
pub fn temporal_split(ratings: &[Rating], train_fraction: f64) -> Result<TemporalSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction must lie in (0, 1)"));
    }
    let mut by_user: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
    for r in ratings {
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut cuts = BTreeMap::new();
    for (user, mut rows) in by_user {
        rows.sort_by(|a, b| a.date.cmp(&b.date).then(a.item_id.cmp(&b.item_id)));
        let n_train = if rows.len() < 2 {
            rows.len()
        } else {
            ceil_fraction(train_fraction, rows.len()).min(rows.len())
        };
        if n_train < rows.len() {
            cuts.insert(user.to_string(), rows[n_train].date);
        }
        for (idx, r) in rows.into_iter().enumerate() {
            if idx < n_train {
                train.push(r.clone());
            } else {
                test.push(r.clone());
            }
        }
    }
    Ok(TemporalSplit {
        train,
        test,
        cuts,
        train_fraction,
    })
}

/// ceil(fraction * count), guarding against float artifacts on exact
/// products (0.8 * 5 must be 4, not 5).
fn ceil_fraction(fraction: f64, count: usize) -> usize {
    let raw = fraction * count as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Confirms every mention feeding the profiles sits on the training side of
/// the split.
pub fn verify_no_leakage(mentions: &[AgeMention], split: &TemporalSplit) -> Result<()> {
    for m in mentions {
        if !split.is_train_side(&m.user_id, m.date) {
            return Err(Error::Leakage {
                review_id: m.review_id.clone(),
                user_id: m.user_id.clone(),
                date: m.date,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

fn hits_in_top(recs: &[&str], relevant: &BTreeSet<&str>, n: usize) -> usize {
    recs.iter().take(n).filter(|id| relevant.contains(*id)).count()
}

/// Fraction of the n slots holding relevant items (denominator is n even
/// for short lists).
pub fn precision_at(recs: &[&str], relevant: &BTreeSet<&str>, n: usize) -> f64 {
    assert!(n >= 1);
    if relevant.is_empty() {
        return 0.0;
    }
    hits_in_top(recs, relevant, n) as f64 / n as f64
}

/// Fraction of relevant items retrieved in the top n; zero when nothing is
/// relevant.
pub fn recall_at(recs: &[&str], relevant: &BTreeSet<&str>, n: usize) -> f64 {
    assert!(n >= 1);
    if relevant.is_empty() {
        return 0.0;
    }
    hits_in_top(recs, relevant, n) as f64 / relevant.len() as f64
}

/// Mean of precision at each hit rank, normalized by min(n, |relevant|).
pub fn map_at(recs: &[&str], relevant: &BTreeSet<&str>, n: usize) -> f64 {
    assert!(n >= 1);
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (idx, id) in recs.iter().take(n).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (idx + 1) as f64;
        }
    }
    sum / n.min(relevant.len()) as f64
}

/// Binary-gain NDCG with 1/log2(rank+1) discounts; the ideal list has all
/// relevant items first.
pub fn ndcg_at(recs: &[&str], relevant: &BTreeSet<&str>, n: usize) -> f64 {
    assert!(n >= 1);
    if relevant.is_empty() {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = recs
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(idx, _)| discount(idx + 1))
        .sum();
    let ideal: f64 = (1..=n.min(relevant.len())).map(discount).sum();
    dcg / ideal
}

// ---------------------------------------------------------------------------
// Drift series
// ---------------------------------------------------------------------------

/// Mean item-age delta for one (bucket, source) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStat {
    pub delta_years: f64,
    pub n_users: usize,
}

/// One date bucket of the drift series: the test-vs-train item-age delta
/// plus the same delta for each recommender's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    /// `YYYY-MM` of the users' split-cut dates.
    pub bucket: String,
    pub sources: BTreeMap<String, DriftStat>,
}

/// Per-user mean estimated item age (profile midpoints); `None` when no
/// listed item has a profile.
fn mean_item_age(items: &[&str], profiles: &BTreeMap<String, ItemAgeProfile>) -> Option<f64> {
    let ages: Vec<f64> = items
        .iter()
        .filter_map(|id| profiles.get(*id).map(ItemAgeProfile::midpoint))
        .collect();
    if ages.is_empty() {
        return None;
    }
    Some(ages.iter().sum::<f64>() / ages.len() as f64)
}

/// Builds the drift series: for each user with held-out data, the difference
/// between the mean estimated age of later (test or recommended) items and
/// the mean estimated age of that user's training items, bucketed by the
/// user's cut month.
pub fn drift_series(
    split: &TemporalSplit,
    profiles: &BTreeMap<String, ItemAgeProfile>,
    rec_lists: &BTreeMap<String, BTreeMap<String, Vec<String>>>,
) -> Vec<DriftPoint> {
    let mut train_items: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &split.train {
        train_items
            .entry(r.user_id.as_str())
            .or_default()
            .push(r.item_id.as_str());
    }
    let mut test_items: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &split.test {
        test_items
            .entry(r.user_id.as_str())
            .or_default()
            .push(r.item_id.as_str());
    }

    // (bucket, source) -> running (sum, count)
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for (user, cut) in &split.cuts {
        let Some(train) = train_items.get(user.as_str()) else {
            continue;
        };
        let Some(train_age) = mean_item_age(train, profiles) else {
            continue;
        };
        let bucket = cut.month_bucket();
        if let Some(test) = test_items.get(user.as_str()) {
            if let Some(test_age) = mean_item_age(test, profiles) {
                let cell = cells.entry((bucket.clone(), "test".into())).or_insert((0.0, 0));
                cell.0 += test_age - train_age;
                cell.1 += 1;
            }
        }
        for (source, lists) in rec_lists {
            let Some(items) = lists.get(user) else {
                continue;
            };
            let ids: Vec<&str> = items.iter().map(String::as_str).collect();
            if let Some(rec_age) = mean_item_age(&ids, profiles) {
                let cell = cells.entry((bucket.clone(), source.clone())).or_insert((0.0, 0));
                cell.0 += rec_age - train_age;
                cell.1 += 1;
            }
        }
    }

    let mut points: BTreeMap<String, DriftPoint> = BTreeMap::new();
    for ((bucket, source), (sum, count)) in cells {
        points
            .entry(bucket.clone())
            .or_insert_with(|| DriftPoint {
                bucket,
                sources: BTreeMap::new(),
            })
            .sources
            .insert(
                source,
                DriftStat {
                    delta_years: sum / count as f64,
                    n_users: count,
                },
            );
    }
    points.into_values().collect()
}

/// User-weighted mean drift of one source across all buckets.
pub fn mean_drift(series: &[DriftPoint], source: &str) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for point in series {
        if let Some(stat) = point.sources.get(source) {
            sum += stat.delta_years * stat.n_users as f64;
            n += stat.n_users;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Writes the drift series as `bucket,source,delta_years` CSV.
pub fn write_drift_csv(path: &Path, series: &[DriftPoint]) -> Result<()> {
    use std::io::Write;
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(out, "bucket,source,delta_years").map_err(|e| Error::io(path, e))?;
    for point in series {
        for (source, stat) in &point.sources {
            writeln!(out, "{},{},{}", point.bucket, source, stat.delta_years)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// ALS hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlsParams {
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
}

fn default_rank() -> usize {
    20
}
fn default_lambda() -> f64 {
    0.05
}
fn default_sweeps() -> usize {
    15
}

impl Default for AlsParams {
    fn default() -> Self {
        AlsParams {
            rank: default_rank(),
            lambda: default_lambda(),
            sweeps: default_sweeps(),
        }
    }
}

/// Full experiment configuration; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// JSON-lines review file; mentions and ratings derive from it.
    pub reviews: Option<PathBuf>,
    /// Alternative rating source (user_id,item_id,rating,timestamp CSV).
    pub ratings: Option<PathBuf>,
    /// Precomputed mentions; filtered to the training side before use.
    pub mentions: Option<PathBuf>,
    /// Precomputed item profiles; skips internal profiling (and the leakage
    /// guard, which needs mention provenance).
    pub item_profiles: Option<PathBuf>,
    /// Precomputed user models; skips internal model fitting.
    pub user_models: Option<PathBuf>,
    pub engines: Vec<EngineKind>,
    pub n: usize,
    pub oversample: usize,
    pub neighborhood: usize,
    pub user_term_threshold: usize,
    pub min_item_reviews: usize,
    pub relevance_threshold: u8,
    pub train_fraction: f64,
    pub item_strategy: SubsetStrategy,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub fence_k: f64,
    pub max_value_years: f64,
    pub user_tukey: bool,
    pub seed: u64,
    pub als: AlsParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            reviews: None,
            ratings: None,
            mentions: None,
            item_profiles: None,
            user_models: None,
            engines: EngineKind::ALL.to_vec(),
            n: 10,
            oversample: 5,
            neighborhood: 50,
            user_term_threshold: 4,
            min_item_reviews: 4,
            relevance_threshold: 3,
            train_fraction: 0.8,
            item_strategy: SubsetStrategy::RatingPossessive,
            percentile_low: 0.05,
            percentile_high: 0.95,
            fence_k: 1.5,
            max_value_years: 18.0,
            user_tukey: false,
            seed: 42,
            als: AlsParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Loads TOML (or JSON, by extension) from disk.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        Ok(config)
    }

    /// Field-by-field validation; returns every issue found.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.reviews.is_none() && self.ratings.is_none() {
            issues.push("reviews or ratings: one input path is required".into());
        }
        if self.reviews.is_none()
            && self.mentions.is_none()
            && (self.item_profiles.is_none() || self.user_models.is_none())
        {
            issues.push(
                "mentions or precomputed profiles: required when no reviews file is given".into(),
            );
        }
        if self.engines.is_empty() {
            issues.push("engines: at least one engine is required".into());
        }
        if self.n < 1 {
            issues.push("n: must be at least 1".into());
        }
        if self.oversample < 1 {
            issues.push("oversample: must be at least 1".into());
        }
        if self.neighborhood < 1 {
            issues.push("neighborhood: must be at least 1".into());
        }
        if self.user_term_threshold < 1 {
            issues.push("user_term_threshold: must be at least 1".into());
        }
        if self.min_item_reviews < 1 {
            issues.push("min_item_reviews: must be at least 1".into());
        }
        if !(1..=5).contains(&self.relevance_threshold) {
            issues.push("relevance_threshold: must lie in 1..=5".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            issues.push("train_fraction: must lie in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.percentile_low)
            || !(0.0..=1.0).contains(&self.percentile_high)
            || self.percentile_low > self.percentile_high
        {
            issues.push("percentile_low/percentile_high: need 0 <= low <= high <= 1".into());
        }
        if self.fence_k < 0.0 {
            issues.push("fence_k: must be non-negative".into());
        }
        if self.max_value_years <= 0.0 {
            issues.push("max_value_years: must be positive".into());
        }
        if self.als.rank < 1 {
            issues.push("als.rank: must be at least 1".into());
        }
        if self.als.lambda <= 0.0 {
            issues.push("als.lambda: must be positive".into());
        }
        if self.als.sweeps < 1 {
            issues.push("als.sweeps: must be at least 1".into());
        }
        issues
    }

    pub fn tukey_params(&self) -> TukeyParams {
        TukeyParams {
            p_low: self.percentile_low,
            p_high: self.percentile_high,
            fence_k: self.fence_k,
        }
    }
}

/// Mean metrics of one strategy row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub ndcg: f64,
    pub map: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_users: usize,
}

/// Everything one experiment run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub relevance_threshold: u8,
    pub n_test_users: usize,
    pub strategies: Vec<StrategyMetrics>,
    pub drift: Vec<DriftPoint>,
    pub footnotes: Vec<String>,
    pub config: ExperimentConfig,
}

impl EvalReport {
    pub fn strategy(&self, name: &str) -> Option<&StrategyMetrics> {
        self.strategies.iter().find(|s| s.strategy == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

struct PreparedData {
    split: TemporalSplit,
    filter_profiles: BTreeMap<String, ItemAgeProfile>,
    drift_profiles: BTreeMap<String, ItemAgeProfile>,
    user_models: BTreeMap<(String, ModelVariant), UserAgeModel>,
}

fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    let reviews: Option<Vec<ReviewRecord>> = match &config.reviews {
        Some(path) => Some(crate::corpus::load_reviews(path)?.reviews),
        None => None,
    };
    let ratings: Vec<Rating> = match &config.ratings {
        Some(path) => load_ratings_csv(path)?,
        None => ratings_from_reviews(reviews.as_deref().unwrap_or(&[])),
    };
    if ratings.is_empty() {
        return Err(Error::Data("no ratings to evaluate".into()));
    }
    let deduped = dedupe_ratings(&ratings);
    let split = temporal_split(&deduped, config.train_fraction)?;

    // mentions come from the training side only
    let need_mentions = config.item_profiles.is_none() || config.user_models.is_none();
    let mentions: Vec<AgeMention> = if !need_mentions {
        Vec::new()
    } else if let Some(path) = &config.mentions {
        let all = load_mentions(path)?;
        all.into_iter()
            .filter(|m| split.is_train_side(&m.user_id, m.date))
            .collect()
    } else {
        let reviews = reviews
            .as_deref()
            .ok_or_else(|| Error::config("mentions or reviews required to build profiles"))?;
        let train_reviews: Vec<ReviewRecord> = reviews
            .iter()
            .filter(|r| split.is_train_side(&r.user_id, r.date))
            .cloned()
            .collect();
        let options = ExtractOptions {
            max_value_years: config.max_value_years,
            ..ExtractOptions::default()
        };
        extract_corpus(&train_reviews, &UnitLexicon::builtin(), &options).mentions
    };
    if need_mentions {
        verify_no_leakage(&mentions, &split)?;
    }

    let params = config.tukey_params();
    let (filter_profiles, drift_profiles) = match &config.item_profiles {
        Some(path) => {
            let loaded = load_item_profiles(path)?;
            (loaded.clone(), loaded)
        }
        None => {
            let all = profile_items(&mentions, SubsetStrategy::All, config.min_item_reviews, &params);
            // configured strategy first, All as the per-item fallback
            let filter = if config.item_strategy == SubsetStrategy::All {
                all.clone()
            } else {
                let mut merged = all.clone();
                for (item, profile) in profile_items(
                    &mentions,
                    config.item_strategy,
                    config.min_item_reviews,
                    &params,
                ) {
                    merged.insert(item, profile);
                }
                merged
            };
            (filter, all)
        }
    };

    let user_models = match &config.user_models {
        Some(path) => load_user_models(path)?,
        None => build_user_models(
            &mentions,
            config.user_term_threshold,
            config.user_tukey.then_some(&params),
        ),
    };

    Ok(PreparedData {
        split,
        filter_profiles,
        drift_profiles,
        user_models,
    })
}

/// Runs the full grid: every engine in raw, post-filtered (oversampled),
/// and post-filtered-without-oversampling form.
///
/// Profiles and models come from training-side data only; each test user is
/// evaluated at their own cut date against the items they rated above the
/// relevance threshold afterwards. Fixed seed and inputs give a byte-stable
/// report regardless of worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::Config { issues });
    }
    let data = prepare(config)?;
    let split = &data.split;
    let matrix = RatingMatrix::from_ratings(&split.train);

    // relevant = test items rated above the threshold, per user
    let mut relevant: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &split.test {
        if r.rating > config.relevance_threshold {
            relevant
                .entry(r.user_id.as_str())
                .or_default()
                .insert(r.item_id.as_str());
        }
    }

    let test_users: Vec<(&String, Day)> = split
        .cuts
        .iter()
        .filter(|(user, _)| matrix.user_index(user).is_some())
        .map(|(user, cut)| (user, *cut))
        .collect();

    // per user: metric rows for raw / pf / pf-m1 plus list items for drift
    struct UserOutcome {
        rows: [[f64; 4]; 3],
        raw_items: Vec<String>,
        pf_items: Vec<String>,
    }

    let mut strategies: Vec<StrategyMetrics> = Vec::new();
    let mut rec_lists: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();

    for engine_kind in &config.engines {
        let engine = match engine_kind {
            EngineKind::UbCf => Recommender::UserBased {
                matrix: &matrix,
                k: config.neighborhood,
            },
            EngineKind::IbCf => Recommender::ItemBased {
                matrix: &matrix,
                sims: ItemSimilarities::compute(&matrix),
            },
            EngineKind::MfAls => Recommender::Factor {
                matrix: &matrix,
                model: crate::als::als_train(
                    &matrix,
                    config.als.rank,
                    config.als.lambda,
                    config.als.sweeps,
                    config.seed,
                )?,
            },
        };

        let outcomes: Vec<UserOutcome> = test_users
            .par_iter()
            .map(|(user, cut)| {
                let candidates = engine.top_n(user, config.n * config.oversample, *cut);
                let model = preferred_model(&data.user_models, user);
                let raw = candidates.clone().truncated(config.n);
                let pf = post_filter(&candidates, model, &data.filter_profiles, *cut)
                    .list
                    .truncated(config.n);
                let literal = post_filter(&raw, model, &data.filter_profiles, *cut).list;
                let rel = relevant.get(user.as_str()).cloned().unwrap_or_default();
                let score = |list: &crate::recommend::RecommendationList| {
                    let ids = list.item_ids();
                    [
                        ndcg_at(&ids, &rel, config.n),
                        map_at(&ids, &rel, config.n),
                        precision_at(&ids, &rel, config.n),
                        recall_at(&ids, &rel, config.n),
                    ]
                };
                UserOutcome {
                    rows: [score(&raw), score(&pf), score(&literal)],
                    raw_items: raw.item_ids().iter().map(|s| s.to_string()).collect(),
                    pf_items: pf.item_ids().iter().map(|s| s.to_string()).collect(),
                }
            })
            .collect();

        let names = [
            engine_kind.name().to_string(),
            format!("{}-pf", engine_kind.name()),
            format!("{}-pf-m1", engine_kind.name()),
        ];
        for (row, name) in names.iter().enumerate() {
            let mut sums = [0.0; 4];
            for outcome in &outcomes {
                for (s, v) in sums.iter_mut().zip(outcome.rows[row]) {
                    *s += v;
                }
            }
            let n_users = outcomes.len();
            let mean = |s: f64| if n_users == 0 { 0.0 } else { s / n_users as f64 };
            strategies.push(StrategyMetrics {
                strategy: name.clone(),
                ndcg: mean(sums[0]),
                map: mean(sums[1]),
                precision: mean(sums[2]),
                recall: mean(sums[3]),
                n_users,
            });
        }

        let mut raw_map = BTreeMap::new();
        let mut pf_map = BTreeMap::new();
        for ((user, _), outcome) in test_users.iter().zip(&outcomes) {
            raw_map.insert((*user).clone(), outcome.raw_items.clone());
            pf_map.insert((*user).clone(), outcome.pf_items.clone());
        }
        rec_lists.insert(engine_kind.name().to_string(), raw_map);
        rec_lists.insert(format!("{}-pf", engine_kind.name()), pf_map);
    }

    let drift = drift_series(split, &data.drift_profiles, &rec_lists);

    Ok(EvalReport {
        n: config.n,
        relevance_threshold: config.relevance_threshold,
        n_test_users: test_users.len(),
        strategies,
        drift,
        footnotes: vec![
            "Post-filtered rows carry the -pf suffix; -pf-m1 rows filter the plain top-n list without oversampling."
                .into(),
        ],
        config: config.clone(),
    })
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

    fn user_ratings(user: &str, n: usize) -> Vec<Rating> {
        (0..n)
            .map(|i| rating(user, &format!("i{i}"), 4, 100 + i as i64))
            .collect()
    }

    #[test]
    fn split_80_20() {
        let split = temporal_split(&user_ratings("u", 10), 0.8).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.cuts["u"], Day(108));
    }

    #[test]
    fn split_single_rating_user_goes_to_train() {
        let split = temporal_split(&user_ratings("u", 1), 0.8).unwrap();
        assert_eq!(split.train.len(), 1);
        assert!(split.test.is_empty());
        assert!(split.cuts.is_empty());
    }

    #[test]
    fn split_five_ratings_is_four_one() {
        let split = temporal_split(&user_ratings("u", 5), 0.8).unwrap();
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn split_respects_causality_per_user() {
        let mut ratings = Vec::new();
        for u in 0..20 {
            let user = format!("u{u}");
            for i in 0..(3 + u % 7) {
                ratings.push(rating(&user, &format!("i{i}"), 4, (u * 31 + i * 13) as i64));
            }
        }
        let split = temporal_split(&ratings, 0.8).unwrap();
        assert_eq!(split.train.len() + split.test.len(), ratings.len());
        for r in &split.test {
            let max_train = split
                .train
                .iter()
                .filter(|t| t.user_id == r.user_id)
                .map(|t| t.date)
                .max()
                .unwrap();
            assert!(max_train <= r.date);
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(temporal_split(&[], 0.0).is_err());
        assert!(temporal_split(&[], 1.0).is_err());
    }

    #[test]
    fn split_empty_ratings() {
        let split = temporal_split(&[], 0.8).unwrap();
        assert!(split.train.is_empty() && split.test.is_empty() && split.cuts.is_empty());
    }

    #[test]
    fn ceil_fraction_avoids_float_artifacts() {
        assert_eq!(ceil_fraction(0.8, 5), 4);
        assert_eq!(ceil_fraction(0.8, 10), 8);
        assert_eq!(ceil_fraction(0.75, 10), 8); // ceil(7.5)
        assert_eq!(ceil_fraction(0.5, 3), 2); // ceil(1.5)
    }

    #[test]
    fn metrics_perfect_list() {
        let relevant: BTreeSet<&str> = ["a", "b", "c"].into();
        let recs = vec!["a", "b", "c"];
        assert_eq!(precision_at(&recs, &relevant, 3), 1.0);
        assert_eq!(recall_at(&recs, &relevant, 3), 1.0);
        assert_eq!(map_at(&recs, &relevant, 3), 1.0);
        assert_eq!(ndcg_at(&recs, &relevant, 3), 1.0);
    }

    #[test]
    fn metrics_worked_example() {
        let relevant: BTreeSet<&str> = ["a", "c"].into();
        let recs = vec!["a", "b", "c"];
        assert!((precision_at(&recs, &relevant, 3) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at(&recs, &relevant, 3), 1.0);
        assert!((map_at(&recs, &relevant, 3) - 5.0 / 6.0).abs() < 1e-12);
        let expected_ndcg = (1.0 + 1.0 / 4.0_f64.log2()) / (1.0 + 1.0 / 3.0_f64.log2());
        assert!((ndcg_at(&recs, &relevant, 3) - expected_ndcg).abs() < 1e-12);
    }

    #[test]
    fn metrics_empty_relevant_set_is_zero() {
        let relevant = BTreeSet::new();
        let recs = vec!["a", "b"];
        assert_eq!(precision_at(&recs, &relevant, 2), 0.0);
        assert_eq!(recall_at(&recs, &relevant, 2), 0.0);
        assert_eq!(map_at(&recs, &relevant, 2), 0.0);
        assert_eq!(ndcg_at(&recs, &relevant, 2), 0.0);
    }

    #[test]
    fn leakage_guard_fires_on_post_cut_mention() {
        use crate::extract::tests::mention;
        let ratings = user_ratings("u", 10);
        let split = temporal_split(&ratings, 0.8).unwrap();
        let cut = split.cuts["u"];
        let good = vec![mention("r1", "u", "i1", 1.0, true, 5, cut.add_days(-1))];
        assert!(verify_no_leakage(&good, &split).is_ok());
        let bad = vec![mention("r2", "u", "i1", 1.0, true, 5, cut)];
        match verify_no_leakage(&bad, &split) {
            Err(Error::Leakage { review_id, .. }) => assert_eq!(review_id, "r2"),
            other => panic!("expected leakage error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_enumerates_field_issues() {
        let config = ExperimentConfig {
            engines: Vec::new(),
            n: 0,
            train_fraction: 1.5,
            ..ExperimentConfig::default()
        };
        let issues = config.validate();
        assert!(issues.iter().any(|i| i.starts_with("engines:")));
        assert!(issues.iter().any(|i| i.starts_with("n:")));
        assert!(issues.iter().any(|i| i.starts_with("train_fraction:")));
        assert!(issues.iter().any(|i| i.starts_with("reviews or ratings")));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = toml::from_str::<ExperimentConfig>("n = 10\nbogus_key = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn drift_positive_when_test_items_older() {
        let ratings = vec![
            rating("u", "young", 4, 0),
            rating("u", "young2", 4, 10),
            rating("u", "old", 5, 400),
        ];
        let split = temporal_split(&ratings, 0.8).unwrap();
        let profile = |id: &str, mid: f64| {
            (
                id.to_string(),
                ItemAgeProfile {
                    item_id: id.to_string(),
                    strategy: SubsetStrategy::All,
                    low_years: mid - 0.1,
                    high_years: mid + 0.1,
                    n_mentions_used: 4,
                    n_outliers_removed: 0,
                },
            )
        };
        let profiles: BTreeMap<String, ItemAgeProfile> = [
            profile("young", 0.5),
            profile("young2", 0.7),
            profile("old", 2.0),
        ]
        .into_iter()
        .collect();
        let series = drift_series(&split, &profiles, &BTreeMap::new());
        assert_eq!(series.len(), 1);
        let stat = &series[0].sources["test"];
        assert!(stat.delta_years > 0.0);
        assert_eq!(stat.n_users, 1);
        assert_eq!(mean_drift(&series, "test"), Some(stat.delta_years));
        assert_eq!(mean_drift(&series, "missing"), None);
    }

    #[test]
    fn drift_empty_without_profiles() {
        let ratings = user_ratings("u", 5);
        let split = temporal_split(&ratings, 0.8).unwrap();
        let series = drift_series(&split, &BTreeMap::new(), &BTreeMap::new());
        assert!(series.is_empty());
    }

    #[test]
    fn drift_csv_shape() {
        let ratings = vec![
            rating("u", "young", 4, 0),
            rating("u", "young2", 4, 10),
            rating("u", "old", 5, 400),
        ];
        let split = temporal_split(&ratings, 0.8).unwrap();
        let profiles: BTreeMap<String, ItemAgeProfile> = ["young", "young2", "old"]
            .iter()
            .enumerate()
            .map(|(k, id)| {
                (
                    id.to_string(),
                    ItemAgeProfile {
                        item_id: id.to_string(),
                        strategy: SubsetStrategy::All,
                        low_years: k as f64,
                        high_years: k as f64 + 0.2,
                        n_mentions_used: 4,
                        n_outliers_removed: 0,
                    },
                )
            })
            .collect();
        let series = drift_series(&split, &profiles, &BTreeMap::new());
        let f = tempfile::NamedTempFile::new().unwrap();
        write_drift_csv(f.path(), &series).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bucket,source,delta_years"));
        assert!(lines.next().unwrap().starts_with("1971-02,test,"));
    }
}
