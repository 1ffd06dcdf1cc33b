//! Per-user target-age models: linear regression of mentioned ages over time.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::date::Day;
use crate::error::{Error, Result};
use crate::extract::{group_by, AgeMention};

/// Which mention stream a model was fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Mentions carrying "my"/"our".
    #[serde(rename = "possessive")]
    Possessive,
    /// Every other mention.
    #[serde(rename = "all-terms")]
    AllTerms,
}

/// Affine model of a user's target age over calendar time.
///
/// The regression runs on differences from the earliest mention, so
/// predictions anchor at `(t0, a0)` and add `intercept + slope * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAgeModel {
    pub user_id: String,
    pub variant: ModelVariant,
    /// Date of the earliest mention-bearing review in the stream.
    pub t0: Day,
    /// Age value of that earliest mention, in years.
    pub a0: f64,
    /// Years of target age per calendar year.
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub residual_rms: f64,
}

/// Predicted target age at `t`, in years, clamped below at zero.
pub fn target_age(model: &UserAgeModel, t: Day) -> f64 {
    let dt = t.years_since(model.t0);
    (model.a0 + model.intercept + model.slope * dt).max(0.0)
}

/// Splits one user's mentions into (possessive, general) streams, each
/// date-sorted with review-id tie-break.
pub fn collect_user_mentions(
    user_id: &str,
    mentions: &[AgeMention],
) -> (Vec<(Day, f64)>, Vec<(Day, f64)>) {
    let mut possessive: Vec<&AgeMention> = Vec::new();
    let mut general: Vec<&AgeMention> = Vec::new();
    for m in mentions {
        if m.user_id != user_id {
            continue;
        }
        if m.possessive {
            possessive.push(m);
        } else {
            general.push(m);
        }
    }
    let sort_key = |m: &&AgeMention| (m.date, m.review_id.clone());
    possessive.sort_by_key(sort_key);
    general.sort_by_key(sort_key);
    let strip = |v: Vec<&AgeMention>| v.into_iter().map(|m| (m.date, m.value_years)).collect();
    (strip(possessive), strip(general))
}

/// Rebases a date-sorted stream against its first element: each mention
/// becomes (t - t0 in years, age - a0 in years), the first mapping to (0, 0).
pub fn age_time_normalization(stream: &[(Day, f64)]) -> Vec<(f64, f64)> {
    let Some(&(t0, a0)) = stream.first() else {
        return Vec::new();
    };
    stream
        .iter()
        .map(|&(t, a)| (t.years_since(t0), a - a0))
        .collect()
}

/// A fit with fewer than two distinct x values has no defined slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegenerateFit;

/// Ordinary least squares through the closed-form normal equations.
pub fn fit_linear(pairs: &[(f64, f64)]) -> std::result::Result<(f64, f64, f64), DegenerateFit> {
    if pairs.len() < 2 {
        return Err(DegenerateFit);
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rms = residual_rms(pairs, slope, intercept);
    Ok((slope, intercept, rms))
}

fn residual_rms(pairs: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    let ss: f64 = pairs
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    (ss / pairs.len() as f64).sqrt()
}

/// Fallback for degenerate fits: a child ages with calendar time.
const FALLBACK_SLOPE: f64 = 1.0;

/// Fits models for every user with at least `k` mentions in a variant
/// stream. Degenerate fits (one point, or all mentions on one date) fall
/// back to slope 1, intercept 0.
pub fn build_user_models(
    mentions: &[AgeMention],
    k: usize,
    user_tukey: Option<&crate::item_profile::TukeyParams>,
) -> BTreeMap<(String, ModelVariant), UserAgeModel> {
    assert!(k >= 1, "term threshold must be at least 1");
    let by_user = group_by(mentions, |m| m.user_id.clone());
    let models: Vec<((String, ModelVariant), UserAgeModel)> = by_user
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .flat_map(|(user_id, group)| {
            let owned: Vec<AgeMention> = group.into_iter().cloned().collect();
            let (poss, general) = collect_user_mentions(&user_id, &owned);
            let mut out = Vec::new();
            for (variant, stream) in [
                (ModelVariant::Possessive, poss),
                (ModelVariant::AllTerms, general),
            ] {
                if stream.len() < k {
                    continue;
                }
                let stream = match user_tukey {
                    Some(params) => apply_stream_tukey(&stream, params),
                    None => stream,
                };
                if stream.is_empty() {
                    continue;
                }
                let model = fit_user_model(&user_id, variant, &stream);
                out.push(((user_id.clone(), variant), model));
            }
            out
        })
        .collect();
    models.into_iter().collect()
}

fn apply_stream_tukey(
    stream: &[(Day, f64)],
    params: &crate::item_profile::TukeyParams,
) -> Vec<(Day, f64)> {
    let values: Vec<f64> = stream.iter().map(|(_, v)| *v).collect();
    let retained = crate::item_profile::tukey_filter(&values, params);
    let mut keep = retained.into_iter();
    let mut next = keep.next();
    let mut out = Vec::new();
    for &(d, v) in stream {
        if next == Some(v) {
            out.push((d, v));
            next = keep.next();
        }
    }
    out
}

fn fit_user_model(user_id: &str, variant: ModelVariant, stream: &[(Day, f64)]) -> UserAgeModel {
    let (t0, a0) = stream[0];
    let pairs = age_time_normalization(stream);
    let (slope, intercept, rms) = match fit_linear(&pairs) {
        Ok(fit) => fit,
        Err(DegenerateFit) => {
            let rms = residual_rms(&pairs, FALLBACK_SLOPE, 0.0);
            (FALLBACK_SLOPE, 0.0, rms)
        }
    };
    UserAgeModel {
        user_id: user_id.to_string(),
        variant,
        t0,
        a0,
        slope,
        intercept,
        n_points: pairs.len(),
        residual_rms: rms,
    }
}

/// The model used at recommendation time: possessive when available,
/// otherwise the all-terms fit.
pub fn preferred_model<'a>(
    models: &'a BTreeMap<(String, ModelVariant), UserAgeModel>,
    user_id: &str,
) -> Option<&'a UserAgeModel> {
    models
        .get(&(user_id.to_string(), ModelVariant::Possessive))
        .or_else(|| models.get(&(user_id.to_string(), ModelVariant::AllTerms)))
}

pub fn write_user_models(
    path: &Path,
    models: &BTreeMap<(String, ModelVariant), UserAgeModel>,
) -> Result<()> {
    let records: Vec<&UserAgeModel> = models.values().collect();
    let text = serde_json::to_string_pretty(&records).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_user_models(path: &Path) -> Result<BTreeMap<(String, ModelVariant), UserAgeModel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<UserAgeModel> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad model file: {e}")))?;
    Ok(records
        .into_iter()
        .map(|m| ((m.user_id.clone(), m.variant), m))
        .collect())
}
