//! Age-unit lexicon: canonical units, surface variants, and variant discovery.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::Sentence;

/// The three age units recognized in review text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonicalUnit {
    Year,
    Month,
    Week,
}

impl CanonicalUnit {
    pub const ALL: [CanonicalUnit; 3] = [CanonicalUnit::Year, CanonicalUnit::Month, CanonicalUnit::Week];

    pub fn years_per_unit(self) -> f64 {
        match self {
            CanonicalUnit::Year => 1.0,
            CanonicalUnit::Month => 1.0 / 12.0,
            CanonicalUnit::Week => 1.0 / 52.0,
        }
    }

    /// Dictionary spellings (singular and plural) used as the reference
    /// forms for edit-distance matching.
    pub fn canonical_forms(self) -> &'static [&'static str] {
        match self {
            CanonicalUnit::Year => &["year", "years"],
            CanonicalUnit::Month => &["month", "months"],
            CanonicalUnit::Week => &["week", "weeks"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CanonicalUnit::Year => "year",
            CanonicalUnit::Month => "month",
            CanonicalUnit::Week => "week",
        }
    }
}

/// Maps surface tokens ("yrs", "mnths", ...) to canonical units.
///
/// Variant sets stay disjoint across units: a surface form resolves to at
/// most one canonical unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitLexicon {
    variants: BTreeMap<CanonicalUnit, BTreeSet<String>>,
}

impl UnitLexicon {
    /// Lexicon seeded with only the dictionary spellings.
    pub fn canonical_only() -> UnitLexicon {
        let mut lex = UnitLexicon {
            variants: BTreeMap::new(),
        };
        for unit in CanonicalUnit::ALL {
            let set = lex.variants.entry(unit).or_default();
            for form in unit.canonical_forms() {
                set.insert((*form).to_string());
            }
        }
        lex
    }

    /// Built-in lexicon covering common shorthand and misspellings seen in
    /// review dumps.
    pub fn builtin() -> UnitLexicon {
        let mut lex = UnitLexicon::canonical_only();
        let extra: [(CanonicalUnit, &[&str]); 3] = [
            (CanonicalUnit::Year, &["yr", "yrs", "yeras", "yera"]),
            (
                CanonicalUnit::Month,
                &["mo", "mos", "mnth", "mnths", "mnts", "mth", "mths", "monthes"],
            ),
            (CanonicalUnit::Week, &["wk", "wks", "weeeks"]),
        ];
        for (unit, forms) in extra {
            for form in forms {
                lex.insert(unit, form).expect("builtin lexicon is disjoint");
            }
        }
        lex
    }

    /// Adds a variant; rejects duplicates assigned to a different unit.
    pub fn insert(&mut self, unit: CanonicalUnit, variant: &str) -> Result<()> {
        let variant = variant.to_lowercase();
        if let Some(existing) = self.lookup(&variant) {
            if existing != unit {
                return Err(Error::Data(format!(
                    "variant `{variant}` already maps to {}",
                    existing.name()
                )));
            }
            return Ok(());
        }
        self.variants.entry(unit).or_default().insert(variant);
        Ok(())
    }

    /// Resolves a lowercase surface token to its canonical unit.
    pub fn lookup(&self, token: &str) -> Option<CanonicalUnit> {
        for (unit, set) in &self.variants {
            if set.contains(token) {
                return Some(*unit);
            }
        }
        None
    }

    pub fn variants(&self, unit: CanonicalUnit) -> impl Iterator<Item = &str> {
        self.variants
            .get(&unit)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }

    /// Loads a JSON map of canonical unit name to variant list.
    pub fn load(path: &Path) -> Result<UnitLexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<CanonicalUnit, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad lexicon file: {e}")))?;
        let mut lex = UnitLexicon::canonical_only();
        for (unit, forms) in map {
            for form in forms {
                lex.insert(unit, &form)?;
            }
        }
        Ok(lex)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: BTreeMap<&str, Vec<&str>> = self
            .variants
            .iter()
            .map(|(unit, set)| (unit.name(), set.iter().map(String::as_str).collect()))
            .collect();
        let text = serde_json::to_string_pretty(&map).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Levenshtein edit distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// How unseen unit spellings are admitted into the lexicon.
#[derive(Debug, Clone)]
pub enum DiscoveryStrategy {
    /// Edit distance to a canonical spelling plus number-adjacency frequency.
    EditDistance {
        max_distance: usize,
        min_count: usize,
    },
    /// Skip-gram co-occurrence similarity to the seed units.
    ContextSimilarity { window: usize, min_similarity: f64, min_count: usize },
}

impl Default for DiscoveryStrategy {
    fn default() -> Self {
        DiscoveryStrategy::EditDistance {
            max_distance: 2,
            min_count: 5,
        }
    }
}

/// Common English words that sit within edit distance 2 of a unit spelling
/// but never denote an age unit.
const DICTIONARY_STOPLIST: &[&str] = &[
    "bear", "bears", "beard", "cheek", "cheeks", "clear", "creek", "dear", "ear", "ears", "fear",
    "fears", "gear", "gears", "greek", "hear", "heard", "hears", "heart", "meek", "money", "monkey",
    "month", "monthly", "moth", "moths", "mount", "mouth", "mouths", "near", "nears", "peek",
    "pear", "pears", "rear", "seek", "seeks", "sleek", "tear", "tears", "wear", "wears", "weak",
    "weaker", "weekly", "year", "yearly", "yearn", "yearns", "yes",
];

fn min_distance_to_unit(token: &str, unit: CanonicalUnit) -> usize {
    unit.canonical_forms()
        .iter()
        .map(|form| edit_distance(token, form))
        .min()
        .unwrap()
}

fn is_numberish(token: &str) -> bool {
    crate::extract::parse_number_token(token).is_some()
}

/// Extends `seeds` with unit-spelling variants found in the corpus.
///
/// A candidate is any unseen token occurring immediately to the right of a
/// number token. Admission is governed by the chosen strategy; each admitted
/// variant is assigned to its nearest canonical unit, ties rejected, keeping
/// the disjointness invariant.
pub fn discover_unit_variants(
    sentences: &[Sentence],
    seeds: &UnitLexicon,
    strategy: &DiscoveryStrategy,
) -> UnitLexicon {
    let mut lexicon = seeds.clone();
    let stoplist: BTreeSet<&str> = DICTIONARY_STOPLIST.iter().copied().collect();

    // candidate -> occurrences adjacent to a number token
    let mut adjacency: HashMap<String, usize> = HashMap::new();
    for sentence in sentences {
        let lowered = sentence.lower_texts();
        for pair in lowered.windows(2) {
            if is_numberish(&pair[0]) && !is_numberish(&pair[1]) {
                let token = pair[1].as_str();
                if !lexicon.contains(token) && !stoplist.contains(token) {
                    *adjacency.entry(token.to_string()).or_default() += 1;
                }
            }
        }
    }

    let mut candidates: Vec<(String, usize)> = adjacency.into_iter().collect();
    candidates.sort(); // deterministic admission order

    match strategy {
        DiscoveryStrategy::EditDistance {
            max_distance,
            min_count,
        } => {
            for (token, count) in candidates {
                if count < *min_count {
                    continue;
                }
                if let Some(unit) = nearest_unit_by_distance(&token, *max_distance) {
                    let _ = lexicon.insert(unit, &token);
                }
            }
        }
        DiscoveryStrategy::ContextSimilarity {
            window,
            min_similarity,
            min_count,
        } => {
            let contexts = skipgram_contexts(sentences, *window);
            let seed_vectors: Vec<(CanonicalUnit, HashMap<String, f64>)> = CanonicalUnit::ALL
                .iter()
                .map(|unit| {
                    let mut merged: HashMap<String, f64> = HashMap::new();
                    for form in seeds.variants(*unit) {
                        if let Some(ctx) = contexts.get(form) {
                            for (word, n) in ctx {
                                *merged.entry(word.clone()).or_default() += *n as f64;
                            }
                        }
                    }
                    (*unit, merged)
                })
                .collect();
            for (token, count) in candidates {
                if count < *min_count {
                    continue;
                }
                let Some(ctx) = contexts.get(&token) else {
                    continue;
                };
                let ctx: HashMap<String, f64> =
                    ctx.iter().map(|(w, n)| (w.clone(), *n as f64)).collect();
                let mut best: Option<(CanonicalUnit, f64)> = None;
                let mut tied = false;
                for (unit, seed_ctx) in &seed_vectors {
                    let sim = cosine(&ctx, seed_ctx);
                    match best {
                        Some((_, b)) if (sim - b).abs() < 1e-12 => tied = true,
                        Some((_, b)) if sim > b => {
                            best = Some((*unit, sim));
                            tied = false;
                        }
                        None => best = Some((*unit, sim)),
                        _ => {}
                    }
                }
                if let Some((unit, sim)) = best {
                    if !tied && sim >= *min_similarity {
                        let _ = lexicon.insert(unit, &token);
                    }
                }
            }
        }
    }
    lexicon
}

/// Nearest canonical unit within `max_distance`; `None` when out of range or
/// when two units tie for nearest.
fn nearest_unit_by_distance(token: &str, max_distance: usize) -> Option<CanonicalUnit> {
    let mut scored: Vec<(usize, CanonicalUnit)> = CanonicalUnit::ALL
        .iter()
        .map(|unit| (min_distance_to_unit(token, *unit), *unit))
        .collect();
    scored.sort_by_key(|(d, _)| *d);
    let (best, unit) = scored[0];
    if best > max_distance {
        return None;
    }
    if scored[1].0 == best {
        return None; // ambiguous between two units
    }
    Some(unit)
}

/// Skip-gram co-occurrence counts: token -> context token -> count.
fn skipgram_contexts(
    sentences: &[Sentence],
    window: usize,
) -> HashMap<String, HashMap<String, usize>> {
    let mut contexts: HashMap<String, HashMap<String, usize>> = HashMap::new();
    for sentence in sentences {
        let tokens = sentence.lower_texts();
        for (i, token) in tokens.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(tokens.len());
            let entry = contexts.entry(token.clone()).or_default();
            for (j, other) in tokens.iter().enumerate().take(hi).skip(lo) {
                if i != j {
                    // numbers all behave alike as context; collapse them
                    let key = if is_numberish(other) { "<num>" } else { other };
                    *entry.entry(key.to_string()).or_default() += 1;
                }
            }
        }
    }
    contexts
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(k, va)| b.get(k).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
