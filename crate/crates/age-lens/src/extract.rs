//! Age-mention extraction from review text.
//!
//! Raw text goes through three stages: sentence/token segmentation, phrase
//! matching against the unit lexicon, and value normalization into years.
//! The matcher is a rule-based classifier over three token categories
//! (numbers, unit spellings, possessive pronouns) rather than a full POS
//! pipeline; the phrase patterns are the same either way.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ReviewRecord;
use crate::date::Day;
use crate::error::{Error, Result};
use crate::lexicon::UnitLexicon;

/// One token of a sentence, original casing preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Set when clause punctuation (comma, semicolon, colon, parenthesis)
    /// separates this token from the previous one.
    pub clause_break: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Lowercased view of the token texts.
    pub fn lower_texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.to_lowercase()).collect()
    }
}

/// Splits text into sentences of tokens.
///
/// Sentences end at `.`, `!`, `?` (a period between digits is a decimal
/// point, not a terminator). Tokens break on whitespace and punctuation, so
/// hyphenated or fused number-unit compounds ("3-years", "3years") come out
/// as separate number and unit tokens.
pub fn tokenize(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut current = String::new();
    let mut pending_break = false;

    let flush_token = |current: &mut String, tokens: &mut Vec<Token>, pending_break: &mut bool| {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current),
                clause_break: *pending_break,
            });
            *pending_break = false;
        }
    };
    let flush_sentence = |current: &mut String,
                          tokens: &mut Vec<Token>,
                          sentences: &mut Vec<Sentence>,
                          pending_break: &mut bool| {
        flush_token(current, tokens, pending_break);
        if !tokens.is_empty() {
            sentences.push(Sentence {
                tokens: std::mem::take(tokens),
            });
        }
        *pending_break = false;
    };

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            // split fused digit-letter compounds like "3years"; a '.' in
            // `current` only ever follows a digit
            if let Some(prev) = current.chars().last() {
                let prev_digitish = prev.is_ascii_digit() || prev == '.';
                if prev_digitish != c.is_ascii_digit() {
                    flush_token(&mut current, &mut tokens, &mut pending_break);
                }
            }
            current.push(c);
        } else if c == '.' {
            let prev_digit = current.chars().last().is_some_and(|p| p.is_ascii_digit());
            let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if prev_digit && next_digit {
                current.push('.');
            } else {
                flush_sentence(&mut current, &mut tokens, &mut sentences, &mut pending_break);
            }
        } else if c == '!' || c == '?' {
            flush_sentence(&mut current, &mut tokens, &mut sentences, &mut pending_break);
        } else {
            flush_token(&mut current, &mut tokens, &mut pending_break);
            if matches!(c, ',' | ';' | ':' | '(' | ')') {
                pending_break = true;
            }
        }
    }
    flush_sentence(&mut current, &mut tokens, &mut sentences, &mut pending_break);
    sentences
}

const NUMBER_WORDS: [(&str, f64); 13] = [
    ("one", 1.0),
    ("two", 2.0),
    ("three", 3.0),
    ("four", 4.0),
    ("five", 5.0),
    ("six", 6.0),
    ("seven", 7.0),
    ("eight", 8.0),
    ("nine", 9.0),
    ("ten", 10.0),
    ("eleven", 11.0),
    ("twelve", 12.0),
    ("half", 0.5),
];

/// Shape test: could this lowercase token open a numeric expression?
pub fn is_number_shaped(token: &str) -> bool {
    NUMBER_WORDS.iter().any(|(w, _)| *w == token)
        || (token.chars().any(|c| c.is_ascii_digit())
            && token.chars().all(|c| c.is_ascii_digit() || c == '.'))
}

/// Strict parse of a lowercase token as a number; digit strings with a
/// malformed decimal shape return `None`.
pub fn parse_number_token(token: &str) -> Option<f64> {
    if let Some((_, v)) = NUMBER_WORDS.iter().find(|(w, _)| *w == token) {
        return Some(*v);
    }
    if token.chars().any(|c| c.is_ascii_digit())
        && token.chars().all(|c| c.is_ascii_digit() || c == '.')
    {
        return token.parse().ok();
    }
    None
}

/// Knobs for phrase matching and mention admission.
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// How far left of the number a possessive pronoun may sit.
    pub poss_window: usize,
    /// How far right of the numeric expression the unit token may sit.
    pub unit_window: usize,
    /// Mentions above this age in years are reviewer-age noise and dropped.
    pub max_value_years: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            poss_window: 4,
            unit_window: 2,
            max_value_years: 18.0,
        }
    }
}

const POSSESSIVE_PRONOUNS: [&str; 2] = ["my", "our"];

/// A raw matched span: numeric expression + unit + optional possessive.
#[derive(Debug, Clone, PartialEq)]
pub struct AgePhrase {
    /// Lowercased tokens of the numeric expression, e.g. `["2","and","a","half"]`.
    pub value_tokens: Vec<String>,
    /// Lowercased surface form of the unit token, e.g. `"mnths"`.
    pub unit_token: String,
    /// Attached pronoun (`"my"` or `"our"`), if any.
    pub possessive: Option<String>,
    /// Token index of the numeric expression's first token.
    pub number_index: usize,
}

struct NumExpr {
    start: usize,
    end: usize, // inclusive
    unit: Option<(usize, String)>,
}

/// Matches age phrases in one sentence.
///
/// A phrase is a numeric expression with a lexicon unit within
/// `unit_window` tokens to its right. Coordinated numbers ("12 and 10
/// years") share the trailing unit. A possessive pronoun within
/// `poss_window` tokens left of the number attaches to its nearest phrase,
/// unless clause punctuation intervenes.
pub fn extract_age_phrases(
    sentence: &Sentence,
    lexicon: &UnitLexicon,
    options: &ExtractOptions,
) -> Vec<AgePhrase> {
    let lower = sentence.lower_texts();
    let n = lower.len();

    // numeric expressions, greedy left-to-right
    let mut exprs: Vec<NumExpr> = Vec::new();
    let mut consumed = vec![false; n];
    let mut i = 0;
    while i < n {
        if consumed[i] || !is_number_shaped(&lower[i]) {
            i += 1;
            continue;
        }
        let mut end = i;
        if i + 3 < n && lower[i + 1] == "and" && lower[i + 2] == "a" && lower[i + 3] == "half" {
            end = i + 3;
        }
        for slot in consumed.iter_mut().take(end + 1).skip(i) {
            *slot = true;
        }
        exprs.push(NumExpr {
            start: i,
            end,
            unit: None,
        });
        i = end + 1;
    }

    // direct unit attachment within the window
    for expr in &mut exprs {
        for j in expr.end + 1..=(expr.end + options.unit_window).min(n.saturating_sub(1)) {
            if lexicon.contains(&lower[j]) {
                expr.unit = Some((j, lower[j].clone()));
                break;
            }
        }
    }

    // coordination: a unit-less number followed (across only "and"/"&")
    // by a number that has a unit shares that unit
    for idx in (0..exprs.len()).rev() {
        if exprs[idx].unit.is_some() {
            continue;
        }
        let Some(next) = exprs.get(idx + 1) else {
            continue;
        };
        let gap = &lower[exprs[idx].end + 1..next.start];
        if gap.len() <= 2 && gap.iter().all(|t| t == "and" || t == "&") {
            exprs[idx].unit = next.unit.clone();
        }
    }

    let mut phrases: Vec<AgePhrase> = exprs
        .into_iter()
        .filter_map(|expr| {
            expr.unit.map(|(_, unit_token)| AgePhrase {
                value_tokens: lower[expr.start..=expr.end].to_vec(),
                unit_token,
                possessive: None,
                number_index: expr.start,
            })
        })
        .collect();

    // possessive pronouns attach to their nearest eligible phrase
    for (p, token) in lower.iter().enumerate() {
        if !POSSESSIVE_PRONOUNS.contains(&token.as_str()) {
            continue;
        }
        let eligible = phrases.iter_mut().filter(|ph| {
            ph.number_index > p
                && ph.number_index - p <= options.poss_window
                && sentence.tokens[p + 1..=ph.number_index]
                    .iter()
                    .all(|t| !t.clause_break)
        });
        if let Some(nearest) = eligible.min_by_key(|ph| ph.number_index - p) {
            if nearest.possessive.is_none() {
                nearest.possessive = Some(token.clone());
            }
        }
    }

    phrases
}

/// One normalized age mention with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeMention {
    pub review_id: String,
    pub user_id: String,
    pub item_id: String,
    pub date: Day,
    /// Rating copied from the source review.
    pub rating: u8,
    /// Mentioned age converted to years.
    pub value_years: f64,
    /// Surface form of the unit as written (lowercased).
    pub unit_raw: String,
    pub possessive: bool,
}

/// Why a matched phrase produced no mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Unparseable,
    NonPositive,
    AboveCap,
}

/// Converts a matched phrase into an `AgeMention`.
///
/// Number words become values, "and a half" adds 0.5, and the unit converts
/// to years. Phrases that fail to parse, are non-positive, or exceed the
/// plausibility cap are dropped with a reason.
pub fn normalize_phrase(
    phrase: &AgePhrase,
    lexicon: &UnitLexicon,
    review: &ReviewRecord,
    options: &ExtractOptions,
) -> std::result::Result<AgeMention, DropReason> {
    let value = parse_value_tokens(&phrase.value_tokens).ok_or(DropReason::Unparseable)?;
    let unit = lexicon
        .lookup(&phrase.unit_token)
        .ok_or(DropReason::Unparseable)?;
    let value_years = value * unit.years_per_unit();
    if !(value_years > 0.0) || !value_years.is_finite() {
        return Err(DropReason::NonPositive);
    }
    if value_years > options.max_value_years {
        return Err(DropReason::AboveCap);
    }
    Ok(AgeMention {
        review_id: review.review_id.clone(),
        user_id: review.user_id.clone(),
        item_id: review.item_id.clone(),
        date: review.date,
        rating: review.rating,
        value_years,
        unit_raw: phrase.unit_token.clone(),
        possessive: phrase.possessive.is_some(),
    })
}

fn parse_value_tokens(tokens: &[String]) -> Option<f64> {
    match tokens {
        [single] => parse_number_token(single),
        [first, and, a, half] if and == "and" && a == "a" && half == "half" => {
            parse_number_token(first).map(|v| v + 0.5)
        }
        _ => None,
    }
}

/// Counters for phrases that matched but yielded no mention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractDiagnostics {
    pub reviews_scanned: usize,
    pub mentions_emitted: usize,
    pub dropped_unparseable: usize,
    pub dropped_nonpositive: usize,
    pub dropped_above_cap: usize,
}

impl ExtractDiagnostics {
    fn absorb(&mut self, other: &ExtractDiagnostics) {
        self.reviews_scanned += other.reviews_scanned;
        self.mentions_emitted += other.mentions_emitted;
        self.dropped_unparseable += other.dropped_unparseable;
        self.dropped_nonpositive += other.dropped_nonpositive;
        self.dropped_above_cap += other.dropped_above_cap;
    }
}

#[derive(Debug)]
pub struct ExtractOutcome {
    pub mentions: Vec<AgeMention>,
    pub diagnostics: ExtractDiagnostics,
}

/// Mentions of one review, in phrase order.
pub fn extract_review(
    review: &ReviewRecord,
    lexicon: &UnitLexicon,
    options: &ExtractOptions,
) -> (Vec<AgeMention>, ExtractDiagnostics) {
    let mut mentions = Vec::new();
    let mut diag = ExtractDiagnostics {
        reviews_scanned: 1,
        ..Default::default()
    };
    for sentence in tokenize(&review.text) {
        for phrase in extract_age_phrases(&sentence, lexicon, options) {
            match normalize_phrase(&phrase, lexicon, review, options) {
                Ok(mention) => mentions.push(mention),
                Err(DropReason::Unparseable) => diag.dropped_unparseable += 1,
                Err(DropReason::NonPositive) => diag.dropped_nonpositive += 1,
                Err(DropReason::AboveCap) => diag.dropped_above_cap += 1,
            }
        }
    }
    diag.mentions_emitted = mentions.len();
    (mentions, diag)
}

/// Extracts mentions from every review.
///
/// Per-review extraction is pure, so reviews are processed in parallel; the
/// result is order-normalized by (review_id, phrase position) and therefore
/// identical regardless of worker count.
pub fn extract_corpus(
    reviews: &[ReviewRecord],
    lexicon: &UnitLexicon,
    options: &ExtractOptions,
) -> ExtractOutcome {
    let per_review: Vec<(Vec<AgeMention>, ExtractDiagnostics)> = reviews
        .par_iter()
        .map(|review| extract_review(review, lexicon, options))
        .collect();

    let mut diagnostics = ExtractDiagnostics::default();
    let mut keyed: Vec<(String, Vec<AgeMention>)> = Vec::with_capacity(per_review.len());
    for (review, (mentions, diag)) in reviews.iter().zip(per_review) {
        diagnostics.absorb(&diag);
        if !mentions.is_empty() {
            keyed.push((review.review_id.clone(), mentions));
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mentions = keyed.into_iter().flat_map(|(_, m)| m).collect();
    ExtractOutcome {
        mentions,
        diagnostics,
    }
}

/// Writes mentions as JSON lines.
pub fn write_mentions(path: &std::path::Path, mentions: &[AgeMention]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for m in mentions {
        serde_json::to_writer(&mut out, m).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads mentions written by [`write_mentions`].
pub fn load_mentions(path: &std::path::Path) -> Result<Vec<AgeMention>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut mentions = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mention: AgeMention = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), no + 1)))?;
        mentions.push(mention);
    }
    Ok(mentions)
}

/// Groups mentions by a key, preserving relative order within groups.
pub fn group_by<'a, K: Ord>(
    mentions: &'a [AgeMention],
    key: impl Fn(&AgeMention) -> K,
) -> std::collections::BTreeMap<K, Vec<&'a AgeMention>> {
    let mut groups: std::collections::BTreeMap<K, Vec<&AgeMention>> =
        std::collections::BTreeMap::new();
    for m in mentions {
        groups.entry(key(m)).or_default().push(m);
    }
    groups
}
