//! Synthetic review corpus with planted ground truth.
//!
//! Items get true target-age ranges, users get true child birthdates, and
//! review text embeds age phrases consistent with (purchase date - birth
//! date). Ratings skew positive when the child's age falls inside the
//! item's true range. The generator's inputs double as the oracle for
//! end-to-end checks: extraction, profile recovery, and the benefit of age
//! post-filtering are all measurable against the planted values.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ReviewRecord;
use crate::date::{Day, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::lexicon::CanonicalUnit;

/// Generator knobs. Defaults produce a corpus where user target ages drift
/// upward through the evaluation window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub seed: u64,
    /// Inclusive bounds on reviews per user.
    pub reviews_per_user: (usize, usize),
    /// Inclusive bounds on each user's purchase window, in days.
    pub window_days: (i64, i64),
    /// Item range low bound is drawn from [0, this] in years.
    pub max_range_start: f64,
    /// Item range width bounds, in years.
    pub range_width: (f64, f64),
    /// Child age at the user's first purchase, in years.
    pub start_age: (f64, f64),
    /// Probability a purchase is drawn from the age-appropriate pool.
    pub p_inrange: f64,
    /// Probability a review text mentions the child's age.
    pub p_mention: f64,
    /// Probability a mention carries a possessive pronoun.
    pub p_possessive: f64,
    /// Probability a unit is written as a shorthand variant ("mnths").
    pub typo_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_items: 80,
            seed: 42,
            reviews_per_user: (10, 22),
            window_days: (550, 900),
            max_range_start: 3.5,
            range_width: (0.6, 1.4),
            start_age: (0.1, 1.3),
            p_inrange: 0.9,
            p_mention: 0.9,
            p_possessive: 0.7,
            typo_rate: 0.0,
        }
    }
}

/// True target-age range of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemTruth {
    pub low_years: f64,
    pub high_years: f64,
}

/// True child birthdate behind one user's purchases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub birth: Day,
    /// Age grows one year per year by construction.
    pub slope: f64,
}

/// A mention the generator wrote into review text.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMention {
    pub review_id: String,
    pub value_years: f64,
    pub unit: CanonicalUnit,
    pub possessive: bool,
}

#[derive(Debug)]
pub struct SynthCorpus {
    pub reviews: Vec<ReviewRecord>,
    pub items: BTreeMap<String, ItemTruth>,
    pub users: BTreeMap<String, UserTruth>,
    pub planted: Vec<PlantedMention>,
}

const FILLERS: [&str; 6] = [
    "Shipping was fast and the packaging was fine.",
    "The color is lovely in person.",
    "Would buy this again without hesitation.",
    "Quality feels a bit cheap for the price.",
    "Easy to clean, which matters a lot.",
    "Arrived two days early.",
];

fn unit_surface(unit: CanonicalUnit, value: f64, typo: bool, rng: &mut ChaCha8Rng) -> String {
    let plural = value != 1.0;
    if typo {
        let variants: &[&str] = match unit {
            CanonicalUnit::Month => &["mnths", "mos", "mths", "mnts"],
            CanonicalUnit::Year => &["yrs", "yr"],
            CanonicalUnit::Week => &["wks", "wk"],
        };
        (*variants.choose(rng).unwrap()).to_string()
    } else {
        let name = unit.name();
        if plural {
            format!("{name}s")
        } else {
            name.to_string()
        }
    }
}

const NUMBER_WORDS: [&str; 12] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve",
];

/// Age phrase text plus the exact value/unit it encodes.
fn age_phrase(age_years: f64, typo: bool, rng: &mut ChaCha8Rng) -> (String, f64, CanonicalUnit) {
    if age_years < 2.0 {
        // whole months
        let months = (age_years * 12.0).round().max(1.0);
        let surface = unit_surface(CanonicalUnit::Month, months, typo, rng);
        (format!("{months:.0} {surface}"), months, CanonicalUnit::Month)
    } else {
        // one decimal of a year; integers sometimes become words or
        // "N and a half" spellings to exercise the parser
        let tenths = (age_years * 10.0).round() / 10.0;
        let surface = unit_surface(CanonicalUnit::Year, tenths, typo, rng);
        let is_integer = tenths.fract() == 0.0;
        let is_half = (tenths.fract() - 0.5).abs() < 1e-9;
        if is_integer && tenths <= 12.0 && rng.gen_bool(0.3) {
            let word = NUMBER_WORDS[tenths as usize - 1];
            (format!("{word} {surface}"), tenths, CanonicalUnit::Year)
        } else if is_half && tenths >= 1.5 && rng.gen_bool(0.5) {
            let whole = tenths.floor();
            (
                format!("{whole:.0} and a half {surface}"),
                tenths,
                CanonicalUnit::Year,
            )
        } else if is_integer {
            (format!("{tenths:.0} {surface}"), tenths, CanonicalUnit::Year)
        } else {
            (format!("{tenths:.1} {surface}"), tenths, CanonicalUnit::Year)
        }
    }
}

/// Sentence with the age phrase placed so the possessive (when present)
/// sits within the extractor's pronoun window.
fn mention_sentence(phrase: &str, possessive: bool, rng: &mut ChaCha8Rng) -> String {
    if possessive {
        let templates = [
            format!("My son is {phrase} old and he loves this."),
            format!("My daughter is {phrase} old now."),
            format!("Our little one is {phrase} and uses it daily."),
            format!("My baby just turned {phrase}."),
        ];
        templates.choose(rng).unwrap().clone()
    } else {
        let templates = [
            format!("Great for a child around {phrase} old."),
            format!("Perfect fit for a {phrase} old."),
            format!("Works well for kids of {phrase}."),
            format!("Seems aimed at {phrase} olds."),
        ];
        templates.choose(rng).unwrap().clone()
    }
}

fn summary_for(rating: u8) -> &'static str {
    match rating {
        5 => "Love it",
        4 => "Really good",
        3 => "Okay",
        2 => "Disappointed",
        _ => "Would not recommend",
    }
}

/// Generates the corpus. The same config always yields the same corpus.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    assert!(config.n_users >= 1 && config.n_items >= 1, "sizes must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut items: BTreeMap<String, ItemTruth> = BTreeMap::new();
    for i in 0..config.n_items {
        let low = rng.gen_range(0.0..config.max_range_start);
        let width = rng.gen_range(config.range_width.0..config.range_width.1);
        items.insert(
            format!("item{i:04}"),
            ItemTruth {
                low_years: low,
                high_years: low + width,
            },
        );
    }
    let item_ids: Vec<&String> = items.keys().collect();

    let mut users: BTreeMap<String, UserTruth> = BTreeMap::new();
    let mut reviews = Vec::new();
    let mut planted = Vec::new();
    let mut review_no = 0usize;

    let first_start = Day::from_ymd(2011, 1, 1).unwrap();
    let last_start = Day::from_ymd(2013, 6, 30).unwrap();

    for u in 0..config.n_users {
        let user_id = format!("user{u:05}");
        let start = first_start.add_days(rng.gen_range(0..=(last_start.0 - first_start.0)));
        let start_age = rng.gen_range(config.start_age.0..config.start_age.1);
        let birth = start.add_days(-((start_age * DAYS_PER_YEAR).round() as i64));
        users.insert(
            user_id.clone(),
            UserTruth { birth, slope: 1.0 },
        );

        let n_reviews = rng.gen_range(config.reviews_per_user.0..=config.reviews_per_user.1);
        let window = rng.gen_range(config.window_days.0..=config.window_days.1);
        let mut offsets: Vec<i64> = (0..n_reviews)
            .map(|_| rng.gen_range(0..=window))
            .collect();
        offsets.sort_unstable();
        offsets.dedup();

        let mut bought: Vec<&str> = Vec::new();
        for offset in offsets {
            let date = start.add_days(offset);
            let age = date.years_since(birth);

            let inrange_pool: Vec<&String> = item_ids
                .iter()
                .filter(|id| {
                    let t = &items[**id];
                    t.low_years <= age && age <= t.high_years && !bought.contains(&id.as_str())
                })
                .copied()
                .collect();
            let item_id = if !inrange_pool.is_empty() && rng.gen_bool(config.p_inrange) {
                (*inrange_pool.choose(&mut rng).unwrap()).clone()
            } else {
                let left: Vec<&&String> = item_ids
                    .iter()
                    .filter(|id| !bought.contains(&id.as_str()))
                    .collect();
                if left.is_empty() {
                    continue;
                }
                (**left.choose(&mut rng).unwrap()).clone()
            };

            let truth = items[&item_id];
            let in_range = truth.low_years <= age && age <= truth.high_years;
            let rating: u8 = if in_range {
                if rng.gen_bool(0.55) {
                    5
                } else {
                    4
                }
            } else {
                rng.gen_range(1..=3)
            };

            let review_id = format!("r{review_no:07}");
            review_no += 1;

            let mut sentences: Vec<String> = Vec::new();
            let mut mention_here = rng.gen_bool(config.p_mention);
            if mention_here {
                let possessive = rng.gen_bool(config.p_possessive);
                let typo = config.typo_rate > 0.0 && rng.gen_bool(config.typo_rate);
                let (phrase, value, unit) = age_phrase(age, typo, &mut rng);
                sentences.push(mention_sentence(&phrase, possessive, &mut rng));
                planted.push(PlantedMention {
                    review_id: review_id.clone(),
                    value_years: value * unit.years_per_unit(),
                    unit,
                    possessive,
                });
            } else {
                mention_here = false;
            }
            let n_fillers = rng.gen_range(usize::from(!mention_here)..=2);
            for _ in 0..n_fillers {
                sentences.push((*FILLERS.choose(&mut rng).unwrap()).to_string());
            }

            reviews.push(ReviewRecord {
                review_id,
                user_id: user_id.clone(),
                item_id,
                rating,
                date,
                text: sentences.join(" "),
                summary: summary_for(rating).to_string(),
            });
            let item_ref = &reviews.last().unwrap().item_id;
            if let Some(pos) = item_ids.iter().position(|id| *id == item_ref) {
                bought.push(item_ids[pos].as_str());
            }
        }
    }

    SynthCorpus {
        reviews,
        items,
        users,
        planted,
    }
}

/// Writes `reviews.jsonl`, `item_truth.json`, and `user_truth.json` into a
/// directory.
pub fn write_corpus(dir: &Path, corpus: &SynthCorpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::corpus::write_reviews(&dir.join("reviews.jsonl"), &corpus.reviews)?;
    let items =
        serde_json::to_string_pretty(&corpus.items).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(dir.join("item_truth.json"), items)
        .map_err(|e| Error::io(dir.join("item_truth.json"), e))?;
    let users =
        serde_json::to_string_pretty(&corpus.users).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(dir.join("user_truth.json"), users)
        .map_err(|e| Error::io(dir.join("user_truth.json"), e))?;
    Ok(())
}
