//! age-lens: mines age mentions from product reviews, builds time-dependent
//! user and item age profiles, and post-filters collaborative-filtering
//! recommendations with them.
//!
//! Pipeline stages, each usable on its own:
//!
//! - [`corpus`] — review ingestion, statistics, activity filters
//! - [`lexicon`] / [`extract`] — unit lexicon and mention extraction
//! - [`item_profile`] — per-item target age ranges
//! - [`user_profile`] — per-user target-age-over-time models
//! - [`matrix`] / [`recommend`] / [`als`] — CF engines and the age filter
//! - [`eval`] — temporal split, ranking metrics, drift, experiment runner
//! - [`synth`] — synthetic corpus generator with planted ground truth

pub mod als;
pub mod corpus;
pub mod date;
pub mod error;
pub mod eval;
pub mod extract;
pub mod item_profile;
pub mod lexicon;
pub mod matrix;
pub mod recommend;
pub mod synth;
pub mod user_profile;

pub use corpus::{corpus_stats, filter_min_mentions, load_reviews, CorpusStats, ReviewRecord};
pub use date::Day;
pub use error::{Error, Result};
pub use extract::{extract_corpus, AgeMention, ExtractOptions};
pub use item_profile::{profile_items, ItemAgeProfile, SubsetStrategy, TukeyParams};
pub use lexicon::{discover_unit_variants, CanonicalUnit, UnitLexicon};
pub use matrix::{Rating, RatingMatrix};
pub use recommend::{post_filter, recommend_for, EngineKind, RecommendationList};
pub use user_profile::{build_user_models, target_age, UserAgeModel};
