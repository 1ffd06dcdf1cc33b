//! age-lens command-line interface: one binary wiring all pipeline stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use sha2::{Digest, Sha256};

use age_lens::corpus::{corpus_stats, load_reviews};
use age_lens::date::Day;
use age_lens::error::Error;
use age_lens::eval::{
    drift_series, run_experiment, temporal_split, verify_no_leakage, write_drift_csv,
    ExperimentConfig,
};
use age_lens::extract::{extract_corpus, load_mentions, write_mentions, ExtractOptions};
use age_lens::item_profile::{
    load_item_profiles, profile_items, write_item_profiles, SubsetStrategy, TukeyParams,
};
use age_lens::lexicon::{discover_unit_variants, DiscoveryStrategy, UnitLexicon};
use age_lens::matrix::{dedupe_ratings, load_ratings_csv, ratings_from_reviews, RatingMatrix};
use age_lens::recommend::{post_filter, EngineKind, FilterVerdict, ItemSimilarities, Recommender};
use age_lens::user_profile::{
    age_time_normalization, build_user_models, collect_user_mentions, load_user_models,
    preferred_model, target_age, write_user_models, ModelVariant,
};

#[derive(Parser)]
#[command(name = "age-lens", version, about = "Review-mined age profiles for time-aware recommendations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (0 uses all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Recompute outputs even when inputs are unchanged
    #[arg(long, global = true)]
    force: bool,

    /// Log level: error, warn, info, debug, trace
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// Seed override for stages that draw random numbers
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics as JSON on stdout
    Stats {
        /// JSON-lines review file
        #[arg(long)]
        input: PathBuf,
        /// Precomputed mentions; extracted on the fly when absent
        #[arg(long)]
        mentions: Option<PathBuf>,
    },

    /// Extract age mentions from review text
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Lexicon file, or "builtin"
        #[arg(long, default_value = "builtin")]
        lexicon: String,
        /// Extend the lexicon from the corpus first: edit | skipgram
        #[arg(long)]
        discover: Option<String>,
        /// Skip-gram context window for --discover skipgram
        #[arg(long, default_value_t = 3)]
        window: usize,
        /// Minimum number-adjacent occurrences for a discovered variant
        #[arg(long, default_value_t = 5)]
        min_count: usize,
        /// Drop mentions above this age in years
        #[arg(long, default_value_t = 18.0)]
        max_value_years: f64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Build per-item target age ranges
    ProfileItems {
        #[arg(long)]
        mentions: PathBuf,
        /// all | rating | poss | rating-poss
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value_t = 4)]
        min_reviews: usize,
        #[arg(long, default_value_t = 0.05)]
        p_low: f64,
        #[arg(long, default_value_t = 0.95)]
        p_high: f64,
        #[arg(long, default_value_t = 1.5)]
        fence_k: f64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Fit per-user target-age models
    ProfileUsers {
        #[arg(long)]
        mentions: PathBuf,
        /// Minimum mention terms per variant stream
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Apply the outlier fences to each user's stream before fitting
        #[arg(long)]
        user_tukey: bool,
        #[arg(long)]
        out: PathBuf,
    },

    /// Predict a user's target age at a date
    PredictAge {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        user: String,
        /// YYYY-MM-DD
        #[arg(long)]
        date: String,
    },

    /// Emit one user's (dt_years, dage_years) regression pairs as CSV
    RegressionDump {
        #[arg(long)]
        mentions: PathBuf,
        #[arg(long)]
        user: String,
        /// possessive | all-terms
        #[arg(long, default_value = "possessive")]
        variant: String,
    },

    /// Top-n recommendations for one user
    Recommend {
        /// user_id,item_id,rating,timestamp CSV
        #[arg(long)]
        ratings: PathBuf,
        /// ub-cf | ib-cf | mf-als
        #[arg(long)]
        engine: String,
        #[arg(long)]
        user: String,
        /// YYYY-MM-DD
        #[arg(long)]
        date: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// on | off
        #[arg(long, default_value = "on")]
        post_filter: String,
        #[arg(long)]
        item_profiles: Option<PathBuf>,
        #[arg(long)]
        user_models: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        oversample: usize,
        #[arg(long, default_value_t = 50)]
        neighborhood: usize,
        #[arg(long, default_value_t = 20)]
        als_rank: usize,
        #[arg(long, default_value_t = 0.05)]
        als_lambda: f64,
        #[arg(long, default_value_t = 15)]
        als_sweeps: usize,
    },

    /// Run the full evaluation grid from a config file
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        drift_csv: Option<PathBuf>,
    },

    /// Test-vs-train item-age drift without running recommenders
    DriftReport {
        #[arg(long)]
        reviews: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 4)]
        min_reviews: usize,
        #[arg(long)]
        out: PathBuf,
    },

    /// Generate a synthetic corpus with planted ground truth
    SynthGen {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 80)]
        items: usize,
        /// Shorthand-unit rate in generated text
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value = "synth")]
        out_dir: PathBuf,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            emit_error_json("config", &e.to_string());
            return 1;
        }
    };

    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            emit_error_json("config", &format!("thread pool: {e}"));
            return 1;
        }
    }

    match run(&cli) {
        Ok(()) => 0,
        Err(err) => {
            let kind = match err {
                Error::Config { .. } => "config",
                _ => "data",
            };
            eprintln!("error: {err}");
            emit_error_json(kind, &err.to_string());
            if kind == "config" {
                1
            } else {
                2
            }
        }
    }
}

fn emit_error_json(kind: &str, message: &str) {
    let payload = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{payload}");
}

/// Content hash of a stage: parameters plus every input file's bytes.
/// Outputs are skipped when the stamp matches and `--force` is absent.
struct Stamp {
    path: PathBuf,
    digest: String,
}

impl Stamp {
    fn compute(
        params: &serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> age_lens::Result<Stamp> {
        let mut hasher = Sha256::new();
        hasher.update(params.to_string().as_bytes());
        for input in inputs {
            hasher.update(input.to_string_lossy().as_bytes());
            let bytes = std::fs::read(input).map_err(|e| Error::io(*input, e))?;
            hasher.update(&bytes);
        }
        let digest: String = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let mut path = outputs[0].as_os_str().to_owned();
        path.push(".stamp");
        Ok(Stamp {
            path: PathBuf::from(path),
            digest,
        })
    }

    fn is_current(&self, outputs: &[&Path], force: bool) -> bool {
        if force {
            return false;
        }
        if !outputs.iter().all(|p| p.exists()) {
            return false;
        }
        std::fs::read_to_string(&self.path)
            .map(|existing| existing.trim() == self.digest)
            .unwrap_or(false)
    }

    fn commit(&self) -> age_lens::Result<()> {
        std::fs::write(&self.path, &self.digest).map_err(|e| Error::io(&self.path, e))
    }
}

fn run(cli: &Cli) -> age_lens::Result<()> {
    match &cli.command {
        Command::Stats { input, mentions } => {
            let loaded = load_reviews(input)?;
            info!(
                "loaded {} reviews ({} lines skipped)",
                loaded.reviews.len(),
                loaded.skipped
            );
            let mentions = match mentions {
                Some(path) => load_mentions(path)?,
                None => {
                    extract_corpus(
                        &loaded.reviews,
                        &UnitLexicon::builtin(),
                        &ExtractOptions::default(),
                    )
                    .mentions
                }
            };
            let stats = corpus_stats(&loaded.reviews, &mentions);
            println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
            Ok(())
        }

        Command::Extract {
            input,
            lexicon,
            discover,
            window,
            min_count,
            max_value_years,
            out,
        } => {
            let params = serde_json::json!({
                "cmd": "extract", "lexicon": lexicon, "discover": discover,
                "window": window, "min_count": min_count, "max_value_years": max_value_years,
            });
            let lex_inputs: Vec<&Path> = if lexicon == "builtin" {
                vec![input.as_path()]
            } else {
                vec![input.as_path(), Path::new(lexicon)]
            };
            let stamp = Stamp::compute(&params, &lex_inputs, &[out.as_path()])?;
            if stamp.is_current(&[out.as_path()], cli.force) {
                info!("{} is up to date, skipping (use --force to rerun)", out.display());
                return Ok(());
            }

            let loaded = load_reviews(input)?;
            let mut lex = if lexicon == "builtin" {
                UnitLexicon::builtin()
            } else {
                UnitLexicon::load(Path::new(lexicon))?
            };
            if let Some(mode) = discover {
                let strategy = match mode.as_str() {
                    "edit" => DiscoveryStrategy::EditDistance {
                        max_distance: 2,
                        min_count: *min_count,
                    },
                    "skipgram" => DiscoveryStrategy::ContextSimilarity {
                        window: *window,
                        min_similarity: 0.5,
                        min_count: *min_count,
                    },
                    other => {
                        return Err(Error::config(format!(
                            "unknown discovery strategy `{other}` (expected edit|skipgram)"
                        )))
                    }
                };
                let sentences: Vec<_> = loaded
                    .reviews
                    .iter()
                    .flat_map(|r| age_lens::extract::tokenize(&r.text))
                    .collect();
                lex = discover_unit_variants(&sentences, &lex, &strategy);
            }
            let options = ExtractOptions {
                max_value_years: *max_value_years,
                ..ExtractOptions::default()
            };
            let outcome = extract_corpus(&loaded.reviews, &lex, &options);
            info!(
                "extracted {} mentions from {} reviews (dropped: {} unparseable, {} non-positive, {} above cap)",
                outcome.mentions.len(),
                outcome.diagnostics.reviews_scanned,
                outcome.diagnostics.dropped_unparseable,
                outcome.diagnostics.dropped_nonpositive,
                outcome.diagnostics.dropped_above_cap,
            );
            write_mentions(out, &outcome.mentions)?;
            stamp.commit()
        }

        Command::ProfileItems {
            mentions,
            strategy,
            min_reviews,
            p_low,
            p_high,
            fence_k,
            out,
        } => {
            let strategy = SubsetStrategy::parse(strategy)?;
            let params = serde_json::json!({
                "cmd": "profile-items", "strategy": strategy.name(), "min_reviews": min_reviews,
                "p_low": p_low, "p_high": p_high, "fence_k": fence_k,
            });
            let stamp = Stamp::compute(&params, &[mentions.as_path()], &[out.as_path()])?;
            if stamp.is_current(&[out.as_path()], cli.force) {
                info!("{} is up to date, skipping (use --force to rerun)", out.display());
                return Ok(());
            }
            let loaded = load_mentions(mentions)?;
            let tukey = TukeyParams {
                p_low: *p_low,
                p_high: *p_high,
                fence_k: *fence_k,
            };
            let profiles = profile_items(&loaded, strategy, *min_reviews, &tukey);
            info!("profiled {} items", profiles.len());
            write_item_profiles(out, &profiles)?;
            stamp.commit()
        }

        Command::ProfileUsers {
            mentions,
            k,
            user_tukey,
            out,
        } => {
            let params = serde_json::json!({
                "cmd": "profile-users", "k": k, "user_tukey": user_tukey,
            });
            let stamp = Stamp::compute(&params, &[mentions.as_path()], &[out.as_path()])?;
            if stamp.is_current(&[out.as_path()], cli.force) {
                info!("{} is up to date, skipping (use --force to rerun)", out.display());
                return Ok(());
            }
            let loaded = load_mentions(mentions)?;
            let tukey = TukeyParams::default();
            let models = build_user_models(&loaded, *k, user_tukey.then_some(&tukey));
            info!("fitted {} user models", models.len());
            write_user_models(out, &models)?;
            stamp.commit()
        }

        Command::PredictAge { models, user, date } => {
            let models = load_user_models(models)?;
            let t = Day::parse(date)?;
            let model = preferred_model(&models, user)
                .ok_or_else(|| Error::Data(format!("no model for user {user}")))?;
            println!("{:.4}", target_age(model, t));
            Ok(())
        }

        Command::RegressionDump {
            mentions,
            user,
            variant,
        } => {
            let variant = match variant.as_str() {
                "possessive" => ModelVariant::Possessive,
                "all-terms" => ModelVariant::AllTerms,
                other => {
                    return Err(Error::config(format!(
                        "unknown variant `{other}` (expected possessive|all-terms)"
                    )))
                }
            };
            let loaded = load_mentions(mentions)?;
            let (poss, general) = collect_user_mentions(user, &loaded);
            let stream = match variant {
                ModelVariant::Possessive => poss,
                ModelVariant::AllTerms => general,
            };
            if stream.is_empty() {
                return Err(Error::Data(format!(
                    "no {} mentions for user {user}",
                    match variant {
                        ModelVariant::Possessive => "possessive",
                        ModelVariant::AllTerms => "general",
                    }
                )));
            }
            println!("dt_years,dage_years");
            for (dt, dage) in age_time_normalization(&stream) {
                println!("{dt},{dage}");
            }
            Ok(())
        }

        Command::Recommend {
            ratings,
            engine,
            user,
            date,
            n,
            post_filter: pf_mode,
            item_profiles,
            user_models,
            oversample,
            neighborhood,
            als_rank,
            als_lambda,
            als_sweeps,
        } => {
            let engine_kind = EngineKind::parse(engine)?;
            let filter_on = match pf_mode.as_str() {
                "on" => true,
                "off" => false,
                other => {
                    return Err(Error::config(format!(
                        "--post-filter must be on or off, got `{other}`"
                    )))
                }
            };
            let t = Day::parse(date)?;
            let loaded = load_ratings_csv(ratings)?;
            let matrix = RatingMatrix::from_ratings(&dedupe_ratings(&loaded));
            let engine = match engine_kind {
                EngineKind::UbCf => Recommender::UserBased {
                    matrix: &matrix,
                    k: *neighborhood,
                },
                EngineKind::IbCf => Recommender::ItemBased {
                    matrix: &matrix,
                    sims: ItemSimilarities::compute(&matrix),
                },
                EngineKind::MfAls => Recommender::Factor {
                    matrix: &matrix,
                    model: age_lens::als::als_train(
                        &matrix,
                        *als_rank,
                        *als_lambda,
                        *als_sweeps,
                        cli.seed.unwrap_or(42),
                    )?,
                },
            };

            #[derive(serde::Serialize)]
            struct RecommendOutput {
                list: age_lens::RecommendationList,
                engine: &'static str,
                post_filter: bool,
                #[serde(skip_serializing_if = "Option::is_none")]
                predicted_age_years: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                unfiltered: Option<bool>,
                #[serde(skip_serializing_if = "Vec::is_empty")]
                verdicts: Vec<(String, FilterVerdict)>,
            }

            let output = if filter_on {
                let profiles = match item_profiles {
                    Some(path) => load_item_profiles(path)?,
                    None => BTreeMap::new(),
                };
                let models = match user_models {
                    Some(path) => load_user_models(path)?,
                    None => BTreeMap::new(),
                };
                let model = preferred_model(&models, user);
                let candidates = engine.top_n(user, n * oversample, t);
                let outcome = post_filter(&candidates, model, &profiles, t);
                RecommendOutput {
                    list: outcome.list.truncated(*n),
                    engine: engine_kind.name(),
                    post_filter: true,
                    predicted_age_years: outcome.predicted_age_years,
                    unfiltered: Some(outcome.unfiltered),
                    verdicts: outcome.verdicts,
                }
            } else {
                RecommendOutput {
                    list: engine.top_n(user, *n, t),
                    engine: engine_kind.name(),
                    post_filter: false,
                    predicted_age_years: None,
                    unfiltered: None,
                    verdicts: Vec::new(),
                }
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&output).expect("output serializes")
            );
            Ok(())
        }

        Command::Evaluate {
            config,
            out,
            drift_csv,
        } => {
            let mut experiment = ExperimentConfig::load(config)?;
            if let Some(seed) = cli.seed {
                experiment.seed = seed;
            }
            let issues = experiment.validate();
            if !issues.is_empty() {
                return Err(Error::Config { issues });
            }

            let mut inputs: Vec<&Path> = vec![config.as_path()];
            for path in [
                &experiment.reviews,
                &experiment.ratings,
                &experiment.mentions,
                &experiment.item_profiles,
                &experiment.user_models,
            ]
            .into_iter()
            .flatten()
            {
                inputs.push(path.as_path());
            }
            let mut outputs: Vec<&Path> = vec![out.as_path()];
            if let Some(csv) = drift_csv {
                outputs.push(csv.as_path());
            }
            let params = serde_json::json!({ "cmd": "evaluate", "seed": experiment.seed });
            let stamp = Stamp::compute(&params, &inputs, &outputs)?;
            if stamp.is_current(&outputs, cli.force) {
                info!("{} is up to date, skipping (use --force to rerun)", out.display());
                return Ok(());
            }

            let report = run_experiment(&experiment)?;
            for row in &report.strategies {
                info!(
                    "{:<14} ndcg@{n}={:.4} map@{n}={:.4} p@{n}={:.4} r@{n}={:.4}",
                    row.strategy,
                    row.ndcg,
                    row.map,
                    row.precision,
                    row.recall,
                    n = report.n
                );
            }
            report.write(out)?;
            if let Some(csv) = drift_csv {
                write_drift_csv(csv, &report.drift)?;
            }
            stamp.commit()
        }

        Command::DriftReport {
            reviews,
            train_fraction,
            min_reviews,
            out,
        } => {
            let params = serde_json::json!({
                "cmd": "drift-report", "train_fraction": train_fraction, "min_reviews": min_reviews,
            });
            let stamp = Stamp::compute(&params, &[reviews.as_path()], &[out.as_path()])?;
            if stamp.is_current(&[out.as_path()], cli.force) {
                info!("{} is up to date, skipping (use --force to rerun)", out.display());
                return Ok(());
            }
            let loaded = load_reviews(reviews)?;
            let ratings = dedupe_ratings(&ratings_from_reviews(&loaded.reviews));
            let split = temporal_split(&ratings, *train_fraction)?;
            let train_reviews: Vec<_> = loaded
                .reviews
                .iter()
                .filter(|r| split.is_train_side(&r.user_id, r.date))
                .cloned()
                .collect();
            let outcome = extract_corpus(
                &train_reviews,
                &UnitLexicon::builtin(),
                &ExtractOptions::default(),
            );
            verify_no_leakage(&outcome.mentions, &split)?;
            let profiles = profile_items(
                &outcome.mentions,
                SubsetStrategy::All,
                *min_reviews,
                &TukeyParams::default(),
            );
            let series = drift_series(&split, &profiles, &BTreeMap::new());
            write_drift_csv(out, &series)?;
            info!("wrote {} drift buckets to {}", series.len(), out.display());
            stamp.commit()
        }

        Command::SynthGen {
            users,
            items,
            noise,
            out_dir,
        } => {
            let config = age_lens::synth::SynthConfig {
                n_users: *users,
                n_items: *items,
                seed: cli.seed.unwrap_or(42),
                typo_rate: *noise,
                ..age_lens::synth::SynthConfig::default()
            };
            if *users < 1 || *items < 1 {
                return Err(Error::config("--users and --items must be at least 1"));
            }
            let corpus = age_lens::synth::generate(&config);
            age_lens::synth::write_corpus(out_dir, &corpus)?;
            info!(
                "wrote {} reviews for {} users and {} items under {}",
                corpus.reviews.len(),
                users,
                items,
                out_dir.display()
            );
            Ok(())
        }
    }
}
