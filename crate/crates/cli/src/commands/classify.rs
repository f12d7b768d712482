use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use corpusmix_core::classify::{
    self, build_training_set, identify_language, load_model, save_model, select_top_fraction,
    select_top_fraction_per_language, train, LabeledExample, TrainConfig, TrainingSetSpec,
};
use corpusmix_core::pipeline::AuditRecord;
use corpusmix_core::shard::write_shard;
use corpusmix_core::Document;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::exit_for;
use crate::jsonl;

#[derive(Args)]
pub struct TrainOpts {
    /// Hashed feature dimension; must be a power of two.
    #[arg(long, default_value_t = classify::DEFAULT_FEATURE_DIM)]
    feature_dim: usize,

    #[arg(long, default_value_t = 5)]
    epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl TrainOpts {
    fn to_config(&self) -> Result<TrainConfig> {
        if !self.feature_dim.is_power_of_two() {
            bail!("--feature-dim must be a power of two, got {}", self.feature_dim);
        }
        Ok(TrainConfig {
            feature_dim: self.feature_dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..TrainConfig::default()
        })
    }
}

fn train_and_save(examples: &[LabeledExample], opts: &TrainOpts, out: &PathBuf) -> Result<()> {
    let trained = train(examples, &opts.to_config()?)?;
    save_model(&trained.model, out)?;
    let losses: Vec<String> = trained.epoch_losses.iter().map(|l| format!("{l:.4}")).collect();
    println!(
        "trained on {} examples, {} classes; epoch losses: {}",
        examples.len(),
        trained.model.labels.len(),
        losses.join(" ")
    );
    println!("model written to {}", out.display());
    Ok(())
}

#[derive(Args)]
pub struct QualityTrainArgs {
    /// Positive-class shards. With --sample-spec, documents pool by their
    /// source field.
    #[arg(long, required = true, num_args = 1..)]
    positives: Vec<PathBuf>,

    /// Negative-class shards (e.g. raw web text).
    #[arg(long, required = true, num_args = 1..)]
    negatives: Vec<PathBuf>,

    /// Model file (versioned binary; round-trips bit-exactly).
    #[arg(long)]
    out: PathBuf,

    /// Training-set composition as TOML: per-source positive fractions plus
    /// n_positive/n_negative. Omitted = use every document.
    #[arg(long)]
    sample_spec: Option<PathBuf>,

    #[command(flatten)]
    train: TrainOpts,
}

pub fn run_quality_train(args: QualityTrainArgs, fail_fast: bool) -> Result<ExitCode> {
    let (positives, bad_pos) = jsonl::read_document_shards(&args.positives, fail_fast)?;
    let (negatives, bad_neg) = jsonl::read_document_shards(&args.negatives, fail_fast)?;

    let examples = match &args.sample_spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            let spec: TrainingSetSpec =
                toml::from_str(&text).with_context(|| format!("parse spec {}", path.display()))?;
            let mut pools: BTreeMap<String, Vec<Document>> = BTreeMap::new();
            for doc in positives {
                pools.entry(doc.source.clone()).or_default().push(doc);
            }
            build_training_set(&pools, &spec, &negatives, args.train.seed)?
        }
        None => {
            let mut examples: Vec<LabeledExample> = positives
                .into_iter()
                .map(|d| LabeledExample::new(d.text, classify::POSITIVE_LABEL))
                .collect();
            examples.extend(
                negatives
                    .into_iter()
                    .map(|d| LabeledExample::new(d.text, classify::NEGATIVE_LABEL)),
            );
            examples
        }
    };
    train_and_save(&examples, &args.train, &args.out)?;
    Ok(exit_for(bad_pos + bad_neg))
}

#[derive(Args)]
pub struct QualityFilterArgs {
    /// Trained quality model.
    #[arg(long)]
    model: PathBuf,

    /// Input document shard (JSONL).
    #[arg(long)]
    input: PathBuf,

    /// Kept documents, in input order.
    #[arg(long)]
    output: PathBuf,

    /// One record per dropped document: id, layer, reason.
    #[arg(long)]
    audit: Option<PathBuf>,

    /// Fraction of documents to keep.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,

    /// Apply the cut over the whole corpus instead of within each language.
    #[arg(long)]
    global: bool,
}

pub fn run_quality_filter(args: QualityFilterArgs, fail_fast: bool) -> Result<ExitCode> {
    let model = load_model(&args.model)?;
    let (docs, bad_lines) = jsonl::read_documents(&args.input, fail_fast)?;
    let n_in = docs.len();

    let selected = if args.global {
        select_top_fraction(&docs, &model, args.fraction, classify::POSITIVE_LABEL)?
    } else {
        select_top_fraction_per_language(&docs, &model, args.fraction, classify::POSITIVE_LABEL)?
    };
    let keep: HashSet<&str> = selected.iter().map(|d| d.id.as_str()).collect();
    let kept: Vec<Document> = docs.iter().filter(|d| keep.contains(d.id.as_str())).cloned().collect();

    write_shard(&args.output, &kept)?;
    if let Some(path) = &args.audit {
        let audit: Vec<AuditRecord> = docs
            .iter()
            .filter(|d| !keep.contains(d.id.as_str()))
            .map(|d| AuditRecord {
                id: d.id.clone(),
                layer: "quality-filter".to_string(),
                reason: "quality_below_threshold".to_string(),
            })
            .collect();
        jsonl::write_records(path, &audit)?;
    }
    println!("quality-filter: kept {} of {} documents", kept.len(), n_in);
    Ok(exit_for(bad_lines))
}

#[derive(Args)]
pub struct LangidTrainArgs {
    /// Training shards; each document's language field is its label.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,

    /// Model file (versioned binary; round-trips bit-exactly).
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    train: TrainOpts,
}

pub fn run_langid_train(args: LangidTrainArgs, fail_fast: bool) -> Result<ExitCode> {
    let (docs, bad_lines) = jsonl::read_document_shards(&args.input, fail_fast)?;
    let examples: Vec<LabeledExample> = docs
        .into_iter()
        .map(|d| LabeledExample::new(d.text, d.language))
        .collect();
    train_and_save(&examples, &args.train, &args.out)?;
    Ok(exit_for(bad_lines))
}

#[derive(Args)]
pub struct LangidPredictArgs {
    /// Trained language-identification model.
    #[arg(long)]
    model: PathBuf,

    /// Input document shard (JSONL).
    #[arg(long)]
    input: PathBuf,

    /// Predictions as JSONL: id, language, confidence.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct PredictionRecord {
    id: String,
    language: String,
    confidence: f64,
}

pub fn run_langid_predict(args: LangidPredictArgs, fail_fast: bool) -> Result<ExitCode> {
    let model = load_model(&args.model)?;
    let (docs, bad_lines) = jsonl::read_documents(&args.input, fail_fast)?;
    let predictions: Vec<PredictionRecord> = docs
        .par_iter()
        .map(|d| {
            let p = identify_language(&model, &d.text);
            PredictionRecord {
                id: d.id.clone(),
                language: p.label,
                confidence: p.confidence,
            }
        })
        .collect();
    jsonl::write_records(&args.out, &predictions)?;
    println!("langid-predict: {} predictions written to {}", predictions.len(), args.out.display());
    Ok(exit_for(bad_lines))
}
