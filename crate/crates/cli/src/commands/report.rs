use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use corpusmix_core::corpus::compute_stats;
use corpusmix_core::mixture::DEFAULT_PLAN_TOLERANCE;
use corpusmix_core::pipeline::RunManifest;
use corpusmix_core::posttrain::DistributionReport;
use corpusmix_core::report::{
    distribution_csv, distribution_table, manifest_csv, manifest_table, plan_csv,
    plan_table_with_tolerance, stats_csv, stats_table,
};
use corpusmix_core::{BudgetPlan, Conversation, TokenCounter};

use crate::commands::exit_for;
use crate::jsonl;

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    /// Per-language document/token counts from document shards
    Stats,
    /// A staged token-budget plan file
    Plan,
    /// Conversation counts per language and split
    Distribution,
    /// A pipeline run manifest
    Manifest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
    Both,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    kind: ReportKind,

    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,

    /// Document shards (stats).
    #[arg(long)]
    input: Vec<PathBuf>,

    /// Token counter: heuristic or whitespace (stats).
    #[arg(long, default_value = "heuristic")]
    token_counter: String,

    /// Count tokens with a vocab+merges file instead (stats).
    #[arg(long)]
    vocab_file: Option<PathBuf>,

    /// Plan file (plan).
    #[arg(long)]
    plan: Option<PathBuf>,

    /// Mismatch tolerance for the plan footnote, in billions (plan).
    #[arg(long, default_value_t = DEFAULT_PLAN_TOLERANCE)]
    tolerance: f64,

    /// Conversation shard as split=path; repeatable (distribution).
    #[arg(long)]
    split: Vec<String>,

    /// Manifest JSON from a pipeline run (manifest).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn emit(format: ReportFormat, table: String, csv: String) {
    match format {
        ReportFormat::Table => print!("{table}"),
        ReportFormat::Csv => print!("{csv}"),
        ReportFormat::Both => {
            print!("{table}");
            println!();
            print!("{csv}");
        }
    }
}

pub fn run(args: ReportArgs, fail_fast: bool) -> Result<ExitCode> {
    let mut bad_lines = 0;
    match args.kind {
        ReportKind::Stats => {
            if args.input.is_empty() {
                bail!("--kind stats needs at least one --input shard");
            }
            let counter = match &args.vocab_file {
                Some(path) => TokenCounter::external_vocab(path)?,
                None => match TokenCounter::from_mode(&args.token_counter) {
                    Some(c) => c,
                    None => bail!(
                        "unknown token counter `{}`; expected heuristic or whitespace",
                        args.token_counter
                    ),
                },
            };
            let (docs, bad) = jsonl::read_document_shards(&args.input, fail_fast)?;
            bad_lines = bad;
            let stats = compute_stats(&docs, &counter);
            emit(args.format, stats_table(&stats), stats_csv(&stats));
        }
        ReportKind::Plan => {
            let Some(path) = &args.plan else {
                bail!("--kind plan needs --plan <file>");
            };
            let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            let plan: BudgetPlan =
                toml::from_str(&text).with_context(|| format!("parse plan {}", path.display()))?;
            emit(
                args.format,
                plan_table_with_tolerance(&plan, args.tolerance),
                plan_csv(&plan),
            );
        }
        ReportKind::Distribution => {
            if args.split.is_empty() {
                bail!("--kind distribution needs at least one --split name=path");
            }
            let mut datasets: BTreeMap<String, Vec<Conversation>> = BTreeMap::new();
            for raw in &args.split {
                let Some((name, path)) = raw.split_once('=') else {
                    bail!("split `{raw}` is not name=path");
                };
                let (conversations, bad) = jsonl::read_records(path.as_ref(), fail_fast)?;
                bad_lines += bad;
                datasets.entry(name.to_string()).or_default().extend(conversations);
            }
            let report = DistributionReport::from_datasets(&datasets);
            emit(args.format, distribution_table(&report), distribution_csv(&report));
        }
        ReportKind::Manifest => {
            let Some(path) = &args.manifest else {
                bail!("--kind manifest needs --manifest <file>");
            };
            let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            let manifest: RunManifest =
                serde_json::from_str(&text).with_context(|| format!("parse manifest {}", path.display()))?;
            emit(args.format, manifest_table(&manifest), manifest_csv(&manifest));
        }
    }
    Ok(exit_for(bad_lines))
}
