use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use corpusmix_core::cleanse::{self, RuleSet};
use corpusmix_core::pipeline::{run_pipeline, LayerName, PipelineConfig};
use corpusmix_core::report::manifest_table;
use corpusmix_core::shard::write_shard;

use crate::commands::exit_for;
use crate::jsonl;

/// The three rule-driven layers, in the standard order: rules, URL dedup,
/// frequent-line removal. Model-based filtering and dedup have their own
/// subcommands; `pipeline` runs all six layers.
#[derive(Args)]
pub struct CleanArgs {
    /// Input document shard (JSONL).
    #[arg(long)]
    input: PathBuf,

    /// Cleaned output shard.
    #[arg(long)]
    output: PathBuf,

    /// One record per dropped document: id, layer, reason.
    #[arg(long)]
    audit: Option<PathBuf>,

    /// Rule thresholds as TOML; built-in defaults when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,

    /// Documents per frequent-line counting bucket.
    #[arg(long, default_value_t = cleanse::DEFAULT_LINE_BUCKET_SIZE)]
    line_bucket_size: usize,

    /// Strip lines seen more than this many times within a bucket.
    #[arg(long, default_value_t = cleanse::DEFAULT_MAX_LINE_OCCURRENCES)]
    max_line_occurrences: u32,

    /// Skip the URL-duplicate layer.
    #[arg(long)]
    no_url_dedup: bool,

    /// Skip the frequent-line layer.
    #[arg(long)]
    no_frequent_lines: bool,
}

pub fn run(args: CleanArgs, fail_fast: bool) -> Result<ExitCode> {
    let mut config = PipelineConfig::default();
    config.layers = vec![LayerName::Rules];
    if !args.no_url_dedup {
        config.layers.push(LayerName::UrlDedup);
    }
    if !args.no_frequent_lines {
        config.layers.push(LayerName::FrequentLines);
    }
    if let Some(path) = &args.rules {
        let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
        config.rules = toml::from_str::<RuleSet>(&text)
            .with_context(|| format!("parse rules {}", path.display()))?;
    }
    config.frequent_lines.bucket_size = args.line_bucket_size;
    config.frequent_lines.max_occurrences = args.max_line_occurrences;

    let (docs, bad_lines) = jsonl::read_documents(&args.input, fail_fast)?;
    let outcome = run_pipeline(docs, &config, None)?;

    write_shard(&args.output, &outcome.docs)?;
    if let Some(path) = &args.audit {
        jsonl::write_records(path, &outcome.audit)?;
    }
    print!("{}", manifest_table(&outcome.manifest));
    Ok(exit_for(bad_lines))
}
