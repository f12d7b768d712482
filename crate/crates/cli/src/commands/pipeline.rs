use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use corpusmix_core::classify::load_model;
use corpusmix_core::pipeline::{run_pipeline, LayerName, PipelineConfig};
use corpusmix_core::report::manifest_table;
use corpusmix_core::shard::write_shard;

use crate::commands::exit_for;
use crate::jsonl;

/// Default config path when --config is absent.
pub const CONFIG_ENV: &str = "CORPUSMIX_CONFIG";

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (TOML). Falls back to $CORPUSMIX_CONFIG, then
    /// to built-in defaults. Flags below override file values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Input document shard.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Surviving documents, in input order.
    #[arg(long)]
    output: Option<PathBuf>,

    /// One record per dropped document: id, layer, reason.
    #[arg(long)]
    audit: Option<PathBuf>,

    /// Global seed; per-layer subseeds derive from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Quality model for the quality-filter layer.
    #[arg(long)]
    quality_model: Option<PathBuf>,

    /// Write the run manifest as JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn load_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let path = args
        .config
        .clone()
        .or_else(|| env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut config = match &path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("read {}", p.display()))?;
            PipelineConfig::from_toml(&text).with_context(|| format!("parse config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(input) = &args.input {
        config.input = Some(input.clone());
    }
    if let Some(output) = &args.output {
        config.output = Some(output.clone());
    }
    if let Some(audit) = &args.audit {
        config.audit = Some(audit.clone());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(model) = &args.quality_model {
        config.quality.model = Some(model.clone());
    }
    Ok(config)
}

pub fn run(args: PipelineArgs, fail_fast: bool) -> Result<ExitCode> {
    let config = load_config(&args)?;
    let Some(input) = config.input.clone() else {
        bail!("no input shard: pass --input or set `input` in the config");
    };
    let Some(output) = config.output.clone() else {
        bail!("no output path: pass --output or set `output` in the config");
    };

    let quality_model = if config.layers.contains(&LayerName::QualityFilter) {
        let Some(path) = &config.quality.model else {
            bail!("quality-filter layer configured but no model: pass --quality-model or set quality.model");
        };
        Some(load_model(path)?)
    } else {
        None
    };

    let (docs, bad_lines) = jsonl::read_documents(&input, fail_fast)?;
    let outcome = run_pipeline(docs, &config, quality_model.as_ref())?;

    write_shard(&output, &outcome.docs)?;
    if let Some(path) = &config.audit {
        jsonl::write_records(path, &outcome.audit)?;
    }
    if let Some(path) = &args.manifest {
        fs::write(path, serde_json::to_string_pretty(&outcome.manifest)?)
            .with_context(|| format!("write {}", path.display()))?;
    }
    print!("{}", manifest_table(&outcome.manifest));
    Ok(exit_for(bad_lines))
}
