use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use corpusmix_core::posttrain::{
    build_pair, dedup_sft, percentile_normalize, select_stage2, verify_format, CategoryGrouping,
    LoserPolicy, PairOutcome,
};
use corpusmix_core::{CandidateResponse, Conversation, ScoredInstruction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::dedup::DedupOpts;
use crate::commands::exit_for;
use crate::jsonl;

#[derive(Args)]
pub struct SftVerifyArgs {
    /// Conversation shard: id, language, subcategory, messages.
    #[arg(long)]
    input: PathBuf,

    /// One record per failing conversation: id, violation.
    #[arg(long)]
    violations: Option<PathBuf>,

    /// Exit nonzero when any conversation fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Serialize)]
struct ViolationRecord {
    id: String,
    violation: String,
}

pub fn run_verify(args: SftVerifyArgs, fail_fast: bool) -> Result<ExitCode> {
    let (conversations, bad_lines): (Vec<Conversation>, usize) =
        jsonl::read_records(&args.input, fail_fast)?;
    let violations: Vec<ViolationRecord> = conversations
        .par_iter()
        .filter_map(|c| {
            verify_format(&c.messages).err().map(|v| ViolationRecord {
                id: c.id.clone(),
                violation: v.to_string(),
            })
        })
        .collect();

    let mut by_code: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &violations {
        *by_code.entry(v.violation.as_str()).or_default() += 1;
    }
    println!(
        "sft-verify: {} conversations, {} well-formed, {} violations",
        conversations.len(),
        conversations.len() - violations.len(),
        violations.len()
    );
    for (code, n) in &by_code {
        println!("  {code}: {n}");
    }
    if let Some(path) = &args.violations {
        jsonl::write_records(path, &violations)?;
    }
    let strict_failures = if args.strict { violations.len() } else { 0 };
    Ok(exit_for(bad_lines + strict_failures))
}

#[derive(Args)]
pub struct SftDedupArgs {
    /// Conversation shard: id, language, subcategory, messages.
    #[arg(long)]
    input: PathBuf,

    /// Surviving conversations, in input order.
    #[arg(long)]
    output: PathBuf,

    /// Cluster report shard: survivor, members, pairwise estimated Jaccard.
    #[arg(long)]
    clusters: Option<PathBuf>,

    #[command(flatten)]
    opts: DedupOpts,
}

pub fn run_dedup(args: SftDedupArgs, fail_fast: bool) -> Result<ExitCode> {
    let (conversations, bad_lines): (Vec<Conversation>, usize) =
        jsonl::read_records(&args.input, fail_fast)?;
    let n_in = conversations.len();
    let (survivors, clusters) = dedup_sft(&conversations, &args.opts.to_config())?;
    jsonl::write_records(&args.output, &survivors)?;
    if let Some(path) = &args.clusters {
        jsonl::write_records(path, &clusters)?;
    }
    println!(
        "sft-dedup: {} conversations in, {} out, {} clusters",
        n_in,
        survivors.len(),
        clusters.len()
    );
    Ok(exit_for(bad_lines))
}

#[derive(Args)]
pub struct SftSelectArgs {
    /// Scored shard: conversations with reward, perplexity, embedding.
    #[arg(long)]
    input: PathBuf,

    /// TOML quota table: [[quota]] language, category, count.
    #[arg(long)]
    quota_file: PathBuf,

    /// Largest cosine similarity an admitted item may have to any earlier
    /// admission in its group.
    #[arg(long, default_value_t = 0.6)]
    cos_threshold: f64,

    /// Group percentiles and quotas by subcategory instead of main category.
    #[arg(long)]
    by_subcategory: bool,

    /// Selected instructions with percentiles and selection scores filled.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Deserialize)]
struct QuotaFile {
    #[serde(default)]
    quota: Vec<QuotaEntry>,
}

#[derive(Deserialize)]
struct QuotaEntry {
    language: String,
    category: String,
    count: usize,
}

pub fn run_select(args: SftSelectArgs, fail_fast: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.quota_file)
        .with_context(|| format!("read {}", args.quota_file.display()))?;
    let quota_file: QuotaFile =
        toml::from_str(&text).with_context(|| format!("parse quotas {}", args.quota_file.display()))?;
    let quotas: BTreeMap<(String, String), usize> = quota_file
        .quota
        .into_iter()
        .map(|q| ((q.language, q.category), q.count))
        .collect();

    let grouping = if args.by_subcategory {
        CategoryGrouping::Subcategory
    } else {
        CategoryGrouping::Main
    };
    let (mut items, bad_lines): (Vec<ScoredInstruction>, usize) =
        jsonl::read_records(&args.input, fail_fast)?;
    let n_in = items.len();
    percentile_normalize(&mut items, grouping)?;
    let selected = select_stage2(&items, &quotas, args.cos_threshold, grouping)?;
    jsonl::write_records(&args.output, &selected)?;
    println!(
        "sft-select: {} of {} instructions selected across {} quota groups",
        selected.len(),
        n_in,
        quotas.len()
    );
    Ok(exit_for(bad_lines))
}

#[derive(Args)]
pub struct PrefBuildArgs {
    /// Prompt records: prompt, responses (text, reward, language_consistent),
    /// optional translation flag.
    #[arg(long)]
    input: PathBuf,

    /// Preference pairs: prompt, chosen, rejected, rule.
    #[arg(long)]
    output: PathBuf,

    /// Discarded prompts and the reason.
    #[arg(long)]
    discards: Option<PathBuf>,

    /// Loser when exactly one response is consistent: lowest or highest
    /// reward among the inconsistent rest.
    #[arg(long, default_value = "lowest")]
    loser_policy: String,
}

#[derive(Deserialize)]
struct PromptRecord {
    prompt: String,
    responses: Vec<CandidateResponse>,
    #[serde(default)]
    translation: bool,
}

#[derive(Serialize)]
struct DiscardRecord {
    prompt: String,
    reason: String,
}

pub fn run_pref_build(args: PrefBuildArgs, fail_fast: bool) -> Result<ExitCode> {
    let policy = match args.loser_policy.as_str() {
        "lowest" => LoserPolicy::LowestReward,
        "highest" => LoserPolicy::HighestReward,
        other => bail!("unknown loser policy `{other}`; expected lowest or highest"),
    };
    let (prompts, bad_lines): (Vec<PromptRecord>, usize) = jsonl::read_records(&args.input, fail_fast)?;

    let outcomes: Vec<_> = prompts
        .par_iter()
        .map(|p| build_pair(&p.prompt, &p.responses, p.translation, policy))
        .collect();

    let mut pairs = Vec::new();
    let mut discards = Vec::new();
    let mut build_errors = 0;
    for (prompt, outcome) in prompts.iter().zip(outcomes) {
        match outcome {
            Ok(PairOutcome::Pair(pair)) => pairs.push(pair),
            Ok(PairOutcome::Discarded { reason }) => discards.push(DiscardRecord {
                prompt: prompt.prompt.clone(),
                reason,
            }),
            Err(e) => {
                if fail_fast {
                    bail!("prompt `{}`: {e}", prompt.prompt);
                }
                eprintln!("prompt `{}`: {e}", prompt.prompt);
                build_errors += 1;
            }
        }
    }

    jsonl::write_records(&args.output, &pairs)?;
    if let Some(path) = &args.discards {
        jsonl::write_records(path, &discards)?;
    }
    println!(
        "pref-build: {} pairs, {} discards, {} errors from {} prompts",
        pairs.len(),
        discards.len(),
        build_errors,
        prompts.len()
    );
    Ok(exit_for(bad_lines + build_errors))
}
