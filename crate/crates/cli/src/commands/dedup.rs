use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use corpusmix_core::neardedup::{self, exact_dedup, near_dedup, LshParams, NearDedupConfig};
use corpusmix_core::pipeline::AuditRecord;
use corpusmix_core::shard::write_shard;

use crate::commands::exit_for;
use crate::jsonl;

/// Signature and banding knobs shared by `dedup` and `sft-dedup`.
#[derive(Args)]
pub struct DedupOpts {
    /// Signature length (independent hash functions).
    #[arg(long, default_value_t = neardedup::DEFAULT_NUM_PERMS)]
    pub num_perms: usize,

    /// Similarity at or above which a verified candidate pair is clustered.
    #[arg(long, default_value_t = 0.8)]
    pub jaccard_threshold: f64,

    /// LSH bands; bands x rows must equal the signature length.
    #[arg(long, default_value_t = 16)]
    pub bands: usize,

    /// Rows per LSH band.
    #[arg(long, default_value_t = 8)]
    pub rows: usize,

    /// Words per shingle.
    #[arg(long, default_value_t = neardedup::DEFAULT_SHINGLE_WORDS)]
    pub shingle_words: usize,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Verify candidate pairs against exact shingle Jaccard instead of the
    /// signature estimate.
    #[arg(long)]
    pub exact_verify: bool,
}

impl DedupOpts {
    pub fn to_config(&self) -> NearDedupConfig {
        NearDedupConfig {
            num_perms: self.num_perms,
            shingle_words: self.shingle_words,
            lsh: LshParams {
                bands: self.bands,
                rows: self.rows,
                threshold: self.jaccard_threshold,
            },
            seed: self.seed,
            exact_verify: self.exact_verify,
        }
    }
}

#[derive(serde::Serialize)]
struct ExactCluster {
    survivor: String,
    members: Vec<String>,
}

#[derive(Args)]
pub struct DedupArgs {
    /// Input document shard (JSONL).
    #[arg(long)]
    input: PathBuf,

    /// Survivors, in input order.
    #[arg(long)]
    output: PathBuf,

    /// Cluster report shard: survivor, members, pairwise estimated Jaccard.
    #[arg(long)]
    clusters: Option<PathBuf>,

    /// One record per dropped document: id, layer, reason.
    #[arg(long)]
    audit: Option<PathBuf>,

    /// Drop byte-identical documents (normalized whitespace) instead of
    /// near-duplicates; first occurrence survives.
    #[arg(long)]
    exact: bool,

    #[command(flatten)]
    opts: DedupOpts,
}

pub fn run(args: DedupArgs, fail_fast: bool) -> Result<ExitCode> {
    let (docs, bad_lines) = jsonl::read_documents(&args.input, fail_fast)?;
    let n_in = docs.len();

    let (survivors, audit) = if args.exact {
        let (survivors, dropped) = exact_dedup(&docs);
        if let Some(path) = &args.clusters {
            // Exact mode has identity in place of similarity estimates:
            // report survivor + members per surviving document.
            let mut by_survivor: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for (id, keeper) in &dropped {
                by_survivor.entry(keeper.clone()).or_default().push(id.clone());
            }
            let clusters: Vec<ExactCluster> = by_survivor
                .into_iter()
                .map(|(survivor, rest)| {
                    let mut members = vec![survivor.clone()];
                    members.extend(rest);
                    members.sort();
                    ExactCluster { survivor, members }
                })
                .collect();
            jsonl::write_records(path, &clusters)?;
        }
        let audit: Vec<AuditRecord> = dropped
            .into_iter()
            .map(|(id, _keeper)| AuditRecord {
                id,
                layer: "exact-dedup".to_string(),
                reason: "exact_duplicate".to_string(),
            })
            .collect();
        (survivors, audit)
    } else {
        let outcome = near_dedup(&docs, &args.opts.to_config())?;
        if let Some(path) = &args.clusters {
            jsonl::write_records(path, &outcome.clusters)?;
        }
        let audit: Vec<AuditRecord> = outcome
            .dropped_ids()
            .into_iter()
            .map(|id| AuditRecord {
                id,
                layer: "near-dedup".to_string(),
                reason: "near_duplicate".to_string(),
            })
            .collect();
        (outcome.survivors, audit)
    };

    write_shard(&args.output, &survivors)?;
    if let Some(path) = &args.audit {
        jsonl::write_records(path, &audit)?;
    }
    println!(
        "dedup: {} documents in, {} out, {} dropped",
        n_in,
        survivors.len(),
        audit.len()
    );
    Ok(exit_for(bad_lines))
}
