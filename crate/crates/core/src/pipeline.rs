//! Cleaning-pipeline orchestration.
//!
//! Runs the configured sequence of filter layers over a corpus, tallies a
//! manifest (documents, tokens, drops by reason, timing per layer), and keeps
//! the whole run reproducible: one global seed feeds each layer through a
//! per-layer derived subseed, so identical config + input means identical
//! output bytes no matter the worker count.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{self, HashedNgramModel};
use crate::cleanse::{self, RuleSet};
use crate::corpus::{Document, TokenCounter};
use crate::hash::derive_subseed;
use crate::neardedup::{self, LshParams, NearDedupConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("quality-filter layer is configured but no model was provided")]
    MissingQualityModel,
    #[error(transparent)]
    Dedup(#[from] neardedup::NearDedupError),
    #[error(transparent)]
    Classify(#[from] classify::ClassifyError),
    #[error("config does not serialize: {0}")]
    ConfigSerialization(String),
}

/// The filter layers, named as they appear in configs and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerName {
    Rules,
    QualityFilter,
    NearDedup,
    ExactDedup,
    UrlDedup,
    FrequentLines,
}

impl LayerName {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerName::Rules => "rules",
            LayerName::QualityFilter => "quality-filter",
            LayerName::NearDedup => "near-dedup",
            LayerName::ExactDedup => "exact-dedup",
            LayerName::UrlDedup => "url-dedup",
            LayerName::FrequentLines => "frequent-lines",
        }
    }
}

impl std::fmt::Display for LayerName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The default layer order.
pub fn default_layers() -> Vec<LayerName> {
    vec![
        LayerName::Rules,
        LayerName::QualityFilter,
        LayerName::NearDedup,
        LayerName::ExactDedup,
        LayerName::UrlDedup,
        LayerName::FrequentLines,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityLayerConfig {
    /// Path to a trained quality model file.
    pub model: Option<PathBuf>,
    pub fraction: f64,
    /// Apply the top-fraction cut within each language rather than globally.
    pub per_language: bool,
    pub positive_label: String,
}

impl Default for QualityLayerConfig {
    fn default() -> Self {
        QualityLayerConfig {
            model: None,
            fraction: 0.2,
            per_language: true,
            positive_label: classify::POSITIVE_LABEL.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NearDedupLayerConfig {
    pub num_perms: usize,
    pub bands: usize,
    pub rows: usize,
    pub threshold: f64,
    pub shingle_words: usize,
    pub exact_verify: bool,
}

impl Default for NearDedupLayerConfig {
    fn default() -> Self {
        NearDedupLayerConfig {
            num_perms: neardedup::DEFAULT_NUM_PERMS,
            bands: 16,
            rows: 8,
            threshold: 0.8,
            shingle_words: neardedup::DEFAULT_SHINGLE_WORDS,
            exact_verify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequentLineConfig {
    pub bucket_size: usize,
    pub max_occurrences: u32,
}

impl Default for FrequentLineConfig {
    fn default() -> Self {
        FrequentLineConfig {
            bucket_size: cleanse::DEFAULT_LINE_BUCKET_SIZE,
            max_occurrences: cleanse::DEFAULT_MAX_LINE_OCCURRENCES,
        }
    }
}

/// Whole-run configuration, the single source of truth a manifest's digest
/// covers. Serializes as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub layers: Vec<LayerName>,
    /// Token counter mode for manifest accounting: heuristic or whitespace.
    pub token_counter: String,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub audit: Option<PathBuf>,
    pub rules: RuleSet,
    pub quality: QualityLayerConfig,
    pub near_dedup: NearDedupLayerConfig,
    pub frequent_lines: FrequentLineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            layers: default_layers(),
            token_counter: "heuristic".to_string(),
            input: None,
            output: None,
            audit: None,
            rules: RuleSet::default(),
            quality: QualityLayerConfig::default(),
            near_dedup: NearDedupLayerConfig::default(),
            frequent_lines: FrequentLineConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string_pretty(self).map_err(|e| PipelineError::ConfigSerialization(e.to_string()))
    }

    /// SHA-256 over the canonical TOML serialization. Stable across runs for
    /// equal configs.
    pub fn digest(&self) -> Result<String, PipelineError> {
        let toml = self.to_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(toml.as_bytes());
        Ok(hex_string(&hasher.finalize()))
    }

    pub fn token_counter(&self) -> TokenCounter {
        TokenCounter::from_mode(&self.token_counter).unwrap_or_default()
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One dropped document: which layer removed it and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub layer: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: String,
    pub input_docs: u64,
    pub output_docs: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
    pub wall_clock_ms: u64,
}

impl LayerStats {
    pub fn total_drops(&self) -> u64 {
        self.drops_by_reason.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub seed: u64,
    pub layers: Vec<LayerStats>,
}

impl RunManifest {
    /// Copy with timings zeroed, for comparisons between runs.
    pub fn without_timings(&self) -> RunManifest {
        let mut m = self.clone();
        for layer in &mut m.layers {
            layer.wall_clock_ms = 0;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub docs: Vec<Document>,
    pub manifest: RunManifest,
    pub audit: Vec<AuditRecord>,
}

fn total_tokens(docs: &[Document], counter: &TokenCounter) -> u64 {
    docs.par_iter().map(|d| counter.count_document(d)).sum()
}

/// Run the configured layers in order over `docs`.
pub fn run_pipeline(
    docs: Vec<Document>,
    config: &PipelineConfig,
    quality_model: Option<&HashedNgramModel>,
) -> Result<PipelineOutcome, PipelineError> {
    if config.layers.contains(&LayerName::QualityFilter) && quality_model.is_none() {
        return Err(PipelineError::MissingQualityModel);
    }
    let counter = config.token_counter();
    let config_digest = config.digest()?;
    let mut current = docs;
    let mut layer_stats = Vec::with_capacity(config.layers.len());
    let mut audit = Vec::new();

    for &layer in &config.layers {
        let started = Instant::now();
        let input_docs = current.len() as u64;
        let input_tokens = total_tokens(&current, &counter);
        let mut drops_by_reason: BTreeMap<String, u64> = BTreeMap::new();
        let record_drop = |audit: &mut Vec<AuditRecord>,
                               drops: &mut BTreeMap<String, u64>,
                               id: String,
                               reason: String| {
            *drops.entry(reason.clone()).or_insert(0) += 1;
            audit.push(AuditRecord {
                id,
                layer: layer.as_str().to_string(),
                reason,
            });
        };

        current = match layer {
            LayerName::Rules => {
                let decisions: Vec<Result<(), cleanse::DropReason>> = current
                    .par_iter()
                    .map(|d| cleanse::apply_rules(d, &config.rules))
                    .collect();
                let mut kept = Vec::with_capacity(current.len());
                for (doc, decision) in current.into_iter().zip(decisions) {
                    match decision {
                        Ok(()) => kept.push(doc),
                        Err(reason) => {
                            record_drop(&mut audit, &mut drops_by_reason, doc.id, reason.code().to_string())
                        }
                    }
                }
                kept
            }
            LayerName::QualityFilter if current.is_empty() => current,
            LayerName::QualityFilter => {
                let model = quality_model.expect("presence checked above");
                let selected = if config.quality.per_language {
                    classify::select_top_fraction_per_language(
                        &current,
                        model,
                        config.quality.fraction,
                        &config.quality.positive_label,
                    )?
                } else {
                    classify::select_top_fraction(
                        &current,
                        model,
                        config.quality.fraction,
                        &config.quality.positive_label,
                    )?
                };
                let keep: std::collections::HashSet<&str> =
                    selected.iter().map(|d| d.id.as_str()).collect();
                let mut kept = Vec::with_capacity(selected.len());
                for doc in current {
                    if keep.contains(doc.id.as_str()) {
                        kept.push(doc);
                    } else {
                        record_drop(
                            &mut audit,
                            &mut drops_by_reason,
                            doc.id,
                            "quality_below_threshold".to_string(),
                        );
                    }
                }
                kept
            }
            LayerName::NearDedup => {
                let nd_config = NearDedupConfig {
                    num_perms: config.near_dedup.num_perms,
                    shingle_words: config.near_dedup.shingle_words,
                    lsh: LshParams {
                        bands: config.near_dedup.bands,
                        rows: config.near_dedup.rows,
                        threshold: config.near_dedup.threshold,
                    },
                    seed: derive_subseed(config.seed, layer.as_str()),
                    exact_verify: config.near_dedup.exact_verify,
                };
                let outcome = neardedup::near_dedup(&current, &nd_config)?;
                for id in outcome.dropped_ids() {
                    record_drop(&mut audit, &mut drops_by_reason, id, "near_duplicate".to_string());
                }
                outcome.survivors
            }
            LayerName::ExactDedup => {
                let (survivors, dropped) = neardedup::exact_dedup(&current);
                for (id, _survivor) in dropped {
                    record_drop(&mut audit, &mut drops_by_reason, id, "exact_duplicate".to_string());
                }
                survivors
            }
            LayerName::UrlDedup => {
                let (survivors, dropped) = cleanse::url_dedup(&current);
                for (id, reason) in dropped {
                    record_drop(&mut audit, &mut drops_by_reason, id, reason.code().to_string());
                }
                survivors
            }
            LayerName::FrequentLines => {
                let (survivors, dropped) = cleanse::frequent_line_filter(
                    &current,
                    config.frequent_lines.bucket_size,
                    config.frequent_lines.max_occurrences,
                );
                for (id, reason) in dropped {
                    record_drop(&mut audit, &mut drops_by_reason, id, reason.code().to_string());
                }
                survivors
            }
        };

        layer_stats.push(LayerStats {
            layer: layer.as_str().to_string(),
            input_docs,
            output_docs: current.len() as u64,
            input_tokens,
            output_tokens: total_tokens(&current, &counter),
            drops_by_reason,
            wall_clock_ms: started.elapsed().as_millis() as u64,
        });
    }

    Ok(PipelineOutcome {
        docs: current,
        manifest: RunManifest {
            config_digest,
            seed: config.seed,
            layers: layer_stats,
        },
        audit,
    })
}
