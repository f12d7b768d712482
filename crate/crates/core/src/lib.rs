//! Corpus curation and data-mixture planning for multilingual LLM training.
//!
//! The crate covers the data side of a continual pre-training + post-training
//! recipe, end to end:
//!
//! - **corpus**: document model, JSONL shard I/O, token counting, per-language
//!   corpus statistics
//! - **cleanse**: rule-based cleaning, frequent-line removal, URL deduplication
//! - **neardedup**: word-shingle MinHash signatures, banded LSH candidate
//!   generation, near/exact deduplication with survivor selection
//! - **classify**: hashed n-gram linear classifiers for quality filtering and
//!   language identification
//! - **mixture**: Dirichlet mixture sampling, proxy-loss regression, simplex
//!   search, and staged token-budget planning/validation
//! - **posttrain**: SFT format verification, per-language dedup, percentile
//!   scoring and stage-2 selection, preference-pair construction
//! - **pipeline**: layered cleaning pipeline with a reproducible run manifest
//! - **report**: aligned text tables and lossless CSV for stats, plans,
//!   manifests, and distribution tables
//!
//! All randomized components take explicit 64-bit seeds and produce identical
//! results regardless of worker count.

pub mod classify;
pub mod cleanse;
pub mod corpus;
pub mod hash;
pub mod mixture;
pub mod neardedup;
pub mod pipeline;
pub mod posttrain;
pub mod report;
pub mod shard;
pub mod text;

pub use corpus::{CorpusStats, Document, LanguageStats, TokenCounter};
pub use mixture::{BudgetPlan, MixtureRegressor, MixtureWeights, ProxyObservation};
pub use neardedup::{DuplicateCluster, LshParams, MinHashSignature, ShingleSet};
pub use posttrain::{
    CandidateResponse, ChatMessage, ChatRole, Conversation, PreferencePair, ScoredInstruction,
};
