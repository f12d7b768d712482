//! Core document model, token counting, and corpus statistics.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One corpus item. The unit every cleaning and dedup layer operates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    /// Unique within a shard, never empty.
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// ISO-639-3 code, e.g. `vie`, `tha`, `khm`.
    pub language: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    /// Provenance tag: `web`, `replay`, `synthetic`, `bilingual`, ...
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    /// Minimal constructor for tests and fixtures.
    pub fn new(id: impl Into<String>, language: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            url: None,
            language: language.into(),
            text: text.into(),
            token_count: None,
            source: String::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_tokens(mut self, n: u64) -> Self {
        self.token_count = Some(n);
        self
    }
}

#[derive(Debug, Error)]
pub enum TokenCounterError {
    #[error("vocab file {path}: {source}")]
    VocabIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocab file {path}: line {line}: expected `left right` merge pair")]
    MalformedMerge { path: String, line: usize },
    #[error("vocab file {path}: missing `corpusmix vocab v1` header")]
    BadHeader { path: String },
}

/// Deterministic token counting. The production tokenizer is an external
/// artifact, so this is the pluggable stand-in: a bytes/4 heuristic by
/// default, whitespace splitting, or byte-pair merges loaded from a plain
/// vocab file when exact counts matter.
#[derive(Debug, Clone)]
pub enum TokenCounter {
    /// `ceil(utf8_len / 4)`. The conventional rough estimate.
    Heuristic,
    /// `split_whitespace().count()`.
    Whitespace,
    /// Greedy application of ranked merge pairs per whitespace word.
    ExternalVocab(MergeVocab),
}

impl Default for TokenCounter {
    fn default() -> Self {
        TokenCounter::Heuristic
    }
}

impl TokenCounter {
    /// Load an external vocab+merges file. Fails if the file is missing or
    /// malformed.
    pub fn external_vocab(path: impl AsRef<Path>) -> Result<Self, TokenCounterError> {
        Ok(TokenCounter::ExternalVocab(MergeVocab::load(path)?))
    }

    /// Parse a mode name as used in configs: `heuristic` or `whitespace`.
    pub fn from_mode(mode: &str) -> Option<Self> {
        match mode {
            "heuristic" => Some(TokenCounter::Heuristic),
            "whitespace" => Some(TokenCounter::Whitespace),
            _ => None,
        }
    }

    pub fn count(&self, text: &str) -> u64 {
        match self {
            TokenCounter::Heuristic => (text.len() as u64).div_ceil(4),
            TokenCounter::Whitespace => text.split_whitespace().count() as u64,
            TokenCounter::ExternalVocab(vocab) => vocab.count(text),
        }
    }

    /// Token count for a document: the stored count when present, otherwise
    /// computed from the text.
    pub fn count_document(&self, doc: &Document) -> u64 {
        doc.token_count.unwrap_or_else(|| self.count(&doc.text))
    }
}

/// Ranked byte-pair merges from a plain-text file:
///
/// ```text
/// corpusmix vocab v1
/// #merges
/// t h
/// th e
/// ```
///
/// Earlier merges have higher priority. Unknown characters count one token
/// each.
#[derive(Debug, Clone)]
pub struct MergeVocab {
    ranks: HashMap<(String, String), usize>,
}

impl MergeVocab {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenCounterError> {
        let path_str = path.as_ref().display().to_string();
        let raw = fs::read_to_string(&path).map_err(|source| TokenCounterError::VocabIo {
            path: path_str.clone(),
            source,
        })?;
        let mut lines = raw.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "corpusmix vocab v1" => {}
            _ => return Err(TokenCounterError::BadHeader { path: path_str }),
        }
        let mut ranks = HashMap::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let rank = ranks.len();
                    ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
                }
                _ => {
                    return Err(TokenCounterError::MalformedMerge {
                        path: path_str,
                        line: idx + 1,
                    })
                }
            }
        }
        Ok(MergeVocab { ranks })
    }

    fn count(&self, text: &str) -> u64 {
        text.split_whitespace().map(|w| self.count_word(w)).sum()
    }

    fn count_word(&self, word: &str) -> u64 {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len().saturating_sub(1) {
                let key = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.ranks.get(&key) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    let merged = format!("{}{}", symbols[i], symbols[i + 1]);
                    symbols.splice(i..=i + 1, [merged]);
                }
                None => break,
            }
        }
        symbols.len() as u64
    }
}

/// Per-language document and token tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub documents: u64,
    pub tokens: u64,
}

/// Corpus statistics keyed by language. A mergeable monoid: shards can be
/// tallied independently and summed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_language: BTreeMap<String, LanguageStats>,
}

impl CorpusStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, language: &str, tokens: u64) {
        let entry = self.per_language.entry(language.to_string()).or_default();
        entry.documents += 1;
        entry.tokens += tokens;
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (lang, stats) in &other.per_language {
            let entry = self.per_language.entry(lang.clone()).or_default();
            entry.documents += stats.documents;
            entry.tokens += stats.tokens;
        }
    }

    pub fn total_documents(&self) -> u64 {
        self.per_language.values().map(|s| s.documents).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.per_language.values().map(|s| s.tokens).sum()
    }
}

/// Tally a corpus. Stored token counts are trusted; missing ones are counted
/// with `counter`.
pub fn compute_stats<'a, I>(corpus: I, counter: &TokenCounter) -> CorpusStats
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut stats = CorpusStats::new();
    for doc in corpus {
        stats.add(&doc.language, counter.count_document(doc));
    }
    stats
}

/// Display name for the ISO-639-3 codes this toolkit routinely reports on.
/// Unknown codes fall back to the code itself.
pub fn language_name(code: &str) -> &str {
    match code {
        "eng" => "English",
        "cmn" => "Chinese",
        "vie" => "Vietnamese",
        "ind" => "Indonesian",
        "tha" => "Thai",
        "zsm" => "Malay",
        "mya" => "Burmese",
        "tgl" => "Tagalog",
        "fil" => "Filipino",
        "khm" => "Khmer",
        "ceb" => "Cebuano",
        "lao" => "Lao",
        "jav" => "Javanese",
        "war" => "Waray",
        "sun" => "Sundanese",
        "ilo" => "Ilocano",
        "tam" => "Tamil",
        other => other,
    }
}
