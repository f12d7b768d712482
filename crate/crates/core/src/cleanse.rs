//! Rule-based cleaning, frequent-line removal, and URL deduplication.
//!
//! Three of the cleaning layers: cheap per-document rules, stripping of
//! boilerplate lines that recur across a bucket of documents, and collapsing
//! of documents that share a normalized URL.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::corpus::Document;
use crate::hash::hash_str;
use crate::text::normalize_whitespace;

/// Thresholds for per-document rule cleaning. Ratios are over Unicode chars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSet {
    pub min_chars: usize,
    pub max_symbol_ratio: f64,
    pub min_alpha_ratio: f64,
    pub forbidden_substrings: Vec<String>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            min_chars: 200,
            max_symbol_ratio: 0.5,
            min_alpha_ratio: 0.3,
            forbidden_substrings: Vec::new(),
        }
    }
}

/// Why a document was dropped. Codes appear verbatim in audit shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooShort,
    SymbolRatio,
    AlphaRatio,
    ForbiddenSubstring,
    FrequentLineEmpty,
    UrlDuplicate,
}

impl DropReason {
    pub fn code(&self) -> &'static str {
        match self {
            DropReason::TooShort => "too_short",
            DropReason::SymbolRatio => "symbol_ratio",
            DropReason::AlphaRatio => "alpha_ratio",
            DropReason::ForbiddenSubstring => "forbidden_substring",
            DropReason::FrequentLineEmpty => "frequent_line_empty",
            DropReason::UrlDuplicate => "url_duplicate",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Keep/drop verdict for one document under one rule set. Checks run in a
/// fixed order (length, symbol ratio, alpha ratio, forbidden substrings) so
/// the reported reason is deterministic.
pub fn apply_rules(doc: &Document, rules: &RuleSet) -> Result<(), DropReason> {
    let total = doc.text.chars().count();
    if total < rules.min_chars {
        return Err(DropReason::TooShort);
    }
    if total > 0 {
        let mut symbols = 0usize;
        let mut alpha = 0usize;
        for c in doc.text.chars() {
            if c.is_alphabetic() {
                alpha += 1;
            } else if !c.is_alphanumeric() && !c.is_whitespace() {
                symbols += 1;
            }
        }
        if symbols as f64 / total as f64 > rules.max_symbol_ratio {
            return Err(DropReason::SymbolRatio);
        }
        if (alpha as f64 / total as f64) < rules.min_alpha_ratio {
            return Err(DropReason::AlphaRatio);
        }
    }
    for needle in &rules.forbidden_substrings {
        if !needle.is_empty() && doc.text.contains(needle.as_str()) {
            return Err(DropReason::ForbiddenSubstring);
        }
    }
    Ok(())
}

/// Occurrence counts of normalized lines, kept separately per arrival-order
/// bucket (documents 1..bucket_size form bucket 0, and so on). Lines that
/// normalize to empty are never counted.
#[derive(Debug, Clone)]
pub struct LineFrequencyTable {
    pub bucket_size: usize,
    pub max_occurrences: u32,
    buckets: Vec<HashMap<u64, u32>>,
}

pub const DEFAULT_LINE_BUCKET_SIZE: usize = 10_000_000;
pub const DEFAULT_MAX_LINE_OCCURRENCES: u32 = 5;

impl LineFrequencyTable {
    pub fn count(&self, bucket: usize, fingerprint: u64) -> u32 {
        self.buckets
            .get(bucket)
            .and_then(|m| m.get(&fingerprint))
            .copied()
            .unwrap_or(0)
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }
}

fn line_fingerprint(normalized: &str) -> u64 {
    hash_str(normalized, 0x11ce5)
}

/// Count every occurrence of every normalized line, bucketed by document
/// arrival order.
pub fn build_line_table(
    docs: &[Document],
    bucket_size: usize,
    max_occurrences: u32,
) -> LineFrequencyTable {
    assert!(bucket_size >= 1, "bucket_size must be at least 1");
    let num_buckets = docs.len().div_ceil(bucket_size).max(1);
    let mut buckets = vec![HashMap::new(); num_buckets];
    for (i, doc) in docs.iter().enumerate() {
        let table = &mut buckets[i / bucket_size];
        for line in doc.text.lines() {
            let norm = normalize_whitespace(line);
            if norm.is_empty() {
                continue;
            }
            *table.entry(line_fingerprint(&norm)).or_insert(0) += 1;
        }
    }
    LineFrequencyTable {
        bucket_size,
        max_occurrences,
        buckets,
    }
}

/// Strip lines whose in-bucket count exceeds `table.max_occurrences`.
/// Documents must be the same slice, in the same order, the table was built
/// from. Untouched documents keep their text byte-for-byte; documents whose
/// remaining text is empty are dropped.
pub fn remove_frequent_lines(
    docs: &[Document],
    table: &LineFrequencyTable,
) -> (Vec<Document>, Vec<(String, DropReason)>) {
    let mut kept = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        let bucket = i / table.bucket_size;
        let mut stripped = false;
        let mut lines = Vec::new();
        for line in doc.text.lines() {
            let norm = normalize_whitespace(line);
            let frequent =
                !norm.is_empty() && table.count(bucket, line_fingerprint(&norm)) > table.max_occurrences;
            if frequent {
                stripped = true;
            } else {
                lines.push(line);
            }
        }
        if !stripped {
            kept.push(doc.clone());
            continue;
        }
        let text = lines.join("\n");
        if text.trim().is_empty() {
            dropped.push((doc.id.clone(), DropReason::FrequentLineEmpty));
        } else {
            let mut doc = doc.clone();
            doc.text = text;
            kept.push(doc);
        }
    }
    (kept, dropped)
}

/// Count+strip in one pass over arrival-order buckets.
pub fn frequent_line_filter(
    docs: &[Document],
    bucket_size: usize,
    max_occurrences: u32,
) -> (Vec<Document>, Vec<(String, DropReason)>) {
    let table = build_line_table(docs, bucket_size, max_occurrences);
    remove_frequent_lines(docs, &table)
}

/// Canonical form of a URL for dedup grouping: lowercased scheme and host,
/// fragment removed, one trailing slash removed, query kept. Strings that do
/// not parse as URLs are used trimmed and verbatim.
pub fn normalize_url(raw: &str) -> String {
    match Url::parse(raw.trim()) {
        Ok(mut url) => {
            url.set_fragment(None);
            let s = url.to_string();
            match s.strip_suffix('/') {
                Some(stripped) => stripped.to_string(),
                None => s,
            }
        }
        Err(_) => raw.trim().to_string(),
    }
}

/// Keep one document per normalized URL: the one with the most characters,
/// ties broken by smallest id. Documents without a URL always survive.
/// Output preserves input order.
pub fn url_dedup(docs: &[Document]) -> (Vec<Document>, Vec<(String, DropReason)>) {
    // winner per key: (char length, id, input position)
    let mut winners: HashMap<String, (usize, &str, usize)> = HashMap::new();
    for (pos, doc) in docs.iter().enumerate() {
        let Some(url) = doc.url.as_deref() else { continue };
        let key = normalize_url(url);
        let len = doc.text.chars().count();
        let entry = winners.entry(key).or_insert((len, &doc.id, pos));
        let better = len > entry.0 || (len == entry.0 && doc.id.as_str() < entry.1);
        if better {
            *entry = (len, &doc.id, pos);
        }
    }
    let survivor_pos: std::collections::HashSet<usize> =
        winners.values().map(|&(_, _, pos)| pos).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (pos, doc) in docs.iter().enumerate() {
        if doc.url.is_none() || survivor_pos.contains(&pos) {
            kept.push(doc.clone());
        } else {
            dropped.push((doc.id.clone(), DropReason::UrlDuplicate));
        }
    }
    (kept, dropped)
}
