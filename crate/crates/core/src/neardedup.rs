//! Near-duplicate and exact-duplicate detection.
//!
//! Documents are shingled into word n-grams, sketched with 128-slot MinHash
//! signatures, and indexed with banded LSH. Candidate pairs that verify at or
//! above the Jaccard threshold are clustered with union-find; one survivor is
//! kept per cluster. Exact dedup hashes whitespace-normalized text.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::hash::{digest128_hex, hash_str, indexed_hash};
use crate::text::normalize_whitespace;

pub const DEFAULT_NUM_PERMS: usize = 128;
pub const DEFAULT_SHINGLE_WORDS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum NearDedupError {
    #[error("signatures disagree: {0}")]
    SignatureMismatch(String),
    #[error("bands ({bands}) x rows ({rows}) must equal signature length {len}")]
    BandShape { bands: usize, rows: usize, len: usize },
}

/// Set of 64-bit fingerprints of overlapping, case-folded word n-grams.
/// Texts with fewer than n words contribute their whole word sequence as the
/// single shingle; empty text yields the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShingleSet {
    pub shingles: BTreeSet<u64>,
}

impl ShingleSet {
    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    /// Exact Jaccard similarity. Two empty sets count as identical.
    pub fn jaccard(&self, other: &ShingleSet) -> f64 {
        if self.is_empty() && other.is_empty() {
            return 1.0;
        }
        let inter = self.shingles.intersection(&other.shingles).count();
        let union = self.shingles.len() + other.shingles.len() - inter;
        inter as f64 / union as f64
    }
}

const SHINGLE_HASH_SEED: u64 = 0x5419;

/// Word n-gram shingles of `text`, case-folded and whitespace-tokenized.
pub fn shingle(text: &str, n: usize) -> ShingleSet {
    assert!(n >= 1, "shingle width must be at least 1");
    let words: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
    let mut shingles = BTreeSet::new();
    if words.is_empty() {
        return ShingleSet { shingles };
    }
    if words.len() < n {
        shingles.insert(hash_str(&words.join(" "), SHINGLE_HASH_SEED));
        return ShingleSet { shingles };
    }
    for window in words.windows(n) {
        shingles.insert(hash_str(&window.join(" "), SHINGLE_HASH_SEED));
    }
    ShingleSet { shingles }
}

/// MinHash sketch: slot i holds the minimum of hash_i over the shingle set.
/// Empty sets sketch to all-sentinel (u64::MAX) values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub seed: u64,
}

pub fn minhash_sign(set: &ShingleSet, num_perms: usize, seed: u64) -> MinHashSignature {
    assert!(num_perms >= 1, "need at least one permutation");
    let mut values = vec![u64::MAX; num_perms];
    for &sh in &set.shingles {
        for (i, slot) in values.iter_mut().enumerate() {
            let h = indexed_hash(seed, i as u64, sh);
            if h < *slot {
                *slot = h;
            }
        }
    }
    MinHashSignature { values, seed }
}

/// Fraction of agreeing slots, the unbiased Jaccard estimate.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, NearDedupError> {
    if a.seed != b.seed {
        return Err(NearDedupError::SignatureMismatch(format!(
            "seed {} vs {}",
            a.seed, b.seed
        )));
    }
    if a.values.len() != b.values.len() {
        return Err(NearDedupError::SignatureMismatch(format!(
            "length {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    let matching = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(matching as f64 / a.values.len() as f64)
}

/// Banded LSH shape. bands x rows must equal the signature length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub bands: usize,
    pub rows: usize,
    pub threshold: f64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            bands: 16,
            rows: 8,
            threshold: 0.8,
        }
    }
}

impl LshParams {
    /// Analytic probability that a pair with true Jaccard `j` becomes a
    /// candidate: 1 - (1 - j^rows)^bands.
    pub fn candidate_probability(&self, j: f64) -> f64 {
        1.0 - (1.0 - j.powi(self.rows as i32)).powi(self.bands as i32)
    }
}

/// All unordered index pairs whose signatures agree on every row of at least
/// one band.
pub fn lsh_candidates(
    signatures: &[MinHashSignature],
    params: &LshParams,
) -> Result<BTreeSet<(usize, usize)>, NearDedupError> {
    let mut pairs = BTreeSet::new();
    let Some(first) = signatures.first() else {
        return Ok(pairs);
    };
    let len = first.values.len();
    if params.bands * params.rows != len {
        return Err(NearDedupError::BandShape {
            bands: params.bands,
            rows: params.rows,
            len,
        });
    }
    for sig in signatures {
        if sig.seed != first.seed || sig.values.len() != len {
            return Err(NearDedupError::SignatureMismatch(
                "mixed seeds or lengths in signature collection".to_string(),
            ));
        }
    }
    for band in 0..params.bands {
        let lo = band * params.rows;
        let hi = lo + params.rows;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for (idx, sig) in signatures.iter().enumerate() {
            buckets.entry(&sig.values[lo..hi]).or_default().push(idx);
        }
        for group in buckets.values() {
            for (a, &i) in group.iter().enumerate() {
                for &j in &group[a + 1..] {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    Ok(pairs)
}

/// One group of mutual near-duplicates. Members are sorted; the survivor is
/// always a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub survivor: String,
    pub members: Vec<String>,
    /// Estimated Jaccard for every unordered member pair, in member order.
    pub pair_estimates: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone)]
pub struct NearDedupConfig {
    pub num_perms: usize,
    pub shingle_words: usize,
    pub lsh: LshParams,
    pub seed: u64,
    /// Verify candidates against exact shingle Jaccard instead of the
    /// signature estimate.
    pub exact_verify: bool,
}

impl Default for NearDedupConfig {
    fn default() -> Self {
        NearDedupConfig {
            num_perms: DEFAULT_NUM_PERMS,
            shingle_words: DEFAULT_SHINGLE_WORDS,
            lsh: LshParams::default(),
            seed: 42,
            exact_verify: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NearDedupOutcome {
    /// Input order preserved: unclustered docs plus one survivor per cluster.
    pub survivors: Vec<Document>,
    pub clusters: Vec<DuplicateCluster>,
}

impl NearDedupOutcome {
    /// Ids eliminated as near-duplicates, sorted.
    pub fn dropped_ids(&self) -> Vec<String> {
        let mut dropped: Vec<String> = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().filter(|m| **m != c.survivor).cloned())
            .collect();
        dropped.sort();
        dropped
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Cluster near-duplicates and keep one survivor per cluster: the document
/// with the most characters, ties to the smallest id.
pub fn near_dedup(docs: &[Document], config: &NearDedupConfig) -> Result<NearDedupOutcome, NearDedupError> {
    let shingle_sets: Vec<ShingleSet> = docs
        .par_iter()
        .map(|d| shingle(&d.text, config.shingle_words))
        .collect();
    let signatures: Vec<MinHashSignature> = shingle_sets
        .par_iter()
        .map(|s| minhash_sign(s, config.num_perms, config.seed))
        .collect();
    let candidates = lsh_candidates(&signatures, &config.lsh)?;

    let verified: Vec<(usize, usize)> = candidates
        .into_iter()
        .filter(|&(i, j)| {
            let sim = if config.exact_verify {
                shingle_sets[i].jaccard(&shingle_sets[j])
            } else {
                estimate_jaccard(&signatures[i], &signatures[j]).expect("same seed and length")
            };
            sim >= config.lsh.threshold
        })
        .collect();

    let mut uf = UnionFind::new(docs.len());
    for &(i, j) in &verified {
        uf.union(i, j);
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..docs.len() {
        components.entry(uf.find(i)).or_default().push(i);
    }

    let mut survivor_idx: BTreeSet<usize> = BTreeSet::new();
    let mut clusters = Vec::new();
    for indices in components.values() {
        if indices.len() == 1 {
            survivor_idx.insert(indices[0]);
            continue;
        }
        let &winner = indices
            .iter()
            .min_by(|&&a, &&b| {
                let la = docs[a].text.chars().count();
                let lb = docs[b].text.chars().count();
                lb.cmp(&la).then_with(|| docs[a].id.cmp(&docs[b].id))
            })
            .expect("cluster is non-empty");
        survivor_idx.insert(winner);
        let mut members: Vec<String> = indices.iter().map(|&i| docs[i].id.clone()).collect();
        members.sort();
        let mut pair_estimates = Vec::new();
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                let (x, y) = if docs[i].id <= docs[j].id { (i, j) } else { (j, i) };
                let est = estimate_jaccard(&signatures[x], &signatures[y]).expect("same family");
                pair_estimates.push((docs[x].id.clone(), docs[y].id.clone(), est));
            }
        }
        pair_estimates.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        clusters.push(DuplicateCluster {
            survivor: docs[winner].id.clone(),
            members,
            pair_estimates,
        });
    }
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));

    let survivors = docs
        .iter()
        .enumerate()
        .filter(|(i, _)| survivor_idx.contains(i))
        .map(|(_, d)| d.clone())
        .collect();
    Ok(NearDedupOutcome { survivors, clusters })
}

/// Digest used for exact dedup: 128-bit hash of whitespace-normalized text.
pub fn content_digest(text: &str) -> String {
    digest128_hex(normalize_whitespace(text).as_bytes())
}

/// Keep the first document per normalized-content digest. Returns survivors
/// in input order plus (dropped id, surviving id) pairs.
pub fn exact_dedup(docs: &[Document]) -> (Vec<Document>, Vec<(String, String)>) {
    let mut first_by_digest: HashMap<String, &str> = HashMap::new();
    let mut survivors = Vec::new();
    let mut dropped = Vec::new();
    for doc in docs {
        let digest = content_digest(&doc.text);
        match first_by_digest.get(digest.as_str()) {
            Some(&keeper) => dropped.push((doc.id.clone(), keeper.to_string())),
            None => {
                first_by_digest.insert(digest, &doc.id);
                survivors.push(doc.clone());
            }
        }
    }
    (survivors, dropped)
}
