//! Linear text classifiers over hashed n-gram features.
//!
//! One model family serves two jobs: binary quality filtering of documents
//! and multiclass language identification. Features are word 1-2 grams plus
//! character 3-5 grams, hashed into a fixed-size table with a signed hashing
//! trick, and mean-normalized per text. Training is plain softmax SGD, kept
//! single-threaded so a seed pins the result exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::hash::{derive_subseed, hash_str};

pub const POSITIVE_LABEL: &str = "positive";
pub const NEGATIVE_LABEL: &str = "negative";

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class `{0}`; need at least two")]
    SingleClass(String),
    #[error("source `{name}` has {available} documents, need {needed}")]
    PoolTooSmall {
        name: String,
        available: usize,
        needed: usize,
    },
    #[error("source fractions sum to {0}, expected 1")]
    BadFractions(f64),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("model file {path}: {message}")]
    BadModelFile { path: String, message: String },
    #[error("model file {path}: {source}")]
    ModelIo {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Which n-gram streams feed the feature hasher. A zero bound disables the
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub word_min: usize,
    pub word_max: usize,
    pub char_min: usize,
    pub char_max: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            word_min: 1,
            word_max: 2,
            char_min: 3,
            char_max: 5,
        }
    }
}

impl NgramConfig {
    /// Word unigrams only. Scores under this config are word-order invariant.
    pub fn unigram_only() -> Self {
        NgramConfig {
            word_min: 1,
            word_max: 1,
            char_min: 0,
            char_max: 0,
        }
    }
}

pub const DEFAULT_FEATURE_DIM: usize = 1 << 20;

const WORD_GRAM_SEED: u64 = 0x7a11;
const CHAR_GRAM_SEED: u64 = 0xc3a2;

/// Sparse hashed feature vector: sorted (index, value) pairs. Signed gram
/// counts are scaled by 1/sqrt(total grams), which gives every document's
/// feature vector roughly unit squared norm: one SGD step then moves a
/// document's logit by about the learning rate regardless of its length.
pub fn extract_features(text: &str, config: &NgramConfig, feature_dim: usize) -> Vec<(u32, f32)> {
    debug_assert!(feature_dim.is_power_of_two());
    let mask = (feature_dim - 1) as u64;
    let folded = text.to_lowercase();
    let mut accum: HashMap<u32, f32> = HashMap::new();
    let mut gram_count = 0usize;

    let mut add = |h: u64| {
        let idx = (h & mask) as u32;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        *accum.entry(idx).or_insert(0.0) += sign;
        gram_count += 1;
    };

    if config.word_max >= 1 {
        let words: Vec<&str> = folded.split_whitespace().collect();
        for n in config.word_min.max(1)..=config.word_max {
            if words.len() < n {
                continue;
            }
            for window in words.windows(n) {
                add(hash_str(&window.join(" "), WORD_GRAM_SEED ^ n as u64));
            }
        }
    }
    if config.char_max >= 1 {
        let chars: Vec<char> = folded.chars().collect();
        for n in config.char_min.max(1)..=config.char_max {
            if chars.len() < n {
                continue;
            }
            for window in chars.windows(n) {
                let gram: String = window.iter().collect();
                add(hash_str(&gram, CHAR_GRAM_SEED ^ n as u64));
            }
        }
    }

    if gram_count == 0 {
        return Vec::new();
    }
    let scale = 1.0 / (gram_count as f32).sqrt();
    let mut features: Vec<(u32, f32)> = accum
        .into_iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|(i, v)| (i, v * scale))
        .collect();
    features.sort_unstable_by_key(|&(i, _)| i);
    features
}

/// Linear classifier: per-class dense weight row over the hashed feature
/// space plus a bias. Labels are kept sorted, so class order is reproducible
/// from the label set alone.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedNgramModel {
    pub feature_dim: usize,
    pub ngram: NgramConfig,
    pub labels: Vec<String>,
    /// Flat class-major matrix, len = labels.len() * feature_dim.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl HashedNgramModel {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn logits(&self, features: &[(u32, f32)]) -> Vec<f64> {
        let mut logits: Vec<f64> = self.bias.iter().map(|&b| b as f64).collect();
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &self.weights[c * self.feature_dim..(c + 1) * self.feature_dim];
            let mut acc = 0.0f64;
            for &(idx, val) in features {
                acc += row[idx as usize] as f64 * val as f64;
            }
            *logit += acc;
        }
        logits
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-class probabilities for `text`, in `model.labels` order.
pub fn score(model: &HashedNgramModel, text: &str) -> Vec<f64> {
    let features = extract_features(text, &model.ngram, model.feature_dim);
    softmax(&model.logits(&features))
}

/// Probability of one named class.
pub fn score_label(model: &HashedNgramModel, text: &str, label: &str) -> Result<f64, ClassifyError> {
    let idx = model
        .label_index(label)
        .ok_or_else(|| ClassifyError::UnknownLabel(label.to_string()))?;
    Ok(score(model, text)[idx])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    /// No n-grams could be extracted; the argmax fell back to the biases.
    pub no_features: bool,
}

/// Argmax class with its probability. Ties resolve to the first (smallest)
/// label.
pub fn identify_language(model: &HashedNgramModel, text: &str) -> Prediction {
    let features = extract_features(text, &model.ngram, model.feature_dim);
    let probs = softmax(&model.logits(&features));
    let (best, &confidence) = probs
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .expect("model has at least one class");
    Prediction {
        label: model.labels[best].clone(),
        confidence,
        no_features: features.is_empty(),
    }
}

/// True iff the response's detected language equals the prompt's language.
pub fn verify_consistency(model: &HashedNgramModel, prompt_language: &str, response: &str) -> bool {
    identify_language(model, response).label == prompt_language
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledExample {
            text: text.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub feature_dim: usize,
    pub ngram: NgramConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            feature_dim: DEFAULT_FEATURE_DIM,
            ngram: NgramConfig::default(),
            epochs: 5,
            learning_rate: 0.1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: HashedNgramModel,
    /// Mean cross-entropy per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

/// Softmax SGD with per-epoch shuffling and linearly decaying learning rate.
/// Single-threaded on purpose: the seed pins the exact float sequence.
pub fn train(examples: &[LabeledExample], config: &TrainConfig) -> Result<TrainedModel, ClassifyError> {
    if examples.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    let mut labels: Vec<String> = examples.iter().map(|e| e.label.clone()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(ClassifyError::SingleClass(labels[0].clone()));
    }

    let label_of: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let features: Vec<Vec<(u32, f32)>> = examples
        .par_iter()
        .map(|e| extract_features(&e.text, &config.ngram, config.feature_dim))
        .collect();
    let targets: Vec<usize> = examples.iter().map(|e| label_of[e.label.as_str()]).collect();

    let dim = config.feature_dim;
    let mut weights = vec![0.0f32; labels.len() * dim];
    let mut bias = vec![0.0f32; labels.len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed(config.seed, "classifier-sgd"));
    let total_steps = (config.epochs * examples.len()) as f64;
    let mut step = 0usize;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for &i in &order {
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps);
            step += 1;
            let feats = &features[i];
            let target = targets[i];

            let mut logits: Vec<f64> = bias.iter().map(|&b| b as f64).collect();
            for (c, logit) in logits.iter_mut().enumerate() {
                let row = &weights[c * dim..(c + 1) * dim];
                for &(idx, val) in feats {
                    *logit += row[idx as usize] as f64 * val as f64;
                }
            }
            let probs = softmax(&logits);
            loss_sum += -probs[target].max(1e-300).ln();

            for c in 0..labels.len() {
                let err = probs[c] - if c == target { 1.0 } else { 0.0 };
                let delta = (lr * err) as f32;
                if delta == 0.0 {
                    continue;
                }
                let row = &mut weights[c * dim..(c + 1) * dim];
                for &(idx, val) in feats {
                    row[idx as usize] -= delta * val;
                }
                bias[c] -= delta;
            }
        }
        epoch_losses.push(loss_sum / examples.len() as f64);
    }

    Ok(TrainedModel {
        model: HashedNgramModel {
            feature_dim: dim,
            ngram: config.ngram,
            labels,
            weights,
            bias,
        },
        epoch_losses,
    })
}

/// Exactly ceil(fraction * N) documents with the highest probability of
/// `positive_label`. Ties break to the smaller id.
pub fn select_top_fraction(
    docs: &[Document],
    model: &HashedNgramModel,
    fraction: f64,
    positive_label: &str,
) -> Result<Vec<Document>, ClassifyError> {
    if docs.is_empty() {
        return Err(ClassifyError::EmptyCorpus);
    }
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "fraction must be in (0, 1]"
    );
    let idx = model
        .label_index(positive_label)
        .ok_or_else(|| ClassifyError::UnknownLabel(positive_label.to_string()))?;
    let mut scored: Vec<(f64, &Document)> = docs
        .par_iter()
        .map(|d| (score(model, &d.text)[idx], d))
        .collect();
    scored.sort_by(|(sa, da), (sb, db)| {
        sb.partial_cmp(sa)
            .expect("probabilities are finite")
            .then_with(|| da.id.cmp(&db.id))
    });
    let take = ((fraction * docs.len() as f64).ceil() as usize).min(docs.len());
    Ok(scored[..take].iter().map(|(_, d)| (*d).clone()).collect())
}

/// Per-language variant: the quota applies within each language group, so
/// small languages are not crowded out by large ones.
pub fn select_top_fraction_per_language(
    docs: &[Document],
    model: &HashedNgramModel,
    fraction: f64,
    positive_label: &str,
) -> Result<Vec<Document>, ClassifyError> {
    let mut by_lang: BTreeMap<&str, Vec<Document>> = BTreeMap::new();
    for d in docs {
        by_lang.entry(d.language.as_str()).or_default().push(d.clone());
    }
    let mut out = Vec::new();
    for group in by_lang.values() {
        out.extend(select_top_fraction(group, model, fraction, positive_label)?);
    }
    Ok(out)
}

/// Composition of the positive side of a quality training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSetSpec {
    /// Source name to fraction of the positive examples. Must sum to 1.
    pub positives_per_source: BTreeMap<String, f64>,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl Default for TrainingSetSpec {
    fn default() -> Self {
        let mut positives_per_source = BTreeMap::new();
        positives_per_source.insert("cosmopedia".to_string(), 0.4);
        positives_per_source.insert("madlad".to_string(), 0.4);
        positives_per_source.insert("ultrachat".to_string(), 0.2);
        TrainingSetSpec {
            positives_per_source,
            n_positive: 10_000,
            n_negative: 10_000,
        }
    }
}

/// Integer counts per source summing exactly to `total`, by largest-remainder
/// rounding of `fractions`. Remainder ties break to the smaller source name.
pub fn largest_remainder_counts(fractions: &BTreeMap<String, f64>, total: usize) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders: Vec<(f64, &String)> = Vec::new();
    let mut assigned = 0usize;
    for (source, &frac) in fractions {
        let raw = frac * total as f64;
        let floor = raw.floor() as usize;
        counts.insert(source.clone(), floor);
        assigned += floor;
        remainders.push((raw - floor as f64, source));
    }
    remainders.sort_by(|(ra, sa), (rb, sb)| rb.partial_cmp(ra).unwrap().then_with(|| sa.cmp(sb)));
    for (_, source) in remainders.iter().take(total.saturating_sub(assigned)) {
        *counts.get_mut(*source).expect("source present") += 1;
    }
    counts
}

/// Draw the positive examples per the source fractions and the negatives from
/// their pool, both without replacement, deterministically from `seed`.
pub fn build_training_set(
    pools: &BTreeMap<String, Vec<Document>>,
    spec: &TrainingSetSpec,
    negatives: &[Document],
    seed: u64,
) -> Result<Vec<LabeledExample>, ClassifyError> {
    let frac_sum: f64 = spec.positives_per_source.values().sum();
    if (frac_sum - 1.0).abs() > 1e-9 {
        return Err(ClassifyError::BadFractions(frac_sum));
    }
    assert!(spec.n_positive >= 1 && spec.n_negative >= 1, "counts must be at least 1");

    let counts = largest_remainder_counts(&spec.positives_per_source, spec.n_positive);
    let mut examples = Vec::with_capacity(spec.n_positive + spec.n_negative);
    for (source, &need) in &counts {
        let pool = pools.get(source).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < need {
            return Err(ClassifyError::PoolTooSmall {
                name: source.clone(),
                available: pool.len(),
                needed: need,
            });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed(seed, source));
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(need) {
            examples.push(LabeledExample::new(pool[i].text.clone(), POSITIVE_LABEL));
        }
    }
    if negatives.len() < spec.n_negative {
        return Err(ClassifyError::PoolTooSmall {
            name: "negatives".to_string(),
            available: negatives.len(),
            needed: spec.n_negative,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed(seed, "negatives"));
    let mut indices: Vec<usize> = (0..negatives.len()).collect();
    indices.shuffle(&mut rng);
    for &i in indices.iter().take(spec.n_negative) {
        examples.push(LabeledExample::new(negatives[i].text.clone(), NEGATIVE_LABEL));
    }
    Ok(examples)
}

const MODEL_MAGIC: &[u8; 8] = b"CMXNGM01";

/// Write the model in the versioned binary layout: magic, header, biases,
/// then dense per-class weight rows, all little-endian. Loading the file back
/// reproduces every byte of every float.
pub fn save_model(model: &HashedNgramModel, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| ClassifyError::ModelIo {
        path: path_str.clone(),
        source,
    };
    let file = File::create(&path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes);

    put(MODEL_MAGIC).map_err(io_err)?;
    put(&(model.feature_dim as u64).to_le_bytes()).map_err(io_err)?;
    for v in [
        model.ngram.word_min,
        model.ngram.word_max,
        model.ngram.char_min,
        model.ngram.char_max,
    ] {
        put(&(v as u32).to_le_bytes()).map_err(io_err)?;
    }
    put(&(model.labels.len() as u32).to_le_bytes()).map_err(io_err)?;
    for label in &model.labels {
        put(&(label.len() as u32).to_le_bytes()).map_err(io_err)?;
        put(label.as_bytes()).map_err(io_err)?;
    }
    for &b in &model.bias {
        put(&b.to_le_bytes()).map_err(io_err)?;
    }
    for &v in &model.weights {
        put(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HashedNgramModel, ClassifyError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| ClassifyError::ModelIo {
        path: path_str.clone(),
        source,
    };
    let bad = |message: &str| ClassifyError::BadModelFile {
        path: path_str.clone(),
        message: message.to_string(),
    };
    let file = File::open(&path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MODEL_MAGIC {
        return Err(bad("wrong magic"));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(io_err)?;
    let feature_dim = u64::from_le_bytes(u64buf) as usize;
    if !feature_dim.is_power_of_two() {
        return Err(bad("feature_dim is not a power of two"));
    }
    let read_u32 = |r: &mut BufReader<File>| -> Result<u32, ClassifyError> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(&io_err)?;
        Ok(u32::from_le_bytes(buf))
    };
    let ngram = NgramConfig {
        word_min: read_u32(&mut r)? as usize,
        word_max: read_u32(&mut r)? as usize,
        char_min: read_u32(&mut r)? as usize,
        char_max: read_u32(&mut r)? as usize,
    };
    let num_labels = read_u32(&mut r)? as usize;
    if num_labels == 0 {
        return Err(bad("zero labels"));
    }
    let mut labels = Vec::with_capacity(num_labels);
    for _ in 0..num_labels {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(io_err)?;
        labels.push(String::from_utf8(buf).map_err(|_| bad("label is not UTF-8"))?);
    }
    let mut f32buf = [0u8; 4];
    let mut bias = Vec::with_capacity(num_labels);
    for _ in 0..num_labels {
        r.read_exact(&mut f32buf).map_err(io_err)?;
        bias.push(f32::from_le_bytes(f32buf));
    }
    let mut weights = Vec::with_capacity(num_labels * feature_dim);
    for _ in 0..num_labels * feature_dim {
        r.read_exact(&mut f32buf).map_err(io_err)?;
        weights.push(f32::from_le_bytes(f32buf));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(HashedNgramModel {
        feature_dim,
        ngram,
        labels,
        weights,
        bias,
    })
}
