//! Deterministic corpus builders shared by the benchmarks.

use corpusmix_core::Document;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const VOCAB_SIZE: usize = 20_000;

/// Lowercase base-26 spelling of `k`; every vocabulary word is fully
/// alphabetic so fixture documents survive the alpha-ratio cleaning rule.
fn vocab_word(mut k: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'a' + (k % 26) as u8) as char);
        k /= 26;
        if k == 0 {
            break;
        }
    }
    s
}

pub fn synthetic_text(rng: &mut ChaCha20Rng, words: usize) -> String {
    (0..words)
        .map(|_| vocab_word(rng.gen_range(0..VOCAB_SIZE)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n_docs` documents of `words_per_doc` words; roughly `dup_rate` of them
/// are near-copies of an earlier document (same URL, a few words appended).
pub fn synthetic_corpus(n_docs: usize, words_per_doc: usize, dup_rate: f64, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let languages = ["vie", "ind", "tha", "zsm", "mya"];
    let mut docs: Vec<Document> = Vec::with_capacity(n_docs);
    for i in 0..n_docs {
        let language = languages[i % languages.len()];
        let (url, text) = if i > 0 && rng.gen_bool(dup_rate) {
            let pick = rng.gen_range(0..docs.len());
            let n_extra = rng.gen_range(1..4);
            let extra = synthetic_text(&mut rng, n_extra);
            let original = &docs[pick];
            (
                original.url.clone().unwrap(),
                format!("{} {extra}", original.text),
            )
        } else {
            (
                format!("https://example.com/{i}"),
                synthetic_text(&mut rng, words_per_doc),
            )
        };
        docs.push(Document::new(format!("doc{i:06}"), language, text).with_url(url));
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use corpusmix_core::pipeline::{run_pipeline, LayerName, PipelineConfig};

    /// The pipeline bench is only meaningful if the fixture passes the rules
    /// layer and the planted near-copies are actually removed.
    #[test]
    fn corpus_survives_rules_and_loses_planted_duplicates() {
        let docs = synthetic_corpus(200, 200, 0.1, 1);
        let mut config = PipelineConfig::default();
        config.layers.retain(|l| *l != LayerName::QualityFilter);
        let out = run_pipeline(docs, &config, None).unwrap();
        assert!(out.docs.len() >= 150, "kept only {}", out.docs.len());
        assert!(out.docs.len() < 200, "no duplicates were removed");
    }
}
