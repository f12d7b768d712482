//! End-to-end tests of the corpusmix binary: real processes, real files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn corpusmix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corpusmix"))
        .args(args)
        .current_dir(dir)
        .env_remove("CORPUSMIX_CONFIG")
        .output()
        .expect("spawn corpusmix")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn write_jsonl(path: &Path, records: &[Value]) {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn read_ids(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect()
}

fn doc(id: &str, language: &str, text: &str) -> Value {
    json!({"id": id, "language": language, "text": text})
}

/// Sentence-like filler that passes the default cleaning rules. Marker words
/// keyed by `seed` keep texts from different seeds well below any Jaccard
/// threshold.
fn prose(seed: usize, words: usize) -> String {
    let vocab = [
        "river", "mountain", "harvest", "village", "market", "season", "journey", "story",
        "garden", "evening", "festival", "teacher", "letter", "bridge", "forest", "morning",
    ];
    (0..words)
        .map(|i| {
            if i % 5 == 3 {
                format!("s{seed}w{i}")
            } else {
                vocab[(seed * 7 + i * 13) % vocab.len()].to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------- clean

#[test]
fn clean_drops_short_docs_and_url_duplicates_with_audit_trail() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("in.jsonl");
    let mut records = vec![
        json!({"id": "keep0", "language": "vie", "text": prose(1, 60), "url": "https://a.example/x"}),
        json!({"id": "keep1", "language": "vie", "text": prose(2, 60), "url": "https://a.example/y"}),
        doc("short", "vie", "too small"),
        // Same URL modulo case and fragment; the shorter text loses.
        json!({"id": "urldup", "language": "vie", "text": prose(3, 40), "url": "https://A.example/x#frag"}),
    ];
    // A footer line repeated beyond the occurrence cap, plus one doc that is
    // nothing but that footer.
    for i in 0..6 {
        let text = format!("SUBSCRIBE TO OUR NEWSLETTER\n{}", prose(10 + i, 60));
        records.push(doc(&format!("footer{i}"), "vie", &text));
    }
    // Long enough to pass the length rule, but nothing except the footer.
    let only_footer = vec!["SUBSCRIBE TO OUR NEWSLETTER"; 10].join("\n");
    records.push(doc("footeronly", "vie", &only_footer));
    write_jsonl(&input, &records);

    let out = corpusmix(
        &[
            "clean",
            "--input", "in.jsonl",
            "--output", "out.jsonl",
            "--audit", "audit.jsonl",
            "--max-line-occurrences", "5",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    let kept = read_ids(&tmp.path().join("out.jsonl"));
    assert!(kept.contains(&"keep0".to_string()));
    assert!(!kept.contains(&"short".to_string()));
    assert!(!kept.contains(&"urldup".to_string()));
    assert!(!kept.contains(&"footeronly".to_string()));

    let audit = fs::read_to_string(tmp.path().join("audit.jsonl")).unwrap();
    let reasons: Vec<(String, String)> = audit
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["reason"].as_str().unwrap().to_string())
        })
        .collect();
    assert!(reasons.contains(&("short".into(), "too_short".into())));
    assert!(reasons.contains(&("urldup".into(), "url_duplicate".into())));
    assert!(reasons.contains(&("footeronly".into(), "frequent_line_empty".into())));

    // The footer itself is stripped from survivors.
    let cleaned = fs::read_to_string(tmp.path().join("out.jsonl")).unwrap();
    assert!(!cleaned.contains("SUBSCRIBE"));
}

#[test]
fn clean_custom_rules_file_overrides_thresholds() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(&tmp.path().join("in.jsonl"), &[doc("tiny", "vie", "ten chars!!")]);
    fs::write(tmp.path().join("rules.toml"), "min_chars = 5\nmin_alpha_ratio = 0.0\n").unwrap();

    let out = corpusmix(
        &["clean", "--input", "in.jsonl", "--output", "out.jsonl", "--rules", "rules.toml"],
        tmp.path(),
    );
    assert_ok(&out);
    assert_eq!(read_ids(&tmp.path().join("out.jsonl")), vec!["tiny"]);
}

// ---------------------------------------------------------------- dedup

#[test]
fn dedup_clusters_near_duplicates_and_keeps_longest() {
    let tmp = TempDir::new().unwrap();
    let base = prose(5, 80);
    let longer = format!("{base} harvest festival evening");
    write_jsonl(
        &tmp.path().join("in.jsonl"),
        &[
            doc("a", "vie", &base),
            doc("b", "vie", &longer),
            doc("c", "vie", &prose(900, 80)),
        ],
    );

    let out = corpusmix(
        &[
            "dedup",
            "--input", "in.jsonl",
            "--output", "out.jsonl",
            "--clusters", "clusters.jsonl",
            "--audit", "audit.jsonl",
            "--exact-verify",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    assert_eq!(read_ids(&tmp.path().join("out.jsonl")), vec!["b", "c"]);
    let clusters = fs::read_to_string(tmp.path().join("clusters.jsonl")).unwrap();
    let cluster: Value = serde_json::from_str(clusters.lines().next().unwrap()).unwrap();
    assert_eq!(cluster["survivor"], "b");
    assert_eq!(cluster["members"], json!(["a", "b"]));
    assert!(cluster["pair_estimates"][0][2].as_f64().unwrap() >= 0.8);
}

#[test]
fn dedup_exact_mode_keys_on_normalized_text() {
    let tmp = TempDir::new().unwrap();
    let text = prose(6, 40);
    let respaced = text.replace(' ', "  ");
    write_jsonl(
        &tmp.path().join("in.jsonl"),
        &[doc("first", "vie", &text), doc("second", "vie", &respaced), doc("other", "vie", &prose(7, 40))],
    );

    let out = corpusmix(
        &["dedup", "--exact", "--input", "in.jsonl", "--output", "out.jsonl", "--clusters", "c.jsonl"],
        tmp.path(),
    );
    assert_ok(&out);
    assert_eq!(read_ids(&tmp.path().join("out.jsonl")), vec!["first", "other"]);

    let cluster: Value =
        serde_json::from_str(fs::read_to_string(tmp.path().join("c.jsonl")).unwrap().lines().next().unwrap())
            .unwrap();
    assert_eq!(cluster["survivor"], "first");
    assert_eq!(cluster["members"], json!(["first", "second"]));
}

#[test]
fn dedup_rejects_band_shape_mismatch() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(&tmp.path().join("in.jsonl"), &[doc("a", "vie", "x")]);
    let out = corpusmix(
        &["dedup", "--input", "in.jsonl", "--output", "out.jsonl", "--bands", "5", "--rows", "5"],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bands"));
}

// ---------------------------------------------------------------- classifiers

fn quality_fixture(tmp: &TempDir) {
    let fine: Vec<Value> = (0..40)
        .map(|i| {
            json!({
                "id": format!("fine{i:02}"),
                "language": "eng",
                "text": format!("careful {} analysis of the historical {} record", prose(i, 10), i),
                "source": if i % 2 == 0 { "cosmopedia" } else { "madlad" },
            })
        })
        .collect();
    let junk: Vec<Value> = (0..40)
        .map(|i| {
            doc(
                &format!("junk{i:02}"),
                "eng",
                &format!("click here winner {i} free prize jackpot bonus spin now {i}"),
            )
        })
        .collect();
    write_jsonl(&tmp.path().join("pos.jsonl"), &fine);
    write_jsonl(&tmp.path().join("neg.jsonl"), &junk);
}

#[test]
fn quality_train_then_filter_keeps_top_fraction_per_language() {
    let tmp = TempDir::new().unwrap();
    quality_fixture(&tmp);
    let train = corpusmix(
        &[
            "quality-train",
            "--positives", "pos.jsonl",
            "--negatives", "neg.jsonl",
            "--out", "quality.bin",
            "--feature-dim", "65536",
        ],
        tmp.path(),
    );
    assert_ok(&train);

    // 4 fine + 4 junk docs per language; top half must be exactly the fine ones.
    let mixed: Vec<Value> = (0..8)
        .flat_map(|i| {
            let lang = if i % 2 == 0 { "vie" } else { "tha" };
            vec![
                doc(&format!("f{i}"), lang, &format!("careful analysis of the historical record {i}")),
                doc(&format!("j{i}"), lang, &format!("click winner free prize jackpot {i}")),
            ]
        })
        .collect();
    write_jsonl(&tmp.path().join("mixed.jsonl"), &mixed);

    let filter = corpusmix(
        &[
            "quality-filter",
            "--model", "quality.bin",
            "--input", "mixed.jsonl",
            "--output", "kept.jsonl",
            "--fraction", "0.5",
        ],
        tmp.path(),
    );
    assert_ok(&filter);
    let kept = read_ids(&tmp.path().join("kept.jsonl"));
    assert_eq!(kept.len(), 8);
    assert!(kept.iter().all(|id| id.starts_with('f')), "kept {kept:?}");
}

#[test]
fn quality_train_is_deterministic_at_the_byte_level() {
    let tmp = TempDir::new().unwrap();
    quality_fixture(&tmp);
    for out in ["m1.bin", "m2.bin"] {
        let run = corpusmix(
            &[
                "quality-train",
                "--positives", "pos.jsonl",
                "--negatives", "neg.jsonl",
                "--out", out,
                "--feature-dim", "65536",
            ],
            tmp.path(),
        );
        assert_ok(&run);
    }
    let a = fs::read(tmp.path().join("m1.bin")).unwrap();
    let b = fs::read(tmp.path().join("m2.bin")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn langid_train_then_predict_recovers_labels() {
    let tmp = TempDir::new().unwrap();
    let train_docs: Vec<Value> = (0..30)
        .map(|i| {
            if i % 2 == 0 {
                doc(&format!("v{i}"), "vie", &format!("xin chao toi la nguoi viet nam {i} hom nay troi dep"))
            } else {
                doc(&format!("t{i}"), "tgl", &format!("magandang umaga po kumusta ka ngayon araw {i}"))
            }
        })
        .collect();
    write_jsonl(&tmp.path().join("train.jsonl"), &train_docs);
    assert_ok(&corpusmix(
        &["langid-train", "--input", "train.jsonl", "--out", "langid.bin", "--feature-dim", "65536"],
        tmp.path(),
    ));

    write_jsonl(
        &tmp.path().join("heldout.jsonl"),
        &[
            doc("q1", "und", "xin chao nguoi viet hom nay"),
            doc("q2", "und", "magandang araw po kumusta"),
        ],
    );
    assert_ok(&corpusmix(
        &["langid-predict", "--model", "langid.bin", "--input", "heldout.jsonl", "--out", "pred.jsonl"],
        tmp.path(),
    ));
    let preds: Vec<Value> = fs::read_to_string(tmp.path().join("pred.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(preds[0]["language"], "vie");
    assert_eq!(preds[1]["language"], "tgl");
    assert!(preds.iter().all(|p| p["confidence"].as_f64().unwrap() > 0.5));
}

// ---------------------------------------------------------------- mixture

#[test]
fn mixture_sample_fit_optimize_chain_beats_the_prior() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("prior.json"), r#"{"vie": 475, "ind": 325, "tha": 61}"#).unwrap();
    assert_ok(&corpusmix(
        &["mixture-sample", "--prior", "prior.json", "-n", "60", "--seed", "9", "--out", "samples.jsonl"],
        tmp.path(),
    ));

    // Every sample lies on the simplex.
    let samples: Vec<Value> = fs::read_to_string(tmp.path().join("samples.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(samples.len(), 60);
    for s in &samples {
        let sum: f64 = s.as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    // Noise-free log-linear losses so the ridge fit is exact: languages want
    // more weight on themselves.
    let obs: Vec<Value> = samples
        .iter()
        .map(|s| {
            let w = s.as_object().unwrap();
            let losses: serde_json::Map<String, Value> = w
                .iter()
                .map(|(k, v)| {
                    let loss = (2.0 - 1.5 * v.as_f64().unwrap()).exp();
                    (k.clone(), json!(loss))
                })
                .collect();
            json!({"weights": s, "losses": losses})
        })
        .collect();
    write_jsonl(&tmp.path().join("obs.jsonl"), &obs);
    assert_ok(&corpusmix(
        &["mixture-fit", "--observations", "obs.jsonl", "--lambda", "0", "--out", "ridge.json"],
        tmp.path(),
    ));
    let optimize = corpusmix(
        &[
            "mixture-optimize",
            "--model", "ridge.json",
            "--prior", "prior.json",
            "--objective", "neg-sum-loss",
            "--candidates", "5000",
            "--out", "best.json",
        ],
        tmp.path(),
    );
    assert_ok(&optimize);
    let best: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("best.json")).unwrap()).unwrap();
    let sum: f64 = best.as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let objective_line = stdout(&optimize);
    assert!(objective_line.contains("best of 5002 candidates"), "{objective_line}");
}

#[test]
fn mixture_optimize_rejects_unknown_objective() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("prior.json"), r#"{"a": 1}"#).unwrap();
    fs::write(tmp.path().join("ridge.json"), r#"{"keys": ["a"], "coefficients": {"a": [1.0]}, "lambda": 0.0}"#)
        .unwrap();
    let out = corpusmix(
        &[
            "mixture-optimize",
            "--model", "ridge.json",
            "--prior", "prior.json",
            "--objective", "max-hope",
            "--out", "best.json",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown objective"));
}

#[test]
fn budget_plan_and_validate_match_published_stage_totals() {
    let tmp = TempDir::new().unwrap();
    let plan = corpusmix(
        &[
            "budget-plan",
            "--stage", "1",
            "--declared-total", "450",
            "--row", "Vietnamese=102", "--row", "Indonesian=94", "--row", "Thai=92",
            "--row", "English=51", "--row", "Chinese=50", "--row", "Burmese=23.5",
            "--row", "Malay=21", "--row", "Tagalog=10", "--row", "Khmer=6.5",
            "--out", "stage1.toml",
        ],
        tmp.path(),
    );
    assert_ok(&plan);
    assert!(stdout(&plan).trim_end().ends_with("Stage 1 (Total) 450B"));

    let validate = corpusmix(&["budget-validate", "--plan", "stage1.toml", "--strict"], tmp.path());
    assert_ok(&validate);
    assert!(stdout(&validate).contains("validation: ok"));
}

#[test]
fn budget_validate_strict_fails_on_mismatched_stage2_plan() {
    let tmp = TempDir::new().unwrap();
    let plan = corpusmix(
        &[
            "budget-plan",
            "--stage", "2",
            "--declared-total", "60",
            "--replay", "Stage 1 replay=10", "--replay", "English Instruction=2.5",
            "--row", "Vietnamese=10.9", "--row", "Indonesian=12.8", "--row", "Thai=13.9",
            "--row", "Burmese=2.8", "--row", "Malay=1.3", "--row", "Tagalog=2.2",
            "--row", "Khmer=0.9", "--row", "Waray=0.02", "--row", "Ilocano=0.05",
            "--row", "Javanese=0.17", "--row", "Lao=0.33", "--row", "Cebuano=0.30",
            "--row", "Sundanese=0.09",
            "--out", "stage2.toml",
        ],
        tmp.path(),
    );
    assert_ok(&plan);
    let table = stdout(&plan);
    assert!(table.contains("Stage 2 (Total) 60B"));
    assert!(table.contains("rows sum to 58.26B"), "{table}");

    // Non-strict: report, exit zero. Strict: exit nonzero.
    let soft = corpusmix(&["budget-validate", "--plan", "stage2.toml"], tmp.path());
    assert_ok(&soft);
    assert!(stdout(&soft).contains("MISMATCH"));
    assert!(stdout(&soft).contains("delta 1.74B"));

    let strict = corpusmix(&["budget-validate", "--plan", "stage2.toml", "--strict"], tmp.path());
    assert_eq!(strict.status.code(), Some(1));
}

// ---------------------------------------------------------------- posttrain

fn conversation(id: &str, language: &str, subcategory: &str, roles: &[(&str, &str)]) -> Value {
    let messages: Vec<Value> = roles.iter().map(|(r, c)| json!({"role": r, "content": c})).collect();
    json!({"id": id, "language": language, "subcategory": subcategory, "messages": messages})
}

#[test]
fn sft_verify_reports_violations_and_strict_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(
        &tmp.path().join("conv.jsonl"),
        &[
            conversation("good", "vie", "Math", &[("user", "q"), ("assistant", "a")]),
            conversation("dangling", "vie", "Math", &[("user", "q"), ("assistant", "a"), ("user", "q2")]),
            conversation("empty", "vie", "Math", &[("user", ""), ("assistant", "a")]),
        ],
    );
    let out = corpusmix(
        &["sft-verify", "--input", "conv.jsonl", "--violations", "bad.jsonl"],
        tmp.path(),
    );
    assert_ok(&out);
    assert!(stdout(&out).contains("3 conversations, 1 well-formed, 2 violations"));

    let violations: Vec<Value> = fs::read_to_string(tmp.path().join("bad.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(violations[0]["id"], "dangling");
    assert_eq!(violations[0]["violation"], "final_not_assistant");
    assert_eq!(violations[1]["id"], "empty");
    assert_eq!(violations[1]["violation"], "empty_content");

    let strict = corpusmix(&["sft-verify", "--input", "conv.jsonl", "--strict"], tmp.path());
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn sft_dedup_only_compares_within_a_language() {
    let tmp = TempDir::new().unwrap();
    let text = prose(11, 60);
    write_jsonl(
        &tmp.path().join("conv.jsonl"),
        &[
            conversation("vie-a", "vie", "Math", &[("user", &text), ("assistant", "ok")]),
            conversation("vie-b", "vie", "Math", &[("user", &text), ("assistant", "ok")]),
            conversation("tha-a", "tha", "Math", &[("user", &text), ("assistant", "ok")]),
        ],
    );
    let out = corpusmix(
        &["sft-dedup", "--input", "conv.jsonl", "--output", "out.jsonl", "--exact-verify"],
        tmp.path(),
    );
    assert_ok(&out);
    assert_eq!(read_ids(&tmp.path().join("out.jsonl")), vec!["vie-a", "tha-a"]);
}

#[test]
fn sft_select_honors_quotas_and_cosine_diversity() {
    let tmp = TempDir::new().unwrap();
    // Three Math items: the top two by selection score share an embedding
    // direction, so the second admission must skip to the orthogonal third.
    let items = vec![
        json!({
            "conversation": conversation("best", "vie", "Math", &[("user", "q"), ("assistant", "a")]),
            "reward": 0.9, "perplexity": 9.0, "embedding": [1.0, 0.0]
        }),
        json!({
            "conversation": conversation("clone", "vie", "Math", &[("user", "q"), ("assistant", "a")]),
            "reward": 0.8, "perplexity": 2.0, "embedding": [1.0, 0.0]
        }),
        json!({
            "conversation": conversation("fresh", "vie", "Math", &[("user", "q"), ("assistant", "a")]),
            "reward": 0.1, "perplexity": 1.0, "embedding": [0.0, 1.0]
        }),
        json!({
            "conversation": conversation("unquoted", "tha", "Math", &[("user", "q"), ("assistant", "a")]),
            "reward": 0.9, "perplexity": 1.0, "embedding": [1.0, 0.0]
        }),
    ];
    write_jsonl(&tmp.path().join("scored.jsonl"), &items);
    fs::write(
        tmp.path().join("quotas.toml"),
        "[[quota]]\nlanguage = \"vie\"\ncategory = \"Math & Data\"\ncount = 2\n",
    )
    .unwrap();

    let out = corpusmix(
        &[
            "sft-select",
            "--input", "scored.jsonl",
            "--quota-file", "quotas.toml",
            "--output", "selected.jsonl",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    let selected: Vec<Value> = fs::read_to_string(tmp.path().join("selected.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = selected.iter().map(|v| v["conversation"]["id"].as_str().unwrap()).collect();
    assert_eq!(ids, vec!["best", "fresh"]);
    // Percentiles were filled in on the way through.
    assert!(selected[0]["selection_score"].as_f64().unwrap() > 0.0);
}

#[test]
fn pref_build_applies_rules_discards_and_loser_policies() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(
        &tmp.path().join("prompts.jsonl"),
        &[
            json!({"prompt": "p1", "responses": [
                {"text": "r0", "reward": 0.1, "language_consistent": true},
                {"text": "r1", "reward": 0.9, "language_consistent": true},
            ]}),
            json!({"prompt": "p2", "responses": [
                {"text": "r0", "reward": 0.5, "language_consistent": true},
                {"text": "r1", "reward": 0.2, "language_consistent": false},
                {"text": "r2", "reward": 0.8, "language_consistent": false},
            ]}),
            json!({"prompt": "p3", "responses": [
                {"text": "r0", "reward": 0.4, "language_consistent": false},
                {"text": "r1", "reward": 0.6, "language_consistent": false},
            ]}),
        ],
    );

    let out = corpusmix(
        &[
            "pref-build",
            "--input", "prompts.jsonl",
            "--output", "pairs.jsonl",
            "--discards", "discards.jsonl",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    let pairs: Vec<Value> = fs::read_to_string(tmp.path().join("pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0]["chosen"]["text"], "r1");
    assert_eq!(pairs[0]["rejected"]["text"], "r0");
    assert_eq!(pairs[0]["rule"], "reward_comparison");
    // Exactly one consistent: default policy rejects the lowest-reward
    // inconsistent response.
    assert_eq!(pairs[1]["chosen"]["text"], "r0");
    assert_eq!(pairs[1]["rejected"]["text"], "r1");
    assert_eq!(pairs[1]["rule"], "single_consistent");

    let discards = fs::read_to_string(tmp.path().join("discards.jsonl")).unwrap();
    assert!(discards.contains("no_consistent_response"));

    let highest = corpusmix(
        &[
            "pref-build",
            "--input", "prompts.jsonl",
            "--output", "pairs2.jsonl",
            "--loser-policy", "highest",
        ],
        tmp.path(),
    );
    assert_ok(&highest);
    let pairs2: Vec<Value> = fs::read_to_string(tmp.path().join("pairs2.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs2[1]["rejected"]["text"], "r2");
}

#[test]
fn pref_build_counts_underfilled_prompts_as_errors() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(
        &tmp.path().join("prompts.jsonl"),
        &[json!({"prompt": "alone", "responses": [
            {"text": "r0", "reward": 0.5, "language_consistent": true},
        ]})],
    );
    let out = corpusmix(
        &["pref-build", "--input", "prompts.jsonl", "--output", "pairs.jsonl"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alone"));
}

// ---------------------------------------------------------------- report

#[test]
fn report_stats_renders_table_and_lossless_csv() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(
        &tmp.path().join("shard.jsonl"),
        &[
            doc("a", "vie", "bốn chữ đúng đây"),
            doc("b", "vie", "thêm một dòng nữa dài hơn"),
            doc("c", "khm", "tiny"),
        ],
    );
    let out = corpusmix(
        &["report", "--kind", "stats", "--input", "shard.jsonl", "--format", "both", "--token-counter", "whitespace"],
        tmp.path(),
    );
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("Language"), "{text}");
    assert!(text.contains("Vietnamese"));
    assert!(text.contains("Total"));
    assert!(text.contains("language,iso_code,documents,tokens"));
    assert!(text.contains("vie,2,10"));
}

#[test]
fn report_stats_on_empty_shard_is_header_only_csv() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("empty.jsonl"), "").unwrap();
    let out = corpusmix(
        &["report", "--kind", "stats", "--input", "empty.jsonl", "--format", "csv"],
        tmp.path(),
    );
    assert_ok(&out);
    assert_eq!(stdout(&out), "language,iso_code,documents,tokens\n");
}

#[test]
fn report_distribution_counts_conversations_per_split() {
    let tmp = TempDir::new().unwrap();
    write_jsonl(
        &tmp.path().join("s1.jsonl"),
        &[
            conversation("a", "vie", "Math", &[("user", "q"), ("assistant", "a")]),
            conversation("b", "tha", "Math", &[("user", "q"), ("assistant", "a")]),
        ],
    );
    write_jsonl(
        &tmp.path().join("s2.jsonl"),
        &[conversation("c", "vie", "Math", &[("user", "q"), ("assistant", "a")])],
    );
    let out = corpusmix(
        &[
            "report",
            "--kind", "distribution",
            "--split", "stage1=s1.jsonl",
            "--split", "stage2=s2.jsonl",
            "--format", "csv",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = stdout(&out);
    assert!(csv.contains("language,stage1,stage2,total"));
    assert!(csv.contains("vie,1,1,2"));
    assert!(csv.contains("tha,1,0,1"));

    let table = corpusmix(
        &["report", "--kind", "distribution", "--split", "stage1=s1.jsonl", "--split", "stage2=s2.jsonl"],
        tmp.path(),
    );
    assert_ok(&table);
    assert!(stdout(&table).contains("Total"));
}

// ---------------------------------------------------------------- pipeline

fn pipeline_fixture(path: &Path) {
    let mut records: Vec<Value> = (0..40)
        .map(|i| {
            json!({
                "id": format!("doc{i:03}"),
                "language": if i % 3 == 0 { "tha" } else { "vie" },
                "text": prose(i, 70),
                "url": format!("https://site.example/page/{i}"),
            })
        })
        .collect();
    records.push(doc("dup-of-0", "vie", &prose(0, 70)));
    records.push(doc("short", "vie", "no"));
    write_jsonl(path, &records);
}

#[test]
fn pipeline_reads_config_from_env_var_and_flags_override() {
    let tmp = TempDir::new().unwrap();
    pipeline_fixture(&tmp.path().join("raw.jsonl"));
    fs::write(
        tmp.path().join("pipe.toml"),
        "seed = 7\nlayers = [\"rules\", \"near-dedup\", \"exact-dedup\", \"url-dedup\", \"frequent-lines\"]\n\
         input = \"missing.jsonl\"\n\n[rules]\nmin_chars = 50\n",
    )
    .unwrap();

    // Env var supplies the config; --input overrides its bad input path.
    let out = Command::new(env!("CARGO_BIN_EXE_corpusmix"))
        .args([
            "pipeline",
            "--input", "raw.jsonl",
            "--output", "clean.jsonl",
            "--audit", "audit.jsonl",
            "--manifest", "manifest.json",
        ])
        .current_dir(tmp.path())
        .env("CORPUSMIX_CONFIG", "pipe.toml")
        .output()
        .unwrap();
    assert_ok(&out);

    let kept = read_ids(&tmp.path().join("clean.jsonl"));
    assert_eq!(kept.len(), 40, "near-dedup drops the planted copy, rules the short doc");
    assert!(!kept.contains(&"dup-of-0".to_string()) || !kept.contains(&"doc000".to_string()));

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["layers"].as_array().unwrap().len(), 5);

    // Without config or flags there is no input: hard error.
    let bare = corpusmix(&["pipeline"], tmp.path());
    assert_eq!(bare.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bare.stderr).contains("no input shard"));
}

#[test]
fn pipeline_output_is_byte_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    pipeline_fixture(&tmp.path().join("raw.jsonl"));
    fs::write(
        tmp.path().join("pipe.toml"),
        "seed = 42\nlayers = [\"rules\", \"near-dedup\", \"url-dedup\", \"frequent-lines\"]\n\n[rules]\nmin_chars = 50\n",
    )
    .unwrap();

    for (jobs, out_name, audit_name) in [("1", "out1.jsonl", "a1.jsonl"), ("8", "out8.jsonl", "a8.jsonl")] {
        let out = corpusmix(
            &[
                "--jobs", jobs,
                "pipeline",
                "--config", "pipe.toml",
                "--input", "raw.jsonl",
                "--output", out_name,
                "--audit", audit_name,
            ],
            tmp.path(),
        );
        assert_ok(&out);
    }
    assert_eq!(
        fs::read(tmp.path().join("out1.jsonl")).unwrap(),
        fs::read(tmp.path().join("out8.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(tmp.path().join("a1.jsonl")).unwrap(),
        fs::read(tmp.path().join("a8.jsonl")).unwrap()
    );
}

#[test]
fn pipeline_quality_layer_requires_a_model() {
    let tmp = TempDir::new().unwrap();
    pipeline_fixture(&tmp.path().join("raw.jsonl"));
    fs::write(tmp.path().join("pipe.toml"), "layers = [\"rules\", \"quality-filter\"]\n").unwrap();
    let out = corpusmix(
        &["pipeline", "--config", "pipe.toml", "--input", "raw.jsonl", "--output", "o.jsonl"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no model"));
}

// ---------------------------------------------------------------- error handling

#[test]
fn malformed_lines_are_reported_and_exit_nonzero_but_output_is_written() {
    let tmp = TempDir::new().unwrap();
    let good = doc("ok", "vie", &prose(2, 60));
    fs::write(
        tmp.path().join("in.jsonl"),
        format!("{good}\nnot json at all\n"),
    )
    .unwrap();

    let out = corpusmix(
        &["clean", "--input", "in.jsonl", "--output", "out.jsonl"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(read_ids(&tmp.path().join("out.jsonl")), vec!["ok"]);

    let fail_fast = corpusmix(
        &["--fail-fast", "clean", "--input", "in.jsonl", "--output", "out2.jsonl"],
        tmp.path(),
    );
    assert_eq!(fail_fast.status.code(), Some(1));
    assert!(!tmp.path().join("out2.jsonl").exists());
}
