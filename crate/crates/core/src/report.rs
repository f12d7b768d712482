//! Human-readable tables and machine-readable CSV for corpus statistics,
//! token-budget plans, dataset distributions, and pipeline manifests.
//!
//! Tables are plain aligned text. CSV output is lossless: exact integer
//! counts, full float precision, no display rounding.

use crate::corpus::{language_name, CorpusStats};
use crate::mixture::{validate_plan, BudgetPlan, PlanValidation, DEFAULT_PLAN_TOLERANCE};
use crate::pipeline::RunManifest;
use crate::posttrain::DistributionReport;

#[derive(Clone, Copy)]
enum Align {
    Left,
    Right,
}

fn render_table(headers: &[&str], aligns: &[Align], rows: &[Vec<String>]) -> String {
    assert_eq!(headers.len(), aligns.len());
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        assert_eq!(row.len(), headers.len());
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = widths[i] - cell.chars().count();
            match aligns[i] {
                Align::Left => {
                    line.push_str(cell);
                    if i + 1 < cells.len() {
                        line.extend(std::iter::repeat(' ').take(pad));
                    }
                }
                Align::Right => {
                    line.extend(std::iter::repeat(' ').take(pad));
                    line.push_str(cell);
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    emit(&mut out, &headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    emit(&mut out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in rows {
        emit(&mut out, row);
    }
    out
}

/// Billions with up to two decimals, trailing zeros trimmed: 450 -> "450",
/// 23.50 -> "23.5", 58.26 -> "58.26".
pub fn fmt_billions(value: f64) -> String {
    let s = format!("{value:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn tokens_to_billions(tokens: u64) -> f64 {
    tokens as f64 / 1e9
}

fn csv_string(records: Vec<Vec<String>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.write_record(&record).expect("writing to memory");
    }
    let bytes = writer.into_inner().expect("writing to memory");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Per-language corpus statistics, largest token count first. The token
/// column appears twice: exact, and rounded to billions for scanning.
pub fn stats_table(stats: &CorpusStats) -> String {
    let mut entries: Vec<(&String, &crate::corpus::LanguageStats)> =
        stats.per_language.iter().collect();
    entries.sort_by(|(ca, sa), (cb, sb)| {
        sb.tokens.cmp(&sa.tokens).then_with(|| ca.cmp(cb))
    });
    let mut rows: Vec<Vec<String>> = entries
        .iter()
        .map(|(code, s)| {
            vec![
                language_name(code).to_string(),
                (*code).clone(),
                s.documents.to_string(),
                s.tokens.to_string(),
                fmt_billions(tokens_to_billions(s.tokens)),
            ]
        })
        .collect();
    rows.push(vec![
        "Total".to_string(),
        String::new(),
        stats.total_documents().to_string(),
        stats.total_tokens().to_string(),
        fmt_billions(tokens_to_billions(stats.total_tokens())),
    ]);
    render_table(
        &["Language", "ISO Code", "Documents", "Tokens", "Tokens (B)"],
        &[Align::Left, Align::Left, Align::Right, Align::Right, Align::Right],
        &rows,
    )
}

pub fn stats_csv(stats: &CorpusStats) -> String {
    let mut records = vec![vec![
        "language".to_string(),
        "iso_code".to_string(),
        "documents".to_string(),
        "tokens".to_string(),
    ]];
    let mut entries: Vec<(&String, &crate::corpus::LanguageStats)> =
        stats.per_language.iter().collect();
    entries.sort_by(|(ca, sa), (cb, sb)| {
        sb.tokens.cmp(&sa.tokens).then_with(|| ca.cmp(cb))
    });
    for (code, s) in entries {
        records.push(vec![
            language_name(code).to_string(),
            code.clone(),
            s.documents.to_string(),
            s.tokens.to_string(),
        ]);
    }
    csv_string(records)
}

/// Budget plan as a table whose last line is the declared stage total, e.g.
/// "Stage 1 (Total) 450B". When the rows do not sum to the declared total
/// within tolerance, a footnote spells out the discrepancy.
pub fn plan_table(plan: &BudgetPlan) -> String {
    plan_table_with_tolerance(plan, DEFAULT_PLAN_TOLERANCE)
}

pub fn plan_table_with_tolerance(plan: &BudgetPlan, tolerance_billions: f64) -> String {
    let rows: Vec<Vec<String>> = plan
        .rows
        .iter()
        .map(|r| vec![r.label.clone(), fmt_billions(r.billions)])
        .collect();
    let mut out = render_table(
        &["Allocation", "Tokens (B)"],
        &[Align::Left, Align::Right],
        &rows,
    );
    out.push_str(&format!(
        "Stage {} (Total) {}B",
        plan.stage,
        fmt_billions(plan.declared_total)
    ));
    let validation: PlanValidation = validate_plan(plan, tolerance_billions);
    if !validation.ok {
        out.push_str(&format!(
            "\nnote: rows sum to {}B but the declared total is {}B (delta {}B)",
            fmt_billions(validation.computed_total),
            fmt_billions(validation.declared_total),
            fmt_billions(validation.delta.abs()),
        ));
    }
    out.push('\n');
    out
}

pub fn plan_csv(plan: &BudgetPlan) -> String {
    let mut records = vec![vec![
        "stage".to_string(),
        "allocation".to_string(),
        "tokens_billions".to_string(),
    ]];
    for row in &plan.rows {
        records.push(vec![
            plan.stage.to_string(),
            row.label.clone(),
            row.billions.to_string(),
        ]);
    }
    records.push(vec![
        plan.stage.to_string(),
        "declared_total".to_string(),
        plan.declared_total.to_string(),
    ]);
    csv_string(records)
}

/// Language-by-split counts with a totals row and a per-language total
/// column.
pub fn distribution_table(report: &DistributionReport) -> String {
    let mut headers: Vec<&str> = vec!["Language"];
    headers.extend(report.splits.iter().map(|s| s.as_str()));
    headers.push("Total");
    let mut aligns = vec![Align::Left];
    aligns.extend(std::iter::repeat(Align::Right).take(report.splits.len() + 1));

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (language, counts) in &report.rows {
        let mut row = vec![language.clone()];
        row.extend(counts.iter().map(|c| c.to_string()));
        row.push(counts.iter().sum::<u64>().to_string());
        rows.push(row);
    }
    let mut totals = vec!["Total".to_string()];
    totals.extend(report.column_totals().iter().map(|c| c.to_string()));
    totals.push(report.grand_total().to_string());
    rows.push(totals);
    render_table(&headers, &aligns, &rows)
}

pub fn distribution_csv(report: &DistributionReport) -> String {
    let mut header = vec!["language".to_string()];
    header.extend(report.splits.iter().cloned());
    header.push("total".to_string());
    let mut records = vec![header];
    for (language, counts) in &report.rows {
        let mut row = vec![language.clone()];
        row.extend(counts.iter().map(|c| c.to_string()));
        row.push(counts.iter().sum::<u64>().to_string());
        records.push(row);
    }
    csv_string(records)
}

/// Per-layer pipeline accounting: documents and tokens in and out, drops by
/// reason, wall clock.
pub fn manifest_table(manifest: &RunManifest) -> String {
    let rows: Vec<Vec<String>> = manifest
        .layers
        .iter()
        .map(|l| {
            let drops = l
                .drops_by_reason
                .iter()
                .map(|(reason, n)| format!("{reason}={n}"))
                .collect::<Vec<_>>()
                .join(", ");
            vec![
                l.layer.clone(),
                l.input_docs.to_string(),
                l.output_docs.to_string(),
                l.input_tokens.to_string(),
                l.output_tokens.to_string(),
                drops,
                format!("{}ms", l.wall_clock_ms),
            ]
        })
        .collect();
    let mut out = format!(
        "config digest: {}\nseed: {}\n",
        manifest.config_digest, manifest.seed
    );
    out.push_str(&render_table(
        &["Layer", "Docs In", "Docs Out", "Tokens In", "Tokens Out", "Drops", "Wall Clock"],
        &[
            Align::Left,
            Align::Right,
            Align::Right,
            Align::Right,
            Align::Right,
            Align::Left,
            Align::Right,
        ],
        &rows,
    ));
    out
}

pub fn manifest_csv(manifest: &RunManifest) -> String {
    let mut records = vec![vec![
        "layer".to_string(),
        "docs_in".to_string(),
        "docs_out".to_string(),
        "tokens_in".to_string(),
        "tokens_out".to_string(),
        "reason".to_string(),
        "dropped".to_string(),
        "wall_clock_ms".to_string(),
    ]];
    for l in &manifest.layers {
        if l.drops_by_reason.is_empty() {
            records.push(vec![
                l.layer.clone(),
                l.input_docs.to_string(),
                l.output_docs.to_string(),
                l.input_tokens.to_string(),
                l.output_tokens.to_string(),
                String::new(),
                "0".to_string(),
                l.wall_clock_ms.to_string(),
            ]);
            continue;
        }
        for (reason, dropped) in &l.drops_by_reason {
            records.push(vec![
                l.layer.clone(),
                l.input_docs.to_string(),
                l.output_docs.to_string(),
                l.input_tokens.to_string(),
                l.output_tokens.to_string(),
                reason.clone(),
                dropped.to_string(),
                l.wall_clock_ms.to_string(),
            ]);
        }
    }
    csv_string(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LanguageStats;

    fn small_stats() -> CorpusStats {
        let mut stats = CorpusStats::default();
        stats
            .per_language
            .insert("vie".to_string(), LanguageStats { documents: 10, tokens: 200 });
        stats
            .per_language
            .insert("tha".to_string(), LanguageStats { documents: 4, tokens: 50 });
        stats
    }

    #[test]
    fn billions_formatting_trims_zeros() {
        assert_eq!(fmt_billions(450.0), "450");
        assert_eq!(fmt_billions(23.5), "23.5");
        assert_eq!(fmt_billions(58.26), "58.26");
        assert_eq!(fmt_billions(0.02), "0.02");
        assert_eq!(fmt_billions(0.0), "0");
    }

    #[test]
    fn stats_table_sorts_by_tokens_and_totals() {
        let table = stats_table(&small_stats());
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("Language"));
        assert!(lines[2].starts_with("Vietnamese"));
        assert!(lines[3].starts_with("Thai"));
        assert!(lines[4].starts_with("Total"));
        assert!(lines[4].contains("250"));
        assert!(lines[4].contains("14"));
    }

    #[test]
    fn stats_csv_is_exact() {
        let csv = stats_csv(&small_stats());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "language,iso_code,documents,tokens");
        assert_eq!(lines[1], "Vietnamese,vie,10,200");
        assert_eq!(lines[2], "Thai,tha,4,50");
    }

    #[test]
    fn empty_stats_gives_header_only_csv() {
        let csv = stats_csv(&CorpusStats::default());
        assert_eq!(csv, "language,iso_code,documents,tokens\n");
    }

    #[test]
    fn plan_table_ends_with_declared_total() {
        let plan = BudgetPlan::new(
            1,
            vec![("vie".to_string(), 102.0), ("ind".to_string(), 94.0)],
            196.0,
        )
        .unwrap();
        let table = plan_table(&plan);
        assert!(table.trim_end().ends_with("Stage 1 (Total) 196B"), "{table}");
        assert!(!table.contains("note:"));
    }

    #[test]
    fn plan_table_footnotes_a_mismatch() {
        let plan = BudgetPlan::new(
            2,
            vec![("replay".to_string(), 10.0), ("vie".to_string(), 10.9)],
            60.0,
        )
        .unwrap();
        let table = plan_table(&plan);
        assert!(table.contains("Stage 2 (Total) 60B"));
        assert!(table.contains("note: rows sum to 20.9B but the declared total is 60B"));
        assert!(table.contains("delta 39.1B"));
    }

    #[test]
    fn plan_csv_keeps_full_precision() {
        let plan = BudgetPlan::new(1, vec![("war".to_string(), 0.02)], 0.02).unwrap();
        let csv = plan_csv(&plan);
        assert!(csv.contains("1,war,0.02"));
        assert!(csv.contains("1,declared_total,0.02"));
    }

    #[test]
    fn distribution_table_has_totals_row_and_column() {
        let mut report = DistributionReport::new(["sft", "preference"]);
        report.add_count("Vietnamese", "sft", 300);
        report.add_count("Vietnamese", "preference", 48);
        report.add_count("Thai", "sft", 200);
        let table = distribution_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].contains("sft"));
        assert!(lines[0].ends_with("Total"));
        let total_line = lines.last().unwrap();
        assert!(total_line.starts_with("Total"));
        assert!(total_line.contains("500"));
        assert!(total_line.contains("548"));
    }

    #[test]
    fn distribution_csv_round_trips_counts() {
        let mut report = DistributionReport::new(["sft"]);
        report.add_count("Thai", "sft", 7);
        let csv = distribution_csv(&report);
        assert_eq!(csv, "language,sft,total\nThai,7,7\n");
    }

    #[test]
    fn manifest_table_lists_layers_in_order() {
        use crate::pipeline::{LayerStats, RunManifest};
        use std::collections::BTreeMap;
        let manifest = RunManifest {
            config_digest: "abc123".to_string(),
            seed: 42,
            layers: vec![LayerStats {
                layer: "rules".to_string(),
                input_docs: 50,
                output_docs: 43,
                input_tokens: 1000,
                output_tokens: 900,
                drops_by_reason: BTreeMap::from([
                    ("too_short".to_string(), 5),
                    ("symbol_ratio".to_string(), 2),
                ]),
                wall_clock_ms: 3,
            }],
        };
        let table = manifest_table(&manifest);
        assert!(table.contains("config digest: abc123"));
        assert!(table.contains("rules"));
        assert!(table.contains("too_short=5"));
        let csv = manifest_csv(&manifest);
        assert!(csv.contains("rules,50,43,1000,900,symbol_ratio,2,3"));
        assert!(csv.contains("rules,50,43,1000,900,too_short,5,3"));
    }
}
