//! Ranking metrics (Acc@1, nDCG@10, Recall@100), indexing diagnostics and
//! decoder comparison tables.
//!
//! Queries in a run that have no judgments at all are skipped and counted.
//! nDCG and recall average over queries with at least one positive judgment;
//! Acc@1 averages over every judged query.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{validate_run, Qrels, RunEntry};
use crate::decoder::DecoderSettings;
use crate::docid::DocidAssignment;
use crate::error::Result;
use crate::scorer::{QueryContext, Scorer};
use crate::trie::DocidTrie;

pub const NDCG_CUTOFF: usize = 10;
pub const RECALL_CUTOFF: usize = 100;

/// Ranked doc ids per query, in first-appearance order of the run.
pub type Rankings = Vec<(String, Vec<String>)>;

pub fn rankings_from_run(entries: &[RunEntry]) -> Result<Rankings> {
    Ok(validate_run(entries)?
        .into_iter()
        .map(|(qid, group)| (qid.to_string(), group.into_iter().map(|e| e.doc_id.clone()).collect()))
        .collect())
}

pub fn hit_at_1<S: AsRef<str>>(ranked: &[S], judged: &HashMap<String, u32>) -> f64 {
    match ranked.first() {
        Some(d) if judged.get(d.as_ref()).copied().unwrap_or(0) >= 1 => 1.0,
        _ => 0.0,
    }
}

/// Exponential-gain nDCG at `k`: gains `2^rel - 1`, discount `log2(i + 1)`.
pub fn ndcg_at<S: AsRef<str>>(ranked: &[S], judged: &HashMap<String, u32>, k: usize) -> f64 {
    let gain = |rel: u32| 2f64.powi(rel as i32) - 1.0;
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(judged.get(d.as_ref()).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&r| r > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn recall_at<S: AsRef<str>>(ranked: &[S], judged: &HashMap<String, u32>, k: usize) -> f64 {
    let relevant = judged.values().filter(|&&r| r > 0).count();
    if relevant == 0 {
        return 0.0;
    }
    let mut seen = std::collections::HashSet::new();
    let found = ranked
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .filter(|&d| seen.insert(d) && judged.get(d).copied().unwrap_or(0) > 0)
        .count();
    found as f64 / relevant as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub acc_at_1: Option<f64>,
    pub ndcg_at_10: Option<f64>,
    pub recall_at_100: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_query: Vec<QueryMetrics>,
    pub acc_at_1: f64,
    pub ndcg_at_10: f64,
    pub recall_at_100: f64,
    /// Judged queries evaluated.
    pub query_count: usize,
    /// Queries with at least one positive judgment.
    pub positive_query_count: usize,
    /// Run queries absent from the qrels.
    pub skipped: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn evaluate(rankings: &Rankings, qrels: &Qrels) -> MetricReport {
    let mut per_query = Vec::new();
    let mut skipped = 0;
    for (qid, ranked) in rankings {
        let Some(judged) = qrels.judgments(qid) else {
            skipped += 1;
            continue;
        };
        let positive = judged.values().any(|&r| r > 0);
        per_query.push(QueryMetrics {
            query_id: qid.clone(),
            acc_at_1: Some(hit_at_1(ranked, judged)),
            ndcg_at_10: positive.then(|| ndcg_at(ranked, judged, NDCG_CUTOFF)),
            recall_at_100: positive.then(|| recall_at(ranked, judged, RECALL_CUTOFF)),
        });
    }
    MetricReport {
        acc_at_1: mean(per_query.iter().filter_map(|q| q.acc_at_1)),
        ndcg_at_10: mean(per_query.iter().filter_map(|q| q.ndcg_at_10)),
        recall_at_100: mean(per_query.iter().filter_map(|q| q.recall_at_100)),
        query_count: per_query.len(),
        positive_query_count: per_query.iter().filter(|q| q.ndcg_at_10.is_some()).count(),
        skipped,
        per_query,
    }
}

pub fn acc_at_1(rankings: &Rankings, qrels: &Qrels) -> f64 {
    evaluate(rankings, qrels).acc_at_1
}

pub fn ndcg_at_10(rankings: &Rankings, qrels: &Qrels) -> f64 {
    evaluate(rankings, qrels).ndcg_at_10
}

pub fn recall_at_100(rankings: &Rankings, qrels: &Qrels) -> f64 {
    evaluate(rankings, qrels).recall_at_100
}

pub fn conflict_rate(assignment: &DocidAssignment) -> f64 {
    assignment.conflict_rate_before_dedup()
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    query_id: &'a str,
    acc_at_1: f64,
    ndcg_at_10: f64,
    recall_at_100: f64,
    queries: usize,
    skipped: usize,
}

impl MetricReport {
    /// Per-query rows, then an aggregate row with `query_id = "all"`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.per_query {
            out.push_str(&serde_json::to_string(q).expect("serializable"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.aggregate()).expect("serializable"));
        out.push('\n');
        out
    }

    fn aggregate(&self) -> AggregateRow<'_> {
        AggregateRow {
            query_id: "all",
            acc_at_1: self.acc_at_1,
            ndcg_at_10: self.ndcg_at_10,
            recall_at_100: self.recall_at_100,
            queries: self.query_count,
            skipped: self.skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub settings: DecoderSettings,
    pub report: MetricReport,
}

/// Decodes every query with every decoder configuration (same scorer, trie
/// and seed) and evaluates the resulting rankings.
pub fn compare_decoders<S: Scorer + ?Sized>(
    scorer: &S,
    trie: &DocidTrie,
    queries: &[QueryContext],
    qrels: &Qrels,
    configs: &[(String, DecoderSettings)],
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    configs
        .iter()
        .map(|(name, settings)| {
            let rankings: Rankings = queries
                .par_iter()
                .map(|q| {
                    let r = settings.decode(scorer, q, trie, seed)?;
                    Ok((q.query_id.clone(), r.hits.into_iter().map(|h| h.doc_id).collect()))
                })
                .collect::<Result<_>>()?;
            Ok(ComparisonRow {
                name: name.clone(),
                settings: settings.clone(),
                report: evaluate(&rankings, qrels),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ComparisonJson<'a> {
    name: &'a str,
    decoder: &'a str,
    acc_at_1: f64,
    ndcg_at_10: f64,
    recall_at_100: f64,
    queries: usize,
    settings: &'a DecoderSettings,
}

pub fn comparison_jsonl(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let row = ComparisonJson {
            name: &r.name,
            decoder: r.settings.strategy.as_str(),
            acc_at_1: r.report.acc_at_1,
            ndcg_at_10: r.report.ndcg_at_10,
            recall_at_100: r.report.recall_at_100,
            queries: r.report.query_count,
            settings: &r.settings,
        };
        out.push_str(&serde_json::to_string(&row).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let headers = ["name", "decoder", "acc@1", "ndcg@10", "recall@100"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.settings.strategy.to_string(),
                format!("{:.4}", r.report.acc_at_1),
                format!("{:.4}", r.report.ndcg_at_10),
                format!("{:.4}", r.report.recall_at_100),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: [&str; 5]| {
        let parts: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).expect("write to String");
    };
    line(&mut out, headers);
    line(&mut out, widths.map(|w| "-".repeat(w)).each_ref().map(String::as_str));
    for row in &cells {
        line(&mut out, row.each_ref().map(String::as_str));
    }
    out
}
