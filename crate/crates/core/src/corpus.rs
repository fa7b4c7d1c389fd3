//! Corpora, task instructions, relevance judgments and ranked runs.
//!
//! Corpora and instructions are JSON-Lines; qrels and runs use the plain-text
//! TREC layouts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: None,
        }
    }
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (idx, doc) in docs.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(Error::Integrity(format!("document #{} has an empty doc_id", idx + 1)));
            }
            if doc.text.trim().is_empty() {
                return Err(Error::Integrity(format!("document {:?} has empty text", doc.doc_id)));
            }
            if by_id.insert(doc.doc_id.clone(), idx).is_some() {
                return Err(Error::Integrity(format!("duplicate doc_id {:?}", doc.doc_id)));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let source = path.display().to_string();
    let text = jsonl::read_to_string(path)?;
    parse_corpus(&source, &text)
}

pub fn parse_corpus(source: &str, text: &str) -> Result<Corpus> {
    let records: Vec<(usize, Document)> = jsonl::parse_records(source, text)?;
    let mut seen = HashMap::new();
    for (line, doc) in &records {
        if let Some(first) = seen.insert(doc.doc_id.as_str(), *line) {
            return Err(Error::Integrity(format!(
                "{source}:{line}: duplicate doc_id {:?} (first seen on line {first})",
                doc.doc_id
            )));
        }
    }
    Corpus::from_documents(records.into_iter().map(|(_, d)| d).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub instr_id: String,
    pub text: String,
}

/// Loads a JSONL file of `{"instr_id", "text"}` rows.
pub fn load_instructions(path: &Path) -> Result<Vec<TaskInstruction>> {
    let source = path.display().to_string();
    let mut out: Vec<TaskInstruction> = Vec::new();
    for (line, instr) in jsonl::read_records::<TaskInstruction>(path)? {
        if instr.text.trim().is_empty() {
            return Err(Error::parse(&source, line, "instruction text is empty"));
        }
        if out.iter().any(|i| i.instr_id == instr.instr_id) {
            return Err(Error::Integrity(format!(
                "{source}:{line}: duplicate instr_id {:?}",
                instr.instr_id
            )));
        }
        out.push(instr);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelEntry {
    pub query_id: String,
    pub doc_id: String,
    pub relevance: u32,
}

/// TREC relevance judgments, kept in file order with a per-query index.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    entries: Vec<QrelEntry>,
    by_query: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn from_entries(entries: Vec<QrelEntry>) -> Result<Self> {
        let mut by_query: HashMap<String, HashMap<String, u32>> = HashMap::new();
        for e in &entries {
            let judged = by_query.entry(e.query_id.clone()).or_default();
            if judged.insert(e.doc_id.clone(), e.relevance).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate judgment for ({}, {})",
                    e.query_id, e.doc_id
                )));
            }
        }
        Ok(Qrels { entries, by_query })
    }

    pub fn entries(&self) -> &[QrelEntry] {
        &self.entries
    }

    pub fn judgments(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.by_query.get(query_id)
    }

    pub fn relevance(&self, query_id: &str, doc_id: &str) -> u32 {
        self.by_query
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_count(&self) -> usize {
        self.by_query.len()
    }
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let text = jsonl::read_to_string(path)?;
    parse_qrels(&path.display().to_string(), &text)
}

pub fn parse_qrels(source: &str, text: &str) -> Result<Qrels> {
    let mut entries = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [query_id, _iter, doc_id, rel] = fields[..] else {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 4 fields `query_id 0 doc_id relevance`, found {}", fields.len()),
            ));
        };
        let relevance: u32 = rel
            .parse()
            .map_err(|_| Error::parse(source, lineno, format!("relevance {rel:?} is not a non-negative integer")))?;
        let key = (query_id.to_string(), doc_id.to_string());
        if let Some(first) = seen.insert(key, lineno) {
            return Err(Error::Integrity(format!(
                "{source}:{lineno}: duplicate judgment ({query_id}, {doc_id}), first on line {first}"
            )));
        }
        entries.push(QrelEntry {
            query_id: query_id.to_string(),
            doc_id: doc_id.to_string(),
            relevance,
        });
    }
    Qrels::from_entries(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Rounds to the 6 decimal places used in run files.
pub fn run_score(score: f64) -> f64 {
    format!("{score:.6}").parse().expect("formatted float parses")
}

/// Groups entries by query (first-appearance order), sorts each group by
/// rank, and checks ranks are `1..=R` with strictly decreasing serialized
/// scores.
pub fn validate_run(entries: &[RunEntry]) -> Result<Vec<(&str, Vec<&RunEntry>)>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&RunEntry>> = HashMap::new();
    for e in entries {
        if e.query_id.is_empty() || e.doc_id.is_empty() || e.tag.is_empty() {
            return Err(Error::Integrity(format!("run entry with an empty field: {e:?}")));
        }
        if !e.score.is_finite() {
            return Err(Error::Integrity(format!(
                "non-finite score for ({}, {})",
                e.query_id, e.doc_id
            )));
        }
        let group = groups.entry(e.query_id.as_str()).or_insert_with(|| {
            order.push(e.query_id.as_str());
            Vec::new()
        });
        group.push(e);
    }
    let mut out = Vec::with_capacity(order.len());
    for qid in order {
        let mut group = groups.remove(qid).expect("grouped above");
        group.sort_by_key(|e| e.rank);
        for (pos, e) in group.iter().enumerate() {
            if e.rank != pos + 1 {
                return Err(Error::Integrity(format!(
                    "query {qid}: expected rank {} but found {} (ranks must be 1..R without gaps)",
                    pos + 1,
                    e.rank
                )));
            }
        }
        for pair in group.windows(2) {
            if run_score(pair[1].score) >= run_score(pair[0].score) {
                return Err(Error::Integrity(format!(
                    "query {qid}: score at rank {} ({:.6}) is not strictly below rank {} ({:.6})",
                    pair[1].rank, pair[1].score, pair[0].rank, pair[0].score
                )));
            }
        }
        out.push((qid, group));
    }
    Ok(out)
}

pub fn format_run(entries: &[RunEntry]) -> Result<String> {
    let groups = validate_run(entries)?;
    let mut out = String::new();
    for (_, group) in groups {
        for e in group {
            writeln!(out, "{} Q0 {} {} {:.6} {}", e.query_id, e.doc_id, e.rank, e.score, e.tag)
                .expect("write to String");
        }
    }
    Ok(out)
}

/// Writes a TREC run file. Validation happens before the file is touched.
pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<()> {
    let text = format_run(entries)?;
    jsonl::write_bytes(path, text.as_bytes())
}

pub fn load_run(path: &Path) -> Result<Vec<RunEntry>> {
    let text = jsonl::read_to_string(path)?;
    parse_run(&path.display().to_string(), &text)
}

pub fn parse_run(source: &str, text: &str) -> Result<Vec<RunEntry>> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [query_id, _q0, doc_id, rank, score, tag] = fields[..] else {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 6 fields `query_id Q0 doc_id rank score tag`, found {}", fields.len()),
            ));
        };
        let rank: usize = rank
            .parse()
            .ok()
            .filter(|r| *r >= 1)
            .ok_or_else(|| Error::parse(source, lineno, format!("rank {rank:?} is not a positive integer")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| Error::parse(source, lineno, format!("score {score:?} is not a number")))?;
        entries.push(RunEntry {
            query_id: query_id.to_string(),
            doc_id: doc_id.to_string(),
            rank,
            score,
            tag: tag.to_string(),
        });
    }
    validate_run(&entries)?;
    Ok(entries)
}
