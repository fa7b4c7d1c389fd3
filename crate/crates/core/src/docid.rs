//! Keyword docids: generation, validation, and conflict resolution.
//!
//! The reference generator is extractive. It keeps the highest TF-IDF terms
//! of a document, most important first, under the docid output contract:
//! lowercase keyword terms, no articles, at most `L` terms. Docids produced
//! elsewhere (e.g. by a language model) can be loaded from JSONL instead.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::vocab::tokenize;

pub const DEFAULT_MAX_LEN: usize = 8;

const STOPWORDS_V1: &str = include_str!("../data/stopwords.txt");
const ARTICLES: [&str; 3] = ["a", "an", "the"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// Parses one word per line; `#` starts a comment line.
    pub fn from_text(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::from_text(STOPWORDS_V1)
    }
}

/// `[a-z0-9][a-z0-9.#-]*`
pub fn is_valid_term(term: &str) -> bool {
    let mut chars = term.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '.' | '#' | '-'))
        && !ARTICLES.contains(&term)
}

fn is_candidate(term: &str, stopwords: &Stopwords) -> bool {
    is_valid_term(term) && !stopwords.contains(term)
}

/// Document frequencies over a corpus, restricted to candidate terms.
#[derive(Debug, Clone)]
pub struct IdfTable {
    n: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_corpus(corpus: &Corpus, stopwords: &Stopwords) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus.iter() {
            let distinct: HashSet<String> = tokenize(&doc.text)
                .into_iter()
                .filter(|t| is_candidate(t, stopwords))
                .collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        IdfTable { n: corpus.len(), df }
    }

    pub fn uniform() -> Self {
        IdfTable {
            n: 1,
            df: HashMap::new(),
        }
    }

    /// `ln((n+1)/(df+1)) + 1`, or 1 for corpora of at most one document.
    pub fn idf(&self, term: &str) -> f64 {
        if self.n <= 1 {
            return 1.0;
        }
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((self.n as f64 + 1.0) / (df + 1.0)).ln() + 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTerm {
    pub term: String,
    pub score: f64,
    pub tf: usize,
    pub first_pos: usize,
}

/// Distinct candidate terms of `text` ranked by tf×idf descending, ties to
/// the earlier first occurrence.
pub fn rank_terms(text: &str, idf: &IdfTable, stopwords: &Stopwords) -> Vec<ScoredTerm> {
    let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
    for (pos, tok) in tokenize(text).into_iter().enumerate() {
        if !is_candidate(&tok, stopwords) {
            continue;
        }
        stats.entry(tok).or_insert((0, pos)).0 += 1;
    }
    let mut terms: Vec<ScoredTerm> = stats
        .into_iter()
        .map(|(term, (tf, first_pos))| ScoredTerm {
            score: tf as f64 * idf.idf(&term),
            term,
            tf,
            first_pos,
        })
        .collect();
    terms.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.first_pos.cmp(&b.first_pos)));
    terms
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Docid {
    pub doc_id: String,
    pub terms: Vec<String>,
}

impl Docid {
    /// Checks `1 <= |terms| <= max_len` and the term pattern.
    pub fn new(doc_id: impl Into<String>, terms: Vec<String>, max_len: usize) -> Result<Self> {
        let doc_id = doc_id.into();
        if terms.is_empty() || terms.len() > max_len {
            return Err(Error::Integrity(format!(
                "docid for {doc_id:?} has {} terms, expected 1..={max_len}",
                terms.len()
            )));
        }
        if let Some(bad) = terms.iter().find(|t| !is_valid_term(t)) {
            return Err(Error::Integrity(format!("docid for {doc_id:?} has invalid term {bad:?}")));
        }
        Ok(Docid { doc_id, terms })
    }

    pub fn text(&self) -> String {
        self.terms.join(" ")
    }
}

impl fmt::Display for Docid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// A proposed docid plus the remaining ranked candidate terms, used as
/// semantic suffixes when docids collide.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub terms: Vec<String>,
    pub spare: Vec<String>,
}

pub trait DocidSource: Sync {
    fn propose(&self, doc: &Document) -> Result<Proposal>;
}

#[derive(Debug, Clone)]
pub struct TfIdfDocidGenerator {
    idf: IdfTable,
    stopwords: Stopwords,
    max_len: usize,
}

impl TfIdfDocidGenerator {
    pub fn new(idf: IdfTable, stopwords: Stopwords, max_len: usize) -> Self {
        assert!(max_len >= 1, "docid length must be at least 1");
        TfIdfDocidGenerator { idf, stopwords, max_len }
    }

    pub fn for_corpus(corpus: &Corpus, max_len: usize) -> Self {
        let stopwords = Stopwords::default();
        Self::new(IdfTable::from_corpus(corpus, &stopwords), stopwords, max_len)
    }

    pub fn generate(&self, doc: &Document) -> Result<Docid> {
        let p = self.propose(doc)?;
        Docid::new(doc.doc_id.clone(), p.terms, self.max_len)
    }
}

impl DocidSource for TfIdfDocidGenerator {
    fn propose(&self, doc: &Document) -> Result<Proposal> {
        let ranked = rank_terms(&doc.text, &self.idf, &self.stopwords);
        if ranked.is_empty() {
            return Err(Error::Degenerate {
                doc_id: doc.doc_id.clone(),
                reason: "no candidate terms after stopword and punctuation filtering".into(),
            });
        }
        let mut terms: Vec<String> = ranked.into_iter().map(|t| t.term).collect();
        let spare = terms.split_off(terms.len().min(self.max_len));
        Ok(Proposal { terms, spare })
    }
}

/// Docids read from a file; they carry no spare candidates.
#[derive(Debug, Clone, Default)]
pub struct ExternalDocids {
    pub docids: HashMap<String, Docid>,
    /// Number of docids truncated to the length limit while loading.
    pub truncated: usize,
}

impl DocidSource for ExternalDocids {
    fn propose(&self, doc: &Document) -> Result<Proposal> {
        let d = self
            .docids
            .get(&doc.doc_id)
            .ok_or_else(|| Error::Integrity(format!("no external docid for {:?}", doc.doc_id)))?;
        Ok(Proposal {
            terms: d.terms.clone(),
            spare: Vec::new(),
        })
    }
}

#[derive(Deserialize)]
struct ExternalDocidRow {
    doc_id: String,
    docid: String,
}

/// Loads `{"doc_id", "docid": "term term ..."}` rows; every corpus document
/// must be covered. Over-long docids are truncated and counted.
pub fn load_external_docids(path: &Path, corpus: &Corpus, max_len: usize) -> Result<ExternalDocids> {
    let text = jsonl::read_to_string(path)?;
    parse_external_docids(&path.display().to_string(), &text, corpus, max_len)
}

pub fn parse_external_docids(source: &str, text: &str, corpus: &Corpus, max_len: usize) -> Result<ExternalDocids> {
    let mut out = ExternalDocids::default();
    for (line, row) in jsonl::parse_records::<ExternalDocidRow>(source, text)? {
        if corpus.get(&row.doc_id).is_none() {
            return Err(Error::Integrity(format!(
                "{source}:{line}: doc_id {:?} is not in the corpus",
                row.doc_id
            )));
        }
        let mut terms: Vec<String> = row.docid.split_whitespace().map(str::to_lowercase).collect();
        if terms.len() > max_len {
            terms.truncate(max_len);
            out.truncated += 1;
        }
        let docid = Docid::new(row.doc_id.clone(), terms, max_len)
            .map_err(|e| Error::parse(source, line, e.to_string()))?;
        if out.docids.insert(row.doc_id.clone(), docid).is_some() {
            return Err(Error::Integrity(format!("{source}:{line}: duplicate doc_id {:?}", row.doc_id)));
        }
    }
    let missing: Vec<&str> = corpus
        .iter()
        .filter(|d| !out.docids.contains_key(&d.doc_id))
        .map(|d| d.doc_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Integrity(format!(
            "{source}: no docid for {} document(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupPolicy {
    Error,
    #[default]
    SuffixTerm,
    SuffixOrdinal,
}

impl FromStr for DedupPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(DedupPolicy::Error),
            "suffix-term" => Ok(DedupPolicy::SuffixTerm),
            "suffix-ordinal" => Ok(DedupPolicy::SuffixOrdinal),
            other => Err(Error::Config(format!(
                "unknown dedup policy {other:?} (expected error, suffix-term or suffix-ordinal)"
            ))),
        }
    }
}

impl fmt::Display for DedupPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DedupPolicy::Error => "error",
            DedupPolicy::SuffixTerm => "suffix-term",
            DedupPolicy::SuffixOrdinal => "suffix-ordinal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedDocid {
    pub doc_id: String,
    #[serde(rename = "docid", with = "space_joined")]
    pub terms: Vec<String>,
    pub deduped: bool,
}

mod space_joined {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(terms: &[String], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&terms.join(" "))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
        let text = String::deserialize(d)?;
        Ok(text.split_whitespace().map(str::to_string).collect())
    }
}

/// Unique docids for every document, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct DocidAssignment {
    entries: Vec<AssignedDocid>,
    conflict_rate_before_dedup: f64,
}

impl DocidAssignment {
    /// Rebuilds an assignment from stored entries, re-checking uniqueness.
    pub fn from_entries(entries: Vec<AssignedDocid>, conflict_rate_before_dedup: f64) -> Result<Self> {
        let mut seen: HashMap<&[String], &str> = HashMap::new();
        for e in &entries {
            if e.terms.is_empty() {
                return Err(Error::Integrity(format!("empty docid for {:?}", e.doc_id)));
            }
            if let Some(prev) = seen.insert(&e.terms, &e.doc_id) {
                return Err(Error::Integrity(format!(
                    "documents {prev:?} and {:?} share docid {:?}",
                    e.doc_id,
                    e.terms.join(" ")
                )));
            }
        }
        if !(0.0..=1.0).contains(&conflict_rate_before_dedup) {
            return Err(Error::Integrity(format!(
                "conflict rate {conflict_rate_before_dedup} outside [0, 1]"
            )));
        }
        Ok(DocidAssignment {
            entries,
            conflict_rate_before_dedup,
        })
    }

    pub fn entries(&self) -> &[AssignedDocid] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn conflict_rate_before_dedup(&self) -> f64 {
        self.conflict_rate_before_dedup
    }

    pub fn get(&self, doc_id: &str) -> Option<&AssignedDocid> {
        self.entries.iter().find(|e| e.doc_id == doc_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_records(path, &self.entries)
    }

    pub fn load(path: &Path, conflict_rate_before_dedup: f64) -> Result<Self> {
        let rows = jsonl::read_records::<AssignedDocid>(path)?;
        Self::from_entries(rows.into_iter().map(|(_, r)| r).collect(), conflict_rate_before_dedup)
    }
}

/// Fraction of sequences equal to at least one other sequence in the list.
pub fn raw_conflict_rate<T: AsRef<[String]>>(sequences: &[T]) -> f64 {
    if sequences.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for s in sequences {
        *counts.entry(s.as_ref()).or_default() += 1;
    }
    let conflicting = sequences.iter().filter(|s| counts[s.as_ref()] > 1).count();
    conflicting as f64 / sequences.len() as f64
}

/// Proposes a docid for every document (in parallel), measures the raw
/// conflict rate, then resolves collisions per `policy`. The first document
/// of each colliding group (corpus order) keeps its docid.
pub fn assign_docids(corpus: &Corpus, source: &dyn DocidSource, policy: DedupPolicy) -> Result<DocidAssignment> {
    let proposals: Vec<Proposal> = corpus
        .documents()
        .par_iter()
        .map(|doc| source.propose(doc))
        .collect::<Result<_>>()?;

    let raw: Vec<&[String]> = proposals.iter().map(|p| p.terms.as_slice()).collect();
    let rate = raw_conflict_rate(&raw);

    let mut groups: HashMap<&[String], Vec<usize>> = HashMap::new();
    for (i, seq) in raw.iter().enumerate() {
        groups.entry(seq).or_default().push(i);
    }

    if policy == DedupPolicy::Error && rate > 0.0 {
        let mut conflicting: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() > 1).collect();
        conflicting.sort_by_key(|g| g[0]);
        let docs = corpus.documents();
        return Err(Error::Conflict {
            groups: conflicting
                .into_iter()
                .map(|g| g.iter().map(|&i| docs[i].doc_id.clone()).collect())
                .collect(),
        });
    }

    let mut used: HashSet<Vec<String>> = raw.iter().map(|s| s.to_vec()).collect();
    let mut entries = Vec::with_capacity(corpus.len());
    for (i, (doc, proposal)) in corpus.iter().zip(&proposals).enumerate() {
        let group = &groups[proposal.terms.as_slice()];
        let rank_in_group = group.iter().position(|&j| j == i).expect("doc is in its own group");
        if rank_in_group == 0 {
            entries.push(AssignedDocid {
                doc_id: doc.doc_id.clone(),
                terms: proposal.terms.clone(),
                deduped: false,
            });
            continue;
        }

        let extend = |suffix: &str| {
            let mut t = proposal.terms.clone();
            t.push(suffix.to_string());
            t
        };
        let mut resolved = None;
        if policy == DedupPolicy::SuffixTerm {
            resolved = proposal
                .spare
                .iter()
                .filter(|c| !proposal.terms.contains(c))
                .map(|c| extend(c))
                .find(|t| !used.contains(t));
        }
        let terms = match resolved {
            Some(t) => t,
            None => (rank_in_group + 1..)
                .map(|n| extend(&n.to_string()))
                .find(|t| !used.contains(t))
                .expect("ordinals are unbounded"),
        };
        used.insert(terms.clone());
        entries.push(AssignedDocid {
            doc_id: doc.doc_id.clone(),
            terms,
            deduped: true,
        });
    }

    DocidAssignment::from_entries(entries, rate)
}
