//! Instruction-conditioned pseudo-query sampling.
//!
//! The reference sampler is template based and fully determined by
//! `(seed, doc_id, j)`. Each draw picks a style first (keyword, question or
//! claim) and then fills it from the document's top TF-IDF terms. Instructions
//! mentioning code, errors, tables or conversations shift the mix toward
//! short keyword queries.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, TaskInstruction};
use crate::docid::{rank_terms, IdfTable, Stopwords};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng;
use crate::vocab::tokenize;

const TOP_TERMS: usize = 10;
const CLAIM_MAX_TOKENS: usize = 24;
const INSTRUCTION_MARKERS: [&str; 4] = ["code", "error", "table", "conversation"];

/// Question templates; `{0}` is the top term, `{1}` the runner-up.
pub const QUESTION_TEMPLATES: [&str; 4] = [
    "what is {0} in {1}",
    "how does {0} relate to {1}",
    "which {1} uses {0}",
    "explain {0} for {1}",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStyle {
    Keyword,
    Question,
    Claim,
}

impl fmt::Display for QueryStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryStyle::Keyword => "keyword",
            QueryStyle::Question => "question",
            QueryStyle::Claim => "claim",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoQuery {
    pub doc_id: String,
    pub instr_id: String,
    pub text: String,
    #[serde(rename = "j")]
    pub seed_index: usize,
    /// Absent for queries loaded from an external generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<QueryStyle>,
}

/// Style probabilities `(keyword, question, claim)` for an instruction.
pub fn style_mix(instr: &TaskInstruction) -> (f64, f64, f64) {
    let text = instr.text.to_lowercase();
    if INSTRUCTION_MARKERS.iter().any(|m| text.contains(m)) {
        (0.8, 0.12, 0.08)
    } else {
        (0.5, 0.3, 0.2)
    }
}

#[derive(Debug, Clone)]
pub struct QueryGenerator {
    idf: IdfTable,
    stopwords: Stopwords,
}

/// Sentences split after `.`, `!`, `?` followed by whitespace, and on newlines.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' => true,
            '.' | '!' | '?' => chars.peek().is_none_or(|(_, n)| n.is_whitespace()),
            _ => false,
        };
        if boundary {
            let end = i + c.len_utf8();
            out.push(&text[start..end]);
            start = end;
        }
    }
    out.push(&text[start..]);
    out.retain(|s| !s.trim().is_empty());
    out
}

impl QueryGenerator {
    pub fn new(idf: IdfTable, stopwords: Stopwords) -> Self {
        QueryGenerator { idf, stopwords }
    }

    pub fn for_corpus(corpus: &Corpus) -> Self {
        let stopwords = Stopwords::default();
        Self::new(IdfTable::from_corpus(corpus, &stopwords), stopwords)
    }

    /// Highest tf-idf mass sentence, ties to the earliest.
    fn best_sentence(&self, doc: &Document, weights: &HashMap<&str, f64>) -> Vec<String> {
        let mut best: Option<(f64, Vec<String>)> = None;
        for sentence in sentences(&doc.text) {
            let toks = tokenize(sentence);
            let mass: f64 = toks.iter().map(|t| weights.get(t.as_str()).copied().unwrap_or(0.0)).sum();
            if toks.is_empty() {
                continue;
            }
            if best.as_ref().is_none_or(|(m, _)| mass > *m) {
                best = Some((mass, toks));
            }
        }
        let mut toks = best.map(|(_, t)| t).unwrap_or_default();
        toks.truncate(CLAIM_MAX_TOKENS);
        toks
    }

    pub fn generate_queries(
        &self,
        doc: &Document,
        instr: &TaskInstruction,
        b: usize,
        seed: u64,
    ) -> Result<Vec<PseudoQuery>> {
        assert!(b >= 1, "query count must be at least 1");
        let ranked = rank_terms(&doc.text, &self.idf, &self.stopwords);
        if ranked.is_empty() {
            return Err(Error::Degenerate {
                doc_id: doc.doc_id.clone(),
                reason: "no content tokens to build queries from".into(),
            });
        }
        let weights: HashMap<&str, f64> = ranked.iter().map(|t| (t.term.as_str(), t.score)).collect();
        let top: Vec<&str> = ranked.iter().take(TOP_TERMS).map(|t| t.term.as_str()).collect();
        let claim = self.best_sentence(doc, &weights);
        let (p_keyword, p_question, _) = style_mix(instr);
        let doc_key = rng::fnv1a(&doc.doc_id);

        let mut out = Vec::with_capacity(b);
        for j in 0..b {
            let mut r = rng::stream(seed, &[doc_key, j as u64]);
            let u: f64 = r.gen();
            let style = if u < p_keyword {
                QueryStyle::Keyword
            } else if u < p_keyword + p_question {
                QueryStyle::Question
            } else {
                QueryStyle::Claim
            };
            let text = match style {
                QueryStyle::Keyword => {
                    let n = r.gen_range(2..=5usize).min(top.len());
                    top.choose_multiple(&mut r, n).copied().collect::<Vec<_>>().join(" ")
                }
                QueryStyle::Question => {
                    let template = QUESTION_TEMPLATES[r.gen_range(0..QUESTION_TEMPLATES.len())];
                    let first = top[0];
                    let second = top.get(1).copied().unwrap_or(first);
                    template.replace("{0}", first).replace("{1}", second)
                }
                QueryStyle::Claim => claim.join(" "),
            };
            out.push(PseudoQuery {
                doc_id: doc.doc_id.clone(),
                instr_id: instr.instr_id.clone(),
                text,
                seed_index: j,
                style: Some(style),
            });
        }
        Ok(out)
    }

    pub fn generate_batch(&self, corpus: &Corpus, instr: &TaskInstruction, b: usize, seed: u64) -> Result<QueryBatch> {
        let per_doc: Vec<(String, Vec<PseudoQuery>)> = corpus
            .documents()
            .par_iter()
            .map(|doc| Ok((doc.doc_id.clone(), self.generate_queries(doc, instr, b, seed)?)))
            .collect::<Result<_>>()?;
        Ok(QueryBatch { b, per_doc })
    }
}

/// Exactly `b` pseudo-queries for every indexed document, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    b: usize,
    per_doc: Vec<(String, Vec<PseudoQuery>)>,
}

impl QueryBatch {
    pub fn queries_per_doc(&self) -> usize {
        self.b
    }

    pub fn documents(&self) -> &[(String, Vec<PseudoQuery>)] {
        &self.per_doc
    }

    pub fn iter(&self) -> impl Iterator<Item = &PseudoQuery> {
        self.per_doc.iter().flat_map(|(_, qs)| qs.iter())
    }

    pub fn len(&self) -> usize {
        self.b * self.per_doc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_doc.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_records(path, self.iter())
    }
}

/// Loads `{"doc_id", "instr_id", "text", "j"}` rows. Every corpus document
/// needs exactly the indices `0..b`.
pub fn load_external_queries(path: &Path, corpus: &Corpus, b: usize) -> Result<QueryBatch> {
    let text = jsonl::read_to_string(path)?;
    parse_external_queries(&path.display().to_string(), &text, corpus, b)
}

pub fn parse_external_queries(source: &str, text: &str, corpus: &Corpus, b: usize) -> Result<QueryBatch> {
    let mut slots: HashMap<String, Vec<Option<PseudoQuery>>> = HashMap::new();
    for (line, q) in jsonl::parse_records::<PseudoQuery>(source, text)? {
        if corpus.get(&q.doc_id).is_none() {
            return Err(Error::Integrity(format!(
                "{source}:{line}: doc_id {:?} is not in the corpus",
                q.doc_id
            )));
        }
        if tokenize(&q.text).is_empty() {
            return Err(Error::parse(source, line, "query text has no tokens"));
        }
        if q.seed_index >= b {
            return Err(Error::Integrity(format!(
                "{source}:{line}: query index j={} is outside 0..{b}",
                q.seed_index
            )));
        }
        let doc_slots = slots.entry(q.doc_id.clone()).or_insert_with(|| vec![None; b]);
        let j = q.seed_index;
        if doc_slots[j].replace(q).is_some() {
            return Err(Error::Integrity(format!("{source}:{line}: duplicate query index j={j}")));
        }
    }
    let mut per_doc = Vec::with_capacity(corpus.len());
    let mut gaps = Vec::new();
    for doc in corpus.iter() {
        match slots.remove(&doc.doc_id) {
            Some(qs) if qs.iter().all(Option::is_some) => {
                per_doc.push((doc.doc_id.clone(), qs.into_iter().flatten().collect()))
            }
            Some(qs) => gaps.push(format!(
                "{} (missing j={})",
                doc.doc_id,
                qs.iter()
                    .enumerate()
                    .filter(|(_, q)| q.is_none())
                    .map(|(j, _)| j.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            )),
            None => gaps.push(format!("{} (no queries)", doc.doc_id)),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Integrity(format!(
            "{source}: expected {b} queries per document; gaps: {}",
            gaps.join("; ")
        )));
    }
    Ok(QueryBatch { b, per_doc })
}

/// Mean token count over all queries.
pub fn avg_query_length<'a>(queries: impl IntoIterator<Item = &'a PseudoQuery>) -> Option<f64> {
    let (n, total) = queries
        .into_iter()
        .fold((0usize, 0usize), |(n, total), q| (n + 1, total + tokenize(&q.text).len()));
    (n > 0).then(|| total as f64 / n as f64)
}
