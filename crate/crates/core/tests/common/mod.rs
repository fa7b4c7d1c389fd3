//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use genret::corpus::{Corpus, Document, QrelEntry, Qrels, TaskInstruction};
use genret::pipeline::{build_index_from, BuiltIndex, PipelineConfig, DEFAULT_INSTRUCTION};
use genret::querygen::QueryGenerator;
use genret::scorer::{QueryContext, Scorer, ScorerContext};
use genret::vocab::TokenId;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn default_instruction() -> TaskInstruction {
    TaskInstruction {
        instr_id: "default".into(),
        text: DEFAULT_INSTRUCTION.into(),
    }
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "x", "m"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}{}",
                ONSETS.choose(rng).unwrap(),
                VOWELS.choose(rng).unwrap(),
                CODAS.choose(rng).unwrap()
            )
        })
        .collect()
}

/// Words shared by every topic, so documents are not trivially separable.
const FILLER: [&str; 12] = [
    "system", "method", "report", "result", "process", "value", "model", "data", "study", "design", "review", "notes",
];

/// `n` documents, each with its own disjoint vocabulary of `topic_words`
/// invented words, written as three sentences mixing topic and filler words.
pub fn synthetic_corpus(n: usize, topic_words: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = FILLER.iter().map(|s| s.to_string()).collect();
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        let mut topic = Vec::with_capacity(topic_words);
        while topic.len() < topic_words {
            let w = pseudo_word(&mut rng);
            if used.insert(w.clone()) {
                topic.push(w);
            }
        }
        let mut sentences = Vec::new();
        for _ in 0..3 {
            let mut words: Vec<&str> = topic.choose_multiple(&mut rng, 5).map(String::as_str).collect();
            words.extend(FILLER.choose_multiple(&mut rng, 2).copied());
            words.shuffle(&mut rng);
            sentences.push(format!("The {} of {}.", words[..3].join(" "), words[3..].join(" ")));
        }
        docs.push(Document::new(format!("doc{i:03}"), sentences.join(" ")));
    }
    Corpus::from_documents(docs).unwrap()
}

/// Builds an in-memory index with default settings, `b` queries per doc.
pub fn build(corpus: &Corpus, b: usize, seed: u64) -> BuiltIndex {
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    cfg.querygen.per_doc = b;
    build_index_from(&cfg, corpus, &default_instruction(), "synthetic".into()).unwrap()
}

/// The end-to-end evaluation setup: index, held-out queries and qrels.
pub struct EndToEnd {
    pub built: BuiltIndex,
    pub queries: Vec<QueryContext>,
    pub qrels: Qrels,
}

pub const E2E_CORPUS_SEED: u64 = 2024;
pub const E2E_INDEX_SEED: u64 = 11;
pub const E2E_EVAL_QUERY_SEED: u64 = 90_001;
pub const E2E_DECODE_SEED: u64 = 5;

/// 100 disjoint-topic documents, 8 pseudo-queries each; evaluation queries
/// come from the same templates under a different seed, minus any text that
/// already appears among that document's training queries.
pub fn end_to_end() -> EndToEnd {
    let corpus = synthetic_corpus(100, 12, E2E_CORPUS_SEED);
    let built = build(&corpus, 8, E2E_INDEX_SEED);
    let instr = default_instruction();
    let seen: HashMap<&str, HashSet<&str>> = built
        .queries
        .documents()
        .iter()
        .map(|(d, qs)| (d.as_str(), qs.iter().map(|q| q.text.as_str()).collect()))
        .collect();
    let generator = QueryGenerator::for_corpus(&corpus);
    let mut queries = Vec::new();
    let mut qrels = Vec::new();
    for doc in corpus.iter() {
        let fresh = generator
            .generate_queries(doc, &instr, 4, E2E_EVAL_QUERY_SEED)
            .unwrap()
            .into_iter()
            .find(|q| !seen[doc.doc_id.as_str()].contains(q.text.as_str()));
        let Some(q) = fresh else { continue };
        let qid = format!("eval-{}", doc.doc_id);
        queries.push(built.index.query_context(&qid, &q.text, None));
        qrels.push(QrelEntry {
            query_id: qid,
            doc_id: doc.doc_id.clone(),
            relevance: 1,
        });
    }
    EndToEnd {
        built,
        queries,
        qrels: Qrels::from_entries(qrels).unwrap(),
    }
}

/// Deterministic pseudo-random logits keyed on query, prefix and token.
#[derive(Debug, Clone, Copy)]
pub struct HashScorer {
    pub salt: u64,
    /// Logits are drawn from `{0, 1, .., levels-1} * scale`; few levels make
    /// ties common.
    pub levels: u64,
    pub scale: f64,
}

impl Scorer for HashScorer {
    fn logits(&self, ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|t| {
                let mut h = genret::rng::fnv1a(&ctx.query.query_id) ^ self.salt;
                for p in ctx.prefix {
                    h = genret::rng::splitmix64(h ^ u64::from(p.0));
                }
                h = genret::rng::splitmix64(h ^ (u64::from(t.0) << 32));
                (h % self.levels) as f64 * self.scale
            })
            .collect()
    }
}

/// Random docid paths over a small token alphabet, unique by construction.
pub fn random_paths(rng: &mut ChaCha8Rng, n: usize, alphabet: u32, max_len: usize) -> Vec<(String, Vec<TokenId>)> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(1..=max_len);
        let path: Vec<TokenId> = (0..len).map(|_| TokenId(3 + rng.gen_range(0..alphabet))).collect();
        if seen.insert(path.clone()) {
            out.push((format!("d{}", out.len()), path));
        }
    }
    out
}
