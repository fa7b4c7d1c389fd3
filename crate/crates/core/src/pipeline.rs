//! End-to-end wiring: configuration, index artifacts, batch retrieval.
//!
//! An index directory holds four plain-text files:
//!
//! | file            | contents                                            |
//! |-----------------|-----------------------------------------------------|
//! | `vocab.txt`     | one token per line, `<bos>`/`<eos>`/`<unk>` first   |
//! | `docids.jsonl`  | `{"doc_id", "docid", "deduped"}` per document       |
//! | `scorer.jsonl`  | fitted bigram counts and `(alpha, beta)`            |
//! | `manifest.json` | config hash, instruction, counts and diagnostics    |
//!
//! Building the same config twice yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, load_instructions, Corpus, RunEntry, TaskInstruction};
use crate::decoder::{DecoderSettings, Retrieval};
use crate::docid::{
    assign_docids, load_external_docids, DedupPolicy, DocidAssignment, DocidSource, Stopwords, TfIdfDocidGenerator,
    DEFAULT_MAX_LEN,
};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::querygen::{avg_query_length, load_external_queries, QueryBatch, QueryGenerator};
use crate::scorer::{fit, LexicalScorer, QueryContext, TrainingPair, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
use crate::trie::DocidTrie;
use crate::vocab::{tokenize, Vocabulary};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const DOCIDS_FILE: &str = "docids.jsonl";
pub const SCORER_FILE: &str = "scorer.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FORMAT: &str = "genret-index/1";

pub const DEFAULT_INSTRUCTION: &str = "Given a query, retrieve the documents that answer it";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocidConfig {
    pub max_len: usize,
    pub dedup: DedupPolicy,
    pub external: Option<PathBuf>,
}

impl Default for DocidConfig {
    fn default() -> Self {
        DocidConfig {
            max_len: DEFAULT_MAX_LEN,
            dedup: DedupPolicy::default(),
            external: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerygenConfig {
    pub per_doc: usize,
    pub seed: Option<u64>,
    pub external: Option<PathBuf>,
    pub instr_id: Option<String>,
}

impl Default for QuerygenConfig {
    fn default() -> Self {
        QuerygenConfig {
            per_doc: 8,
            seed: None,
            external: None,
            instr_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            beta_grid: DEFAULT_BETA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareEntry {
    pub name: String,
    #[serde(flatten)]
    pub settings: DecoderSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub docid: DocidConfig,
    pub querygen: QuerygenConfig,
    pub scorer: ScorerConfig,
    pub decoder: DecoderSettings,
    pub compare: Vec<CompareEntry>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = jsonl::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.paths.corpus);
        resolve(&mut cfg.paths.instructions);
        resolve(&mut cfg.paths.qrels);
        resolve(&mut cfg.paths.queries);
        resolve(&mut cfg.paths.output);
        resolve(&mut cfg.docid.external);
        resolve(&mut cfg.querygen.external);
        Ok(cfg)
    }

    pub fn querygen_seed(&self) -> u64 {
        self.querygen.seed.unwrap_or(self.seed)
    }

    /// The configured comparison list, or one row per decoder with the
    /// `[decoder]` parameters.
    pub fn compare_entries(&self) -> Vec<(String, DecoderSettings)> {
        if !self.compare.is_empty() {
            return self.compare.iter().map(|c| (c.name.clone(), c.settings.clone())).collect();
        }
        use crate::decoder::Strategy::*;
        [Greedy, Nucleus, ReverseAnnealing, Beam]
            .into_iter()
            .map(|strategy| {
                (
                    strategy.to_string(),
                    DecoderSettings {
                        strategy,
                        ..self.decoder.clone()
                    },
                )
            })
            .collect()
    }
}

pub fn require_path<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} path configured")))?;
    if !p.exists() {
        return Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
        ));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub documents: usize,
    pub conflict_rate_before_dedup: f64,
    pub config_hash: String,
    pub corpus_sha256: String,
    pub instruction: TaskInstruction,
    pub docid_source: String,
    pub docid_max_len: usize,
    pub dedup: DedupPolicy,
    pub deduped_documents: usize,
    pub truncated_docids: usize,
    pub queries_per_doc: usize,
    pub querygen_source: String,
    pub querygen_seed: u64,
    pub avg_query_length: f64,
    pub training_pairs: usize,
    pub heldout_pairs: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub cross_entropy: f64,
    pub used_training_ce: bool,
}

/// The subset of the config that determines index contents.
#[derive(Serialize)]
struct IndexKey<'a> {
    docid: &'a DocidConfig,
    querygen: &'a QuerygenConfig,
    querygen_seed: u64,
    scorer: &'a ScorerConfig,
    instruction: &'a TaskInstruction,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn pick_instruction(cfg: &PipelineConfig) -> Result<TaskInstruction> {
    let Some(path) = cfg.paths.instructions.as_ref() else {
        return Ok(TaskInstruction {
            instr_id: "default".into(),
            text: DEFAULT_INSTRUCTION.into(),
        });
    };
    let all = load_instructions(require_path(&Some(path.clone()), "instructions")?)?;
    match &cfg.querygen.instr_id {
        Some(id) => all
            .into_iter()
            .find(|i| &i.instr_id == id)
            .ok_or_else(|| Error::Integrity(format!("instruction {id:?} not found in {}", path.display()))),
        None => all
            .into_iter()
            .next()
            .ok_or_else(|| Error::Integrity(format!("{} contains no instructions", path.display()))),
    }
}

/// An index loaded into memory.
#[derive(Debug, Clone)]
pub struct Index {
    pub vocab: Vocabulary,
    pub assignment: DocidAssignment,
    pub trie: DocidTrie,
    pub scorer: LexicalScorer,
    pub manifest: Manifest,
}

/// Everything produced by an index build, before it is written out.
pub struct BuiltIndex {
    pub index: Index,
    pub queries: QueryBatch,
}

pub fn build_index(cfg: &PipelineConfig) -> Result<BuiltIndex> {
    let corpus_path = require_path(&cfg.paths.corpus, "corpus")?;
    let corpus_bytes = fs::read(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
    let corpus = load_corpus(corpus_path)?;
    let instruction = pick_instruction(cfg)?;
    build_index_from(cfg, &corpus, &instruction, sha256_hex(&corpus_bytes))
}

pub fn build_index_from(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    instruction: &TaskInstruction,
    corpus_sha256: String,
) -> Result<BuiltIndex> {
    if cfg.docid.max_len == 0 {
        return Err(Error::Config("docid max_len must be at least 1".into()));
    }
    if cfg.querygen.per_doc == 0 {
        return Err(Error::Config("querygen per_doc must be at least 1".into()));
    }
    let stopwords = Stopwords::default();

    let (assignment, docid_source, truncated) = match &cfg.docid.external {
        Some(path) => {
            let ext = load_external_docids(path, corpus, cfg.docid.max_len)?;
            let truncated = ext.truncated;
            (assign_docids(corpus, &ext, cfg.docid.dedup)?, "external", truncated)
        }
        None => {
            let generator = TfIdfDocidGenerator::for_corpus(corpus, cfg.docid.max_len);
            (assign_docids(corpus, &generator as &dyn DocidSource, cfg.docid.dedup)?, "tfidf", 0)
        }
    };

    let seed = cfg.querygen_seed();
    let (queries, querygen_source) = match &cfg.querygen.external {
        Some(path) => (load_external_queries(path, corpus, cfg.querygen.per_doc)?, "external"),
        None => (
            QueryGenerator::for_corpus(corpus).generate_batch(corpus, instruction, cfg.querygen.per_doc, seed)?,
            "template",
        ),
    };

    let docid_terms: Vec<&Vec<String>> = assignment.entries().iter().map(|e| &e.terms).collect();
    let query_tokens: Vec<Vec<String>> = queries.iter().map(|q| tokenize(&q.text)).collect();
    let vocab = Vocabulary::build(docid_terms.iter().copied(), &query_tokens);
    let trie = DocidTrie::build(&assignment, &vocab)?;

    let mut train = Vec::new();
    let mut heldout = Vec::new();
    let b = queries.queries_per_doc();
    for (doc_id, qs) in queries.documents() {
        let entry = assignment
            .get(doc_id)
            .ok_or_else(|| Error::Integrity(format!("queries for unknown document {doc_id:?}")))?;
        let docid = vocab.encode(&entry.terms).into_ids();
        for q in qs {
            let pair = TrainingPair {
                query: QueryContext::encode(&vocab, format!("{doc_id}#{}", q.seed_index), &instruction.text, &q.text),
                docid: docid.clone(),
            };
            if b >= 2 && q.seed_index == b - 1 {
                heldout.push(pair);
            } else {
                train.push(pair);
            }
        }
    }

    let fitted = if train.is_empty() {
        None
    } else {
        Some(fit(
            &train,
            &heldout,
            &cfg.scorer.alpha_grid,
            &cfg.scorer.beta_grid,
            &trie,
            &vocab,
            &stopwords,
        )?)
    };
    let (scorer, cross_entropy, used_training_ce) = match fitted {
        Some(r) => (r.scorer, r.cross_entropy, r.used_training_ce),
        None => (
            // empty corpus: an untrained scorer with the smallest grid values
            LexicalScorer::new(
                crate::scorer::LexicalScorerParams {
                    alpha: cfg.scorer.alpha_grid.iter().copied().fold(f64::INFINITY, f64::min),
                    beta: cfg.scorer.beta_grid.iter().copied().fold(f64::INFINITY, f64::min),
                    ..Default::default()
                },
                &vocab,
                &stopwords,
            )?,
            0.0,
            true,
        ),
    };

    let key = IndexKey {
        docid: &cfg.docid,
        querygen: &cfg.querygen,
        querygen_seed: seed,
        scorer: &cfg.scorer,
        instruction,
    };
    let config_hash = sha256_hex(serde_json::to_string(&key).expect("serializable").as_bytes());

    let manifest = Manifest {
        format: INDEX_FORMAT.into(),
        documents: corpus.len(),
        conflict_rate_before_dedup: assignment.conflict_rate_before_dedup(),
        config_hash,
        corpus_sha256,
        instruction: instruction.clone(),
        docid_source: docid_source.into(),
        docid_max_len: cfg.docid.max_len,
        dedup: cfg.docid.dedup,
        deduped_documents: assignment.entries().iter().filter(|e| e.deduped).count(),
        truncated_docids: truncated,
        queries_per_doc: b,
        querygen_source: querygen_source.into(),
        querygen_seed: seed,
        avg_query_length: avg_query_length(queries.iter()).unwrap_or(0.0),
        training_pairs: train.len(),
        heldout_pairs: heldout.len(),
        vocab_size: vocab.len(),
        alpha: scorer.params().alpha,
        beta: scorer.params().beta,
        cross_entropy,
        used_training_ce,
    };

    Ok(BuiltIndex {
        index: Index {
            vocab,
            assignment,
            trie,
            scorer,
            manifest,
        },
        queries,
    })
}

impl Index {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        self.assignment.save(&dir.join(DOCIDS_FILE))?;
        self.scorer.save(&dir.join(SCORER_FILE), &self.vocab)?;
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("serializable");
        manifest.push('\n');
        jsonl::write_bytes(&dir.join(MANIFEST_FILE), manifest.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&jsonl::read_to_string(&manifest_path)?)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), e.line(), e.to_string()))?;
        if manifest.format != INDEX_FORMAT {
            return Err(Error::Integrity(format!(
                "{}: unsupported index format {:?}",
                manifest_path.display(),
                manifest.format
            )));
        }
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let assignment = DocidAssignment::load(&dir.join(DOCIDS_FILE), manifest.conflict_rate_before_dedup)?;
        if assignment.len() != manifest.documents {
            return Err(Error::Integrity(format!(
                "manifest lists {} documents but {DOCIDS_FILE} has {}",
                manifest.documents,
                assignment.len()
            )));
        }
        let trie = DocidTrie::build(&assignment, &vocab)?;
        let scorer = LexicalScorer::load(&dir.join(SCORER_FILE), &vocab, &Stopwords::default())?;
        Ok(Index {
            vocab,
            assignment,
            trie,
            scorer,
            manifest,
        })
    }

    /// Encodes a query under `instruction` (or the index's own instruction).
    pub fn query_context(&self, query_id: &str, text: &str, instruction: Option<&str>) -> QueryContext {
        let instr = instruction.unwrap_or(&self.manifest.instruction.text);
        QueryContext::encode(&self.vocab, query_id, instr, text)
    }

    pub fn retrieve(&self, query: &QueryContext, settings: &DecoderSettings, seed: u64) -> Result<Retrieval> {
        settings.decode(&self.scorer, query, &self.trie, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instr_id: Option<String>,
}

pub fn load_query_records(path: &Path) -> Result<Vec<QueryRecord>> {
    let source = path.display().to_string();
    let mut out: Vec<QueryRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, q) in jsonl::read_records::<QueryRecord>(path)? {
        if !seen.insert(q.query_id.clone()) {
            return Err(Error::Integrity(format!("{source}:{line}: duplicate query_id {:?}", q.query_id)));
        }
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxRow {
    pub query_id: String,
    pub rank: usize,
    pub doc_id: String,
    pub docid: String,
    pub logprob: f64,
    pub emission_index: usize,
    pub decoder: String,
    pub seed: u64,
}

pub struct RunOutput {
    pub entries: Vec<RunEntry>,
    pub aux: Vec<AuxRow>,
    pub retrievals: Vec<(String, Retrieval)>,
}

/// Decodes every query (in parallel, output in input order).
pub fn retrieve_all(
    index: &Index,
    queries: &[QueryRecord],
    instructions: &[TaskInstruction],
    settings: &DecoderSettings,
    seed: u64,
) -> Result<RunOutput> {
    settings.validate()?;
    let tag = format!("genret-{}", settings.strategy);
    let retrievals: Vec<(String, Retrieval)> = queries
        .par_iter()
        .map(|q| {
            let instr = match &q.instr_id {
                Some(id) if *id == index.manifest.instruction.instr_id => None,
                Some(id) => Some(
                    instructions
                        .iter()
                        .find(|i| &i.instr_id == id)
                        .map(|i| i.text.as_str())
                        .ok_or_else(|| Error::Integrity(format!("query {:?}: unknown instr_id {id:?}", q.query_id)))?,
                ),
                None => None,
            };
            let ctx = index.query_context(&q.query_id, &q.text, instr);
            Ok((q.query_id.clone(), index.retrieve(&ctx, settings, seed)?))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut aux = Vec::new();
    for (qid, r) in &retrievals {
        entries.extend(r.to_run_entries(qid, &tag));
        for h in &r.hits {
            aux.push(AuxRow {
                query_id: qid.clone(),
                rank: h.emission_index,
                doc_id: h.doc_id.clone(),
                docid: index.vocab.decode(&h.path)?.join(" "),
                logprob: h.logprob,
                emission_index: h.emission_index,
                decoder: r.decoder.clone(),
                seed: r.seed,
            });
        }
    }
    Ok(RunOutput {
        entries,
        aux,
        retrievals,
    })
}
