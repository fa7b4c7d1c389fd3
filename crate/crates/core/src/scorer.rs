//! Next-token logit sources over the docid vocabulary.
//!
//! [`LexicalScorer`] is the reference retrieval model: an add-alpha smoothed
//! bigram model over docid token transitions plus a fixed bonus for tokens
//! that also appear in the query or in the instruction's content words. Its
//! two hyperparameters are chosen by minimizing held-out docid cross-entropy
//! under trie-masked decoding. [`TableScorer`] serves hand-written logits for
//! exact decoder tests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::docid::Stopwords;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::trie::{Continuations, DocidTrie, NodeId};
use crate::vocab::{tokenize, TokenId, TokenSeq, Vocabulary};

pub const DEFAULT_ALPHA_GRID: [f64; 3] = [0.01, 0.1, 1.0];
pub const DEFAULT_BETA_GRID: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

/// Query-side conditioning, encoded once per query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryContext {
    pub query_id: String,
    pub instr: TokenSeq,
    pub query: TokenSeq,
}

impl QueryContext {
    pub fn encode(vocab: &Vocabulary, query_id: impl Into<String>, instr_text: &str, query_text: &str) -> Self {
        QueryContext {
            query_id: query_id.into(),
            instr: vocab.encode(&tokenize(instr_text)),
            query: vocab.encode(&tokenize(query_text)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScorerContext<'a> {
    pub query: &'a QueryContext,
    /// Docid tokens decoded so far; never contains EOS.
    pub prefix: &'a [TokenId],
}

pub trait Scorer: Sync {
    /// One finite logit per candidate, aligned with `candidates`.
    fn logits(&self, ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn logits(&self, ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64> {
        (**self).logits(ctx, candidates)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    logits.iter().map(|l| l - log_z).collect()
}

/// Log-probability of an EOS-terminated docid path under temperature-1
/// decoding with every step masked to the trie's continuations.
pub fn sequence_logprob<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    path: &[TokenId],
    trie: &DocidTrie,
) -> Result<f64> {
    let mut node = NodeId::ROOT;
    let mut total = 0.0;
    for (step, &tok) in path.iter().enumerate() {
        let edges = trie.continuations(node);
        let pos = edges
            .iter()
            .position(|(t, _)| *t == tok)
            .ok_or_else(|| Error::Contract(format!("path {path:?} leaves the trie at step {step}")))?;
        let candidates: Vec<TokenId> = edges.iter().map(|(t, _)| *t).collect();
        let ctx = ScorerContext {
            query,
            prefix: &path[..step],
        };
        total += log_softmax(&scorer.logits(&ctx, &candidates))[pos];
        node = edges[pos].1;
    }
    if trie.leaf_index(node).is_none() {
        return Err(Error::Contract(format!("path {path:?} is not a docid leaf")));
    }
    Ok(total)
}

/// Bigram counts and smoothing/bonus hyperparameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LexicalScorerParams {
    pub counts: BTreeMap<(TokenId, TokenId), u64>,
    pub alpha: f64,
    pub beta: f64,
}

impl LexicalScorerParams {
    /// Adds one transition count per step of `path` (EOS is appended).
    pub fn add_path(&mut self, path: &[TokenId]) {
        let mut prev = TokenId::BOS;
        for &tok in path.iter().filter(|&&t| t != TokenId::EOS).chain(std::iter::once(&TokenId::EOS)) {
            *self.counts.entry((prev, tok)).or_default() += 1;
            prev = tok;
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsHeader {
    alpha: f64,
    beta: f64,
    vocab_size: usize,
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    prev: String,
    next: String,
    count: u64,
}

#[derive(Debug, Clone)]
pub struct LexicalScorer {
    params: LexicalScorerParams,
    row_totals: HashMap<TokenId, u64>,
    vocab_size: usize,
    stop_ids: HashSet<TokenId>,
}

impl LexicalScorer {
    pub fn new(params: LexicalScorerParams, vocab: &Vocabulary, stopwords: &Stopwords) -> Result<Self> {
        params.validate()?;
        let mut row_totals: HashMap<TokenId, u64> = HashMap::new();
        for (&(prev, next), &c) in &params.counts {
            if prev.index() >= vocab.len() || next.index() >= vocab.len() {
                return Err(Error::Integrity(format!(
                    "bigram ({prev}, {next}) is outside a vocabulary of {}",
                    vocab.len()
                )));
            }
            *row_totals.entry(prev).or_default() += c;
        }
        let stop_ids = vocab
            .tokens()
            .iter()
            .enumerate()
            .filter(|(_, t)| stopwords.contains(t))
            .map(|(i, _)| TokenId(i as u32))
            .collect();
        Ok(LexicalScorer {
            params,
            row_totals,
            vocab_size: vocab.len(),
            stop_ids,
        })
    }

    pub fn params(&self) -> &LexicalScorerParams {
        &self.params
    }

    fn with_hyper(&self, alpha: f64, beta: f64) -> Self {
        let mut s = self.clone();
        s.params.alpha = alpha;
        s.params.beta = beta;
        s
    }

    /// Smoothed `P(next | prev)` over the full vocabulary.
    pub fn bigram_prob(&self, prev: TokenId, next: TokenId) -> f64 {
        let c = self.params.counts.get(&(prev, next)).copied().unwrap_or(0) as f64;
        let total = self.row_totals.get(&prev).copied().unwrap_or(0) as f64;
        (c + self.params.alpha) / (total + self.params.alpha * self.vocab_size as f64)
    }

    fn has_bonus(&self, query: &QueryContext, tok: TokenId) -> bool {
        if tok.is_reserved() {
            return false;
        }
        query.query.ids().contains(&tok) || (query.instr.ids().contains(&tok) && !self.stop_ids.contains(&tok))
    }

    /// Header line, then one row per nonzero bigram sorted by token ids.
    pub fn to_jsonl(&self, vocab: &Vocabulary) -> Result<String> {
        let name = |t: TokenId| {
            vocab
                .token(t)
                .map(str::to_string)
                .ok_or_else(|| Error::Integrity(format!("token id {t} outside vocabulary")))
        };
        let mut out = serde_json::to_string(&ParamsHeader {
            alpha: self.params.alpha,
            beta: self.params.beta,
            vocab_size: self.vocab_size,
        })
        .expect("serializable");
        out.push('\n');
        for (&(prev, next), &count) in &self.params.counts {
            let row = CountRow {
                prev: name(prev)?,
                next: name(next)?,
                count,
            };
            out.push_str(&serde_json::to_string(&row).expect("serializable"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        jsonl::write_bytes(path, self.to_jsonl(vocab)?.as_bytes())
    }

    pub fn from_jsonl(source: &str, text: &str, vocab: &Vocabulary, stopwords: &Stopwords) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "missing scorer header"))?;
        let header: ParamsHeader = serde_json::from_str(header).map_err(|e| Error::parse(source, 1, e.to_string()))?;
        if header.vocab_size != vocab.len() {
            return Err(Error::Integrity(format!(
                "{source}: scorer was fit for a vocabulary of {} tokens, found {}",
                header.vocab_size,
                vocab.len()
            )));
        }
        let mut params = LexicalScorerParams {
            counts: BTreeMap::new(),
            alpha: header.alpha,
            beta: header.beta,
        };
        for (idx, line) in lines {
            let row: CountRow = serde_json::from_str(line).map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
            let id = |t: &str| {
                vocab
                    .id(t)
                    .ok_or_else(|| Error::parse(source, idx + 1, format!("token {t:?} not in vocabulary")))
            };
            params.counts.insert((id(&row.prev)?, id(&row.next)?), row.count);
        }
        Self::new(params, vocab, stopwords)
    }

    pub fn load(path: &Path, vocab: &Vocabulary, stopwords: &Stopwords) -> Result<Self> {
        let text = jsonl::read_to_string(path)?;
        Self::from_jsonl(&path.display().to_string(), &text, vocab, stopwords)
    }
}

impl Scorer for LexicalScorer {
    fn logits(&self, ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64> {
        let prev = ctx.prefix.last().copied().unwrap_or(TokenId::BOS);
        candidates
            .iter()
            .map(|&v| {
                let bonus = if self.has_bonus(ctx.query, v) { self.params.beta } else { 0.0 };
                self.bigram_prob(prev, v).ln() + bonus
            })
            .collect()
    }
}

/// A (query, docid) training example, already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub query: QueryContext,
    /// Docid token path without EOS.
    pub docid: Vec<TokenId>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub scorer: LexicalScorer,
    /// Mean cross-entropy (nats per pair) of the selected grid point.
    pub cross_entropy: f64,
    /// Set when no held-out pairs were given and training CE was used.
    pub used_training_ce: bool,
    /// `(alpha, beta, ce)` for every grid point, in grid order.
    pub grid: Vec<(f64, f64, f64)>,
}

/// Mean over pairs of `-sequence_logprob` (nats per pair).
pub fn mean_cross_entropy<S: Scorer + ?Sized>(scorer: &S, pairs: &[TrainingPair], trie: &DocidTrie) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let mut path = p.docid.clone();
        path.push(TokenId::EOS);
        total -= sequence_logprob(scorer, &p.query, &path, trie)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Counts bigrams over all training docids, then picks `(alpha, beta)` by
/// held-out cross-entropy. Ties go to the smaller alpha, then smaller beta.
pub fn fit(
    train: &[TrainingPair],
    heldout: &[TrainingPair],
    alpha_grid: &[f64],
    beta_grid: &[f64],
    trie: &DocidTrie,
    vocab: &Vocabulary,
    stopwords: &Stopwords,
) -> Result<FitReport> {
    if train.is_empty() {
        return Err(Error::Integrity("cannot fit a scorer without training pairs".into()));
    }
    if alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::Config("alpha and beta grids must be non-empty".into()));
    }
    let mut params = LexicalScorerParams {
        alpha: 1.0,
        ..Default::default()
    };
    for p in train {
        params.add_path(&p.docid);
    }
    let base = LexicalScorer::new(params, vocab, stopwords)?;

    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut alphas = alpha_grid.to_vec();
    let mut betas = beta_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    for &a in &alphas {
        for &b in &betas {
            points.push((a, b));
        }
    }

    let used_training_ce = heldout.is_empty();
    let eval_set = if used_training_ce { train } else { heldout };
    let grid: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|&(a, b)| {
            let s = base.with_hyper(a, b);
            s.params.validate()?;
            Ok((a, b, mean_cross_entropy(&s, eval_set, trie)?))
        })
        .collect::<Result<_>>()?;

    let best = grid
        .iter()
        .copied()
        .reduce(|best, cur| if cur.2 < best.2 { cur } else { best })
        .expect("grid is non-empty");
    Ok(FitReport {
        scorer: base.with_hyper(best.0, best.1),
        cross_entropy: best.2,
        used_training_ce,
        grid,
    })
}

#[derive(Deserialize)]
struct TableRow {
    query_id: String,
    prefix: String,
    logits: BTreeMap<String, f64>,
}

/// Logits looked up by `(query_id, prefix)`. Unlisted contexts are uniform;
/// tokens missing from a listed row get logit 0.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    rows: HashMap<(String, Vec<TokenId>), HashMap<TokenId, f64>>,
}

impl TableScorer {
    pub fn from_jsonl(source: &str, text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut rows = HashMap::new();
        for (line, row) in jsonl::parse_records::<TableRow>(source, text)? {
            let lookup = |t: &str| {
                vocab
                    .id(t)
                    .ok_or_else(|| Error::parse(source, line, format!("token {t:?} not in vocabulary")))
            };
            let prefix = row.prefix.split_whitespace().map(lookup).collect::<Result<Vec<_>>>()?;
            let mut logits = HashMap::new();
            for (tok, value) in row.logits {
                if !value.is_finite() {
                    return Err(Error::parse(source, line, format!("logit for {tok:?} is not finite")));
                }
                logits.insert(lookup(&tok)?, value);
            }
            if rows.insert((row.query_id.clone(), prefix), logits).is_some() {
                return Err(Error::parse(source, line, "duplicate (query_id, prefix) row"));
            }
        }
        Ok(TableScorer { rows })
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = jsonl::read_to_string(path)?;
        Self::from_jsonl(&path.display().to_string(), &text, vocab)
    }

    pub fn insert(&mut self, query_id: &str, prefix: Vec<TokenId>, logits: HashMap<TokenId, f64>) {
        self.rows.insert((query_id.to_string(), prefix), logits);
    }
}

impl Scorer for TableScorer {
    fn logits(&self, ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64> {
        match self.rows.get(&(ctx.query.query_id.clone(), ctx.prefix.to_vec())) {
            Some(row) => candidates.iter().map(|t| row.get(t).copied().unwrap_or(0.0)).collect(),
            None => vec![0.0; candidates.len()],
        }
    }
}

/// Same logits for every context: 0 everywhere unless overridden per token.
#[derive(Debug, Clone, Default)]
pub struct ConstantScorer {
    pub per_token: HashMap<TokenId, f64>,
}

impl Scorer for ConstantScorer {
    fn logits(&self, _ctx: &ScorerContext<'_>, candidates: &[TokenId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|t| self.per_token.get(t).copied().unwrap_or(0.0))
            .collect()
    }
}
