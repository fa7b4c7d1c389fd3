//! Docid decoding over a scorer and a docid trie.
//!
//! The sampling decoders (reverse annealing, greedy, nucleus) emit one docid
//! per iteration and remove its leaf from a private trie session, so every
//! docid is produced at most once. Reverse annealing samples the `i`-th docid
//! at a temperature given by a normalized sigmoid that rises from 0 to
//! `t_max` over the `K` iterations. Beam search ranks complete leaves of the
//! unmodified trie by their summed log-probability.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RunEntry;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scorer::{log_softmax, sequence_logprob, QueryContext, Scorer, ScorerContext};
use crate::trie::{Continuations, DocidTrie, NodeId, TrieSession};
use crate::vocab::TokenId;

/// Temperatures at or below this decode by argmax.
pub const ARGMAX_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    /// Number of docids to emit (`K`).
    pub total: usize,
    /// Sigmoid slope (`k`).
    pub slope: f64,
    /// Sigmoid midpoint as a fraction of `total` (`m`).
    pub midpoint: f64,
    pub t_max: f64,
}

impl TemperatureSchedule {
    pub fn new(total: usize, slope: f64, midpoint: f64, t_max: f64) -> Result<Self> {
        if total == 0 {
            return Err(Error::Config("schedule length K must be at least 1".into()));
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Config(format!("slope k must be > 0, got {slope}")));
        }
        if !(midpoint > 0.0 && midpoint < 1.0) {
            return Err(Error::Config(format!("midpoint m must be in (0, 1), got {midpoint}")));
        }
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::Config(format!("t_max must be >= 0, got {t_max}")));
        }
        Ok(TemperatureSchedule {
            total,
            slope,
            midpoint,
            t_max,
        })
    }

    /// `t_max * (σ(k(i/K - m)) - σ(-km)) / (σ(k(1-m)) - σ(-km))`.
    ///
    /// Sigmoid differences are taken as `(tanh(a/2) - tanh(b/2)) / 2`, which
    /// makes `g(0) = 0`, `g(K) = t_max`, and `g(K/2) = t_max/2` for `m = 0.5`
    /// exact in floating point.
    pub fn temperature(&self, i: usize) -> f64 {
        let k = self.slope;
        let m = self.midpoint;
        let low = (-k * m / 2.0).tanh();
        let x = k * (i as f64 / self.total as f64 - m);
        let num = (x / 2.0).tanh() - low;
        let den = (k * (1.0 - m) / 2.0).tanh() - low;
        self.t_max * (num / den)
    }
}

fn argmax(logits: &[f64]) -> usize {
    // candidates are sorted by token id, so the first maximum is the lowest id
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Index of the sampled candidate from `softmax(logits / t)`; argmax when
/// `t <= ARGMAX_EPSILON`.
pub fn sample_index(logits: &[f64], t: f64, rng: &mut impl Rng) -> usize {
    assert!(!logits.is_empty(), "no candidates to sample from");
    if logits.len() == 1 {
        return 0;
    }
    if t <= ARGMAX_EPSILON {
        return argmax(logits);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| ((l - max) / t).exp()).collect();
    draw(&weights, rng)
}

/// Nucleus choice at temperature 1: keep the most probable candidates until
/// their mass reaches `top_p` (at least one), then sample among them.
pub fn nucleus_index(logits: &[f64], top_p: f64, rng: &mut impl Rng) -> usize {
    assert!(!logits.is_empty(), "no candidates to sample from");
    if logits.len() == 1 {
        return 0;
    }
    let probs: Vec<f64> = log_softmax(logits).into_iter().map(f64::exp).collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = 0;
    let mut mass = 0.0;
    for &i in &order {
        kept += 1;
        mass += probs[i];
        if mass >= top_p {
            break;
        }
    }
    let weights: Vec<f64> = order[..kept].iter().map(|&i| probs[i]).collect();
    order[draw(&weights, rng)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Temperature(f64),
    Nucleus(f64),
}

/// One token from the live continuations of `prefix`.
pub fn sample_step<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &TrieSession<'_>,
    prefix: &[TokenId],
    t: f64,
    rng: &mut impl Rng,
) -> Result<TokenId> {
    let candidates = session.valid_next(prefix)?;
    let logits = scorer.logits(&ScorerContext { query, prefix }, &candidates);
    Ok(candidates[sample_index(&logits, t, rng)])
}

fn decode_path<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &TrieSession<'_>,
    step: Step,
    rng: &mut StreamRng,
) -> Result<Vec<TokenId>> {
    let mut node = NodeId::ROOT;
    let mut path = Vec::new();
    loop {
        let edges = session.continuations(node);
        if edges.is_empty() {
            return Err(Error::Contract(format!("decoding reached a dead prefix {path:?}")));
        }
        let candidates: Vec<TokenId> = edges.iter().map(|(t, _)| *t).collect();
        let logits = scorer.logits(&ScorerContext { query, prefix: &path }, &candidates);
        let pick = match step {
            Step::Temperature(t) => sample_index(&logits, t, rng),
            Step::Nucleus(p) => nucleus_index(&logits, p, rng),
        };
        let (tok, child) = edges[pick];
        path.push(tok);
        node = child;
        if tok == TokenId::EOS {
            return Ok(path);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    /// Docid token path, EOS-terminated.
    pub path: Vec<TokenId>,
    /// Temperature-1 log-probability under the full trie.
    pub logprob: f64,
    /// 1-based.
    pub emission_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub hits: Vec<Hit>,
    pub decoder: String,
    pub seed: u64,
    /// Requested number of docids.
    pub k: usize,
}

impl Retrieval {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.doc_id.as_str()).collect()
    }

    /// Run rows in emission order. Scores are the log-probabilities when
    /// those strictly decrease (at 6 decimals); otherwise `K - emission_index`.
    pub fn to_run_entries(&self, query_id: &str, tag: &str) -> Vec<RunEntry> {
        let by_logprob = self
            .hits
            .windows(2)
            .all(|w| crate::corpus::run_score(w[1].logprob) < crate::corpus::run_score(w[0].logprob));
        self.hits
            .iter()
            .map(|h| RunEntry {
                query_id: query_id.to_string(),
                doc_id: h.doc_id.clone(),
                rank: h.emission_index,
                score: if by_logprob {
                    h.logprob
                } else {
                    (self.k - h.emission_index) as f64
                },
                tag: tag.to_string(),
            })
            .collect()
    }
}

fn sample_without_replacement<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &mut TrieSession<'_>,
    k: usize,
    seed: u64,
    decoder: &str,
    step_for: impl Fn(usize) -> Step,
) -> Result<Retrieval> {
    let query_key = rng::fnv1a(&query.query_id);
    let mut hits = Vec::with_capacity(k.min(session.live_leaf_count()));
    for i in 1..=k {
        if session.is_empty() {
            break;
        }
        let mut r = rng::stream(seed, &[query_key, i as u64]);
        let path = decode_path(scorer, query, session, step_for(i), &mut r)?;
        let doc_id = session.remove_leaf(&path)?.to_string();
        let logprob = sequence_logprob(scorer, query, &path, session.trie())?;
        hits.push(Hit {
            doc_id,
            path,
            logprob,
            emission_index: i,
        });
    }
    Ok(Retrieval {
        hits,
        decoder: decoder.to_string(),
        seed,
        k,
    })
}

/// Emits up to `schedule.total` docids; docid `i` is sampled at
/// `schedule.temperature(i)` and its leaf removed afterwards.
pub fn reverse_annealing<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &mut TrieSession<'_>,
    schedule: &TemperatureSchedule,
    seed: u64,
) -> Result<Retrieval> {
    sample_without_replacement(scorer, query, session, schedule.total, seed, "reverse-annealing", |i| {
        Step::Temperature(schedule.temperature(i))
    })
}

pub fn greedy_no_replacement<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &mut TrieSession<'_>,
    k: usize,
) -> Result<Retrieval> {
    sample_without_replacement(scorer, query, session, k, 0, "greedy", |_| Step::Temperature(0.0))
}

pub fn nucleus<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    session: &mut TrieSession<'_>,
    k: usize,
    top_p: f64,
    seed: u64,
) -> Result<Retrieval> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(Error::Config(format!("top_p must be in (0, 1], got {top_p}")));
    }
    sample_without_replacement(scorer, query, session, k, seed, "nucleus", |_| Step::Nucleus(top_p))
}

#[derive(Debug, Clone)]
struct Hypothesis {
    node: NodeId,
    path: Vec<TokenId>,
    score: f64,
}

fn rank_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.path.cmp(&b.path)));
}

/// Beam search over the full trie. The beam keeps `max(width, k)`
/// hypotheses per step so that `k` leaves can be returned; finished leaves
/// are ranked by total log-probability, ties by token-id order.
pub fn beam<S: Scorer + ?Sized>(
    scorer: &S,
    query: &QueryContext,
    trie: &DocidTrie,
    k: usize,
    width: usize,
) -> Result<Retrieval> {
    if width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let keep = width.max(k);
    let mut live = vec![Hypothesis {
        node: NodeId::ROOT,
        path: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    if trie.leaf_count() == 0 {
        live.clear();
    }
    while !live.is_empty() {
        let mut pool = Vec::new();
        for h in &live {
            let edges = trie.continuations(h.node);
            let candidates: Vec<TokenId> = edges.iter().map(|(t, _)| *t).collect();
            let logits = scorer.logits(
                &ScorerContext {
                    query,
                    prefix: &h.path,
                },
                &candidates,
            );
            for ((tok, child), lp) in edges.iter().zip(log_softmax(&logits)) {
                let mut path = h.path.clone();
                path.push(*tok);
                pool.push(Hypothesis {
                    node: *child,
                    path,
                    score: h.score + lp,
                });
            }
        }
        rank_hypotheses(&mut pool);
        pool.truncate(keep);
        live.clear();
        for h in pool {
            if h.path.last() == Some(&TokenId::EOS) {
                finished.push(h);
            } else {
                live.push(h);
            }
        }
    }
    rank_hypotheses(&mut finished);
    finished.truncate(k);
    let hits = finished
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let leaf = trie.leaf_index(h.node).expect("EOS edges end at leaves");
            Hit {
                doc_id: trie.doc_id(leaf).to_string(),
                path: h.path,
                logprob: h.score,
                emission_index: i + 1,
            }
        })
        .collect();
    Ok(Retrieval {
        hits,
        decoder: "beam".into(),
        seed: 0,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ReverseAnnealing,
    Greedy,
    Nucleus,
    Beam,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ReverseAnnealing => "reverse-annealing",
            Strategy::Greedy => "greedy",
            Strategy::Nucleus => "nucleus",
            Strategy::Beam => "beam",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse-annealing" => Ok(Strategy::ReverseAnnealing),
            "greedy" => Ok(Strategy::Greedy),
            "nucleus" => Ok(Strategy::Nucleus),
            "beam" => Ok(Strategy::Beam),
            other => Err(Error::Config(format!(
                "unknown decoder {other:?} (expected reverse-annealing, greedy, nucleus or beam)"
            ))),
        }
    }
}

/// Decoder choice and all of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    pub strategy: Strategy,
    pub k: usize,
    pub slope: f64,
    pub midpoint: f64,
    pub t_max: f64,
    pub top_p: f64,
    pub width: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        DecoderSettings {
            strategy: Strategy::ReverseAnnealing,
            k: 100,
            slope: 10.0,
            midpoint: 0.5,
            t_max: 1.0,
            top_p: 0.9,
            width: 10,
        }
    }
}

impl DecoderSettings {
    pub fn schedule(&self) -> Result<TemperatureSchedule> {
        TemperatureSchedule::new(self.k, self.slope, self.midpoint, self.t_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        match self.strategy {
            Strategy::ReverseAnnealing => self.schedule().map(|_| ()),
            Strategy::Nucleus if !(self.top_p > 0.0 && self.top_p <= 1.0) => {
                Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)))
            }
            Strategy::Beam if self.width == 0 => Err(Error::Config("beam width must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Runs the configured decoder on a fresh session of `trie`.
    pub fn decode<S: Scorer + ?Sized>(
        &self,
        scorer: &S,
        query: &QueryContext,
        trie: &DocidTrie,
        seed: u64,
    ) -> Result<Retrieval> {
        self.validate()?;
        let mut session = trie.session();
        match self.strategy {
            Strategy::ReverseAnnealing => reverse_annealing(scorer, query, &mut session, &self.schedule()?, seed),
            Strategy::Greedy => greedy_no_replacement(scorer, query, &mut session, self.k),
            Strategy::Nucleus => nucleus(scorer, query, &mut session, self.k, self.top_p, seed),
            Strategy::Beam => beam(scorer, query, trie, self.k, self.width),
        }
    }
}
