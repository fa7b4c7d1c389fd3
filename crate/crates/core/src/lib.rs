//! Generative retrieval over keyword document identifiers.
//!
//! Documents get short keyword docids, pseudo-queries pair each document with
//! plausible requests, and a next-token scorer fit on those pairs decodes
//! docids through a prefix tree of valid identifiers. Decoding supports
//! reverse-annealed sampling (temperature rising across emissions), greedy,
//! nucleus and beam search, and [`eval`] scores the resulting rankings.

pub mod corpus;
pub mod decoder;
pub mod docid;
pub mod error;
pub mod eval;
mod jsonl;
pub mod pipeline;
pub mod querygen;
pub mod rng;
pub mod scorer;
pub mod trie;
pub mod vocab;

pub use error::{Error, ErrorKind, Result};
