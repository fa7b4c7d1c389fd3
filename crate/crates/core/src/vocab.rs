//! Word-level tokenization and the shared docid/query vocabulary.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::jsonl;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);
    pub const UNK: TokenId = TokenId(2);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.0 < 3
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn keep_inside(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '#' | '.' | '-')
}

/// Lowercases, splits on whitespace and on punctuation other than `#`, `.`
/// and `-`, then trims non-alphanumerics from both ends of each piece.
///
/// `"PD3.1 spec"` becomes `["pd3.1", "spec"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| c.is_whitespace() || !keep_inside(c))
        .map(|piece| piece.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|piece| !piece.is_empty())
        .map(str::to_string)
        .collect()
}

/// Sequence of vocabulary ids. Never holds BOS; EOS only as the last id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        if ids.contains(&TokenId::BOS) {
            return Err(Error::Integrity("token sequence contains <bos>".into()));
        }
        if let Some(pos) = ids.iter().position(|&t| t == TokenId::EOS) {
            if pos + 1 != ids.len() {
                return Err(Error::Integrity("<eos> is only allowed as the final token".into()));
            }
        }
        Ok(TokenSeq(ids))
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_eos(&self) -> bool {
        self.0.last() == Some(&TokenId::EOS)
    }

    /// Returns the sequence with a trailing EOS appended (if absent).
    pub fn with_eos(&self) -> TokenSeq {
        let mut ids = self.0.clone();
        if !self.ends_with_eos() {
            ids.push(TokenId::EOS);
        }
        TokenSeq(ids)
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn reserved_only() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN] {
            v.push(t);
        }
        v
    }

    fn push(&mut self, token: &str) {
        if !self.ids.contains_key(token) {
            let id = TokenId(self.tokens.len() as u32);
            self.ids.insert(token.to_string(), id);
            self.tokens.push(token.to_string());
        }
    }

    /// Reserved tokens first, then corpus tokens by first occurrence: all
    /// docid tokens before any query-only token.
    pub fn build<'a, D, Q>(docids: D, queries: Q) -> Self
    where
        D: IntoIterator,
        D::Item: IntoIterator<Item = &'a String>,
        Q: IntoIterator,
        Q::Item: IntoIterator<Item = &'a String>,
    {
        let mut v = Self::reserved_only();
        for seq in docids {
            for tok in seq {
                v.push(tok);
            }
        }
        for seq in queries {
            for tok in seq {
                v.push(tok);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    /// Unknown and reserved strings both map to UNK, so the result is always
    /// a valid [`TokenSeq`].
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> TokenSeq {
        TokenSeq(
            tokens
                .iter()
                .map(|t| match self.ids.get(t.as_ref()) {
                    Some(&id) if !id.is_reserved() => id,
                    _ => TokenId::UNK,
                })
                .collect(),
        )
    }

    /// Decodes ids to strings, dropping EOS.
    pub fn decode(&self, seq: &[TokenId]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(seq.len());
        for &id in seq {
            if id == TokenId::EOS {
                continue;
            }
            let tok = self.token(id).ok_or_else(|| {
                Error::Integrity(format!("token id {id} is out of range for a vocabulary of {}", self.len()))
            })?;
            out.push(tok.to_string());
        }
        Ok(out)
    }

    /// One token per line, reserved tokens on lines 1-3.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(source: &str, text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, expected) in [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN].iter().enumerate() {
            if lines.get(i) != Some(expected) {
                return Err(Error::parse(source, i + 1, format!("expected reserved token {expected}")));
            }
        }
        let mut v = Self::reserved_only();
        for (idx, line) in lines.iter().enumerate().skip(3) {
            if line.is_empty() || line.contains(char::is_whitespace) {
                return Err(Error::parse(source, idx + 1, "vocabulary tokens must be non-empty and contain no whitespace"));
            }
            if v.ids.contains_key(*line) {
                return Err(Error::parse(source, idx + 1, format!("duplicate token {line:?}")));
            }
            v.push(line);
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_bytes(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = jsonl::read_to_string(path)?;
        Self::from_text(&path.display().to_string(), &text)
    }
}
