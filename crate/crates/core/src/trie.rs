//! Prefix tree over encoded docids.
//!
//! [`DocidTrie`] is immutable once built and can be shared between threads.
//! Decoding mutates a [`TrieSession`], which owns a copy of the per-node live
//! leaf counts. Removing a leaf decrements the counts along its path, and any
//! node whose count reaches zero disappears from every continuation query.

use std::collections::HashSet;

use crate::docid::DocidAssignment;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
struct Node {
    /// Sorted by token id.
    children: Vec<(TokenId, NodeId)>,
    leaf: Option<usize>,
    leaf_count: u32,
}

/// Anything that can enumerate the live continuations of a node.
pub trait Continuations {
    /// Live `(token, child)` edges of `node`, ascending by token id.
    fn continuations(&self, node: NodeId) -> Vec<(TokenId, NodeId)>;

    fn leaf_index(&self, node: NodeId) -> Option<usize>;
}

#[derive(Debug, Clone)]
pub struct DocidTrie {
    nodes: Vec<Node>,
    doc_ids: Vec<String>,
    /// Leaf node per document, in insertion order.
    leaves: Vec<NodeId>,
}

impl DocidTrie {
    /// Builds from `(doc_id, token path)` pairs. Paths must not contain EOS;
    /// it is appended here.
    pub fn from_paths<I, S>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<TokenId>)>,
        S: Into<String>,
    {
        let mut trie = DocidTrie {
            nodes: vec![Node {
                children: Vec::new(),
                leaf: None,
                leaf_count: 0,
            }],
            doc_ids: Vec::new(),
            leaves: Vec::new(),
        };
        let mut seen_docs = HashSet::new();
        for (doc_id, path) in paths {
            let doc_id = doc_id.into();
            if path.is_empty() {
                return Err(Error::Integrity(format!("empty docid path for {doc_id:?}")));
            }
            if let Some(t) = path.iter().find(|t| t.is_reserved()) {
                return Err(Error::Integrity(format!(
                    "docid path for {doc_id:?} contains reserved token id {t}"
                )));
            }
            if !seen_docs.insert(doc_id.clone()) {
                return Err(Error::Integrity(format!("document {doc_id:?} inserted twice")));
            }
            trie.insert(doc_id, &path)?;
        }
        Ok(trie)
    }

    /// Encodes every assigned docid with `vocab`; a term missing from the
    /// vocabulary is an integrity error.
    pub fn build(assignment: &DocidAssignment, vocab: &Vocabulary) -> Result<Self> {
        let mut paths = Vec::with_capacity(assignment.len());
        for e in assignment.entries() {
            let seq = vocab.encode(&e.terms);
            if let Some(pos) = seq.ids().iter().position(|&t| t == TokenId::UNK) {
                return Err(Error::Integrity(format!(
                    "docid term {:?} of {:?} is not in the vocabulary",
                    e.terms[pos], e.doc_id
                )));
            }
            paths.push((e.doc_id.clone(), seq.into_ids()));
        }
        Self::from_paths(paths)
    }

    fn insert(&mut self, doc_id: String, path: &[TokenId]) -> Result<()> {
        let mut node = NodeId::ROOT;
        let mut visited = vec![node];
        for &tok in path.iter().chain(std::iter::once(&TokenId::EOS)) {
            node = match self.child(node, tok) {
                Some(child) => child,
                None => {
                    let child = NodeId(self.nodes.len() as u32);
                    self.nodes.push(Node {
                        children: Vec::new(),
                        leaf: None,
                        leaf_count: 0,
                    });
                    let children = &mut self.nodes[node.index()].children;
                    let at = children.partition_point(|(t, _)| *t < tok);
                    children.insert(at, (tok, child));
                    child
                }
            };
            visited.push(node);
        }
        if let Some(existing) = self.nodes[node.index()].leaf {
            return Err(Error::Integrity(format!(
                "documents {:?} and {doc_id:?} encode to the same docid path",
                self.doc_ids[existing]
            )));
        }
        let idx = self.doc_ids.len();
        self.nodes[node.index()].leaf = Some(idx);
        for n in visited {
            self.nodes[n.index()].leaf_count += 1;
        }
        self.doc_ids.push(doc_id);
        self.leaves.push(node);
        Ok(())
    }

    fn child(&self, node: NodeId, tok: TokenId) -> Option<NodeId> {
        let children = &self.nodes[node.index()].children;
        children
            .binary_search_by_key(&tok, |(t, _)| *t)
            .ok()
            .map(|i| children[i].1)
    }

    pub fn leaf_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, leaf_index: usize) -> &str {
        &self.doc_ids[leaf_index]
    }

    pub fn walk(&self, path: &[TokenId]) -> Option<NodeId> {
        path.iter().try_fold(NodeId::ROOT, |node, &tok| self.child(node, tok))
    }

    /// Tokens that extend `prefix` toward at least one leaf.
    pub fn valid_next(&self, prefix: &[TokenId]) -> Result<Vec<TokenId>> {
        let node = self
            .walk(prefix)
            .filter(|n| self.nodes[n.index()].leaf.is_none() && self.nodes[n.index()].leaf_count > 0)
            .ok_or_else(|| Error::Contract(format!("prefix {prefix:?} is not a live path in the trie")))?;
        Ok(self.nodes[node.index()].children.iter().map(|(t, _)| *t).collect())
    }

    /// Resolves an EOS-terminated path to its document, whether or not the
    /// leaf has been removed in some session.
    pub fn lookup_doc(&self, path: &[TokenId]) -> Result<&str> {
        self.walk(path)
            .and_then(|n| self.nodes[n.index()].leaf)
            .map(|i| self.doc_ids[i].as_str())
            .ok_or_else(|| Error::Contract(format!("path {path:?} is not a docid leaf")))
    }

    /// Token path (including the final EOS) of a leaf.
    pub fn leaf_path(&self, leaf_index: usize) -> Vec<TokenId> {
        let target = self.leaves[leaf_index];
        let mut path = Vec::new();
        self.find_path(NodeId::ROOT, target, &mut path);
        path
    }

    fn find_path(&self, node: NodeId, target: NodeId, path: &mut Vec<TokenId>) -> bool {
        if node == target {
            return true;
        }
        for &(tok, child) in &self.nodes[node.index()].children {
            // node ids grow along insertion, so a child created after the
            // target cannot lie on its path
            if child > target {
                continue;
            }
            path.push(tok);
            if self.find_path(child, target, path) {
                return true;
            }
            path.pop();
        }
        false
    }

    /// All `(doc_id, path with EOS)` pairs in insertion order.
    pub fn leaves(&self) -> Vec<(&str, Vec<TokenId>)> {
        let mut out = Vec::with_capacity(self.leaf_count());
        let mut path = Vec::new();
        self.collect_leaves(NodeId::ROOT, &mut path, &mut out);
        out.sort_by_key(|(i, _)| *i);
        out.into_iter().map(|(i, p)| (self.doc_ids[i].as_str(), p)).collect()
    }

    fn collect_leaves(&self, node: NodeId, path: &mut Vec<TokenId>, out: &mut Vec<(usize, Vec<TokenId>)>) {
        let n = &self.nodes[node.index()];
        if let Some(i) = n.leaf {
            out.push((i, path.clone()));
        }
        for &(tok, child) in &n.children {
            path.push(tok);
            self.collect_leaves(child, path, out);
            path.pop();
        }
    }

    /// Sorted `docid<TAB>doc_id` lines.
    pub fn dump(&self, vocab: &Vocabulary) -> Result<String> {
        let mut lines = Vec::with_capacity(self.leaf_count());
        for (doc_id, path) in self.leaves() {
            lines.push(format!("{}\t{}", vocab.decode(&path)?.join(" "), doc_id));
        }
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        Ok(out)
    }

    pub fn session(&self) -> TrieSession<'_> {
        TrieSession {
            trie: self,
            live: self.nodes.iter().map(|n| n.leaf_count).collect(),
        }
    }
}

impl Continuations for DocidTrie {
    fn continuations(&self, node: NodeId) -> Vec<(TokenId, NodeId)> {
        self.nodes[node.index()].children.clone()
    }

    fn leaf_index(&self, node: NodeId) -> Option<usize> {
        self.nodes[node.index()].leaf
    }
}

/// A private, mutable view of a shared trie for one decoding session.
#[derive(Debug, Clone)]
pub struct TrieSession<'a> {
    trie: &'a DocidTrie,
    live: Vec<u32>,
}

impl<'a> TrieSession<'a> {
    pub fn trie(&self) -> &'a DocidTrie {
        self.trie
    }

    pub fn live_leaf_count(&self) -> usize {
        self.live[NodeId::ROOT.index()] as usize
    }

    pub fn is_empty(&self) -> bool {
        self.live_leaf_count() == 0
    }

    fn is_live(&self, node: NodeId) -> bool {
        self.live[node.index()] > 0
    }

    fn walk_live(&self, path: &[TokenId]) -> Option<NodeId> {
        path.iter().try_fold(NodeId::ROOT, |node, &tok| {
            self.trie.child(node, tok).filter(|&c| self.is_live(c))
        })
    }

    pub fn valid_next(&self, prefix: &[TokenId]) -> Result<Vec<TokenId>> {
        let node = self
            .walk_live(prefix)
            .filter(|&n| self.is_live(n) && self.trie.nodes[n.index()].leaf.is_none())
            .ok_or_else(|| Error::Contract(format!("prefix {prefix:?} is not a live path in the trie")))?;
        Ok(self.continuations(node).into_iter().map(|(t, _)| t).collect())
    }

    /// Marks the leaf at `path` (EOS-terminated) dead and prunes ancestors
    /// that no longer lead to a live leaf.
    pub fn remove_leaf(&mut self, path: &[TokenId]) -> Result<&'a str> {
        let mut nodes = Vec::with_capacity(path.len() + 1);
        let mut node = NodeId::ROOT;
        nodes.push(node);
        for &tok in path {
            node = self
                .trie
                .child(node, tok)
                .filter(|&c| self.is_live(c))
                .ok_or_else(|| Error::Contract(format!("path {path:?} is not a live leaf")))?;
            nodes.push(node);
        }
        let leaf = self.trie.nodes[node.index()]
            .leaf
            .ok_or_else(|| Error::Contract(format!("path {path:?} is not a live leaf")))?;
        for n in nodes {
            self.live[n.index()] -= 1;
        }
        Ok(&self.trie.doc_ids[leaf])
    }

    pub fn root_child_count(&self) -> usize {
        self.continuations(NodeId::ROOT).len()
    }
}

impl Continuations for TrieSession<'_> {
    fn continuations(&self, node: NodeId) -> Vec<(TokenId, NodeId)> {
        self.trie.nodes[node.index()]
            .children
            .iter()
            .filter(|(_, c)| self.is_live(*c))
            .copied()
            .collect()
    }

    fn leaf_index(&self, node: NodeId) -> Option<usize> {
        self.trie.nodes[node.index()].leaf
    }
}
