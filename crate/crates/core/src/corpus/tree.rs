//! Parsed hierarchical documents.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;
use crate::fields::Field;

/// Binary document class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    /// Completed, low risk.
    Completed = 0,
    /// Terminated, withdrawn or suspended.
    Terminated = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Terminated
        } else {
            Label::Completed
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Completed),
            1 => Ok(Label::Terminated),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub index: usize,
    pub field_name: String,
    pub parent: Option<usize>,
    /// Present exactly on leaves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.text.is_some()
    }
}

/// A document as a rooted tree of named nodes with text on the leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTree {
    pub doc_id: String,
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Parses a JSON document whose root is an object.
///
/// Object keys become nodes named after the key. String terminals become
/// leaves with that text, numbers and booleans are stringified, `null` and
/// empty containers become empty leaves. Array elements become children of
/// the array's node and share its key as their name.
pub fn parse_document(raw: &[u8], doc_id: &str) -> Result<DocTree, CorpusError> {
    let value: Value = serde_json::from_slice(raw).map_err(|e| CorpusError::Json {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    from_value(&value, doc_id)
}

pub(crate) fn byte_offset(raw: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = raw
        .split_inclusive(|&b| b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum::<usize>();
    (line_start + column.saturating_sub(1)).min(raw.len())
}

pub fn from_value(value: &Value, doc_id: &str) -> Result<DocTree, CorpusError> {
    let Value::Object(map) = value else {
        return Err(CorpusError::NotAnObject);
    };
    if map.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let mut nodes = vec![TreeNode {
        index: 0,
        field_name: String::new(),
        parent: None,
        text: None,
    }];
    for (key, child) in map {
        push_value(&mut nodes, 0, key, child);
    }
    Ok(DocTree {
        doc_id: doc_id.to_string(),
        nodes,
        root: 0,
        label: None,
    })
}

fn push_value(nodes: &mut Vec<TreeNode>, parent: usize, name: &str, value: &Value) {
    let index = nodes.len();
    let text = match value {
        Value::Object(m) if !m.is_empty() => None,
        Value::Array(a) if !a.is_empty() => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => Some(String::new()),
    };
    nodes.push(TreeNode {
        index,
        field_name: name.to_string(),
        parent: Some(parent),
        text,
    });
    match value {
        Value::Object(m) => {
            for (k, v) in m {
                push_value(nodes, index, k, v);
            }
        }
        Value::Array(items) => {
            for v in items {
                push_value(nodes, index, name, v);
            }
        }
        _ => {}
    }
}

impl DocTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for n in &self.nodes {
            if let Some(p) = n.parent {
                children[p].push(n.index);
            }
        }
        children
    }

    pub fn depths(&self) -> Vec<usize> {
        let children = self.children();
        let mut depth = vec![0; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                stack.push(c);
            }
        }
        depth
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Slash-joined field names from below the root to every node.
    ///
    /// When several siblings share a name (array elements), each segment
    /// gets a `[k]` ordinal. The root's path is the empty string.
    pub fn paths(&self) -> Vec<String> {
        let children = self.children();
        let mut paths = vec![String::new(); self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for &c in &children[u] {
                *counts.entry(self.nodes[c].field_name.as_str()).or_default() += 1;
            }
            let mut seen: HashMap<&str, usize> = HashMap::new();
            for &c in &children[u] {
                let name = self.nodes[c].field_name.as_str();
                let segment = if counts[name] > 1 {
                    let k = seen.entry(name).or_default();
                    let s = format!("{name}[{k}]");
                    *k += 1;
                    s
                } else {
                    name.to_string()
                };
                paths[c] = if paths[u].is_empty() {
                    segment
                } else {
                    format!("{}/{}", paths[u], segment)
                };
                stack.push(c);
            }
        }
        paths
    }

    /// The shallowest node naming each canonical module, in canonical order.
    pub fn field_nodes(&self) -> [Option<usize>; crate::fields::N_FIELDS] {
        let depth = self.depths();
        let mut best: [Option<usize>; crate::fields::N_FIELDS] = [None; crate::fields::N_FIELDS];
        for n in &self.nodes {
            if n.index == self.root {
                continue;
            }
            if let Some(f) = Field::from_key(&n.field_name) {
                let slot = &mut best[f.slot()];
                match *slot {
                    Some(prev) if depth[prev] <= depth[n.index] => {}
                    _ => *slot = Some(n.index),
                }
            }
        }
        best
    }

    /// Leaf indices in the subtree rooted at `node`, in index order.
    pub fn subtree_leaves(&self, node: usize) -> Vec<usize> {
        let children = self.children();
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(u) = stack.pop() {
            if self.nodes[u].is_leaf() {
                out.push(u);
            }
            stack.extend(children[u].iter().rev());
        }
        out.sort_unstable();
        out
    }

    /// Space-joined text of the leaves below `node`.
    pub fn subtree_text(&self, node: usize) -> String {
        self.subtree_leaves(node)
            .into_iter()
            .filter_map(|i| self.nodes[i].text.as_deref())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Checks structural invariants: dense indices, single root, acyclic
    /// parent links, text exactly on leaves.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let n = self.nodes.len();
        let bad = |msg: String| CorpusError::InvalidTree {
            doc_id: self.doc_id.clone(),
            message: msg,
        };
        if n == 0 {
            return Err(bad("no nodes".into()));
        }
        if self.root >= n {
            return Err(bad(format!("root {} out of range", self.root)));
        }
        let mut has_child = vec![false; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.index != i {
                return Err(bad(format!("node at position {i} has index {}", node.index)));
            }
            match node.parent {
                None if i != self.root => return Err(bad(format!("node {i} has no parent"))),
                Some(_) if i == self.root => return Err(bad("root has a parent".into())),
                Some(p) if p >= n => return Err(bad(format!("node {i} parent {p} out of range"))),
                Some(p) => has_child[p] = true,
                None => {}
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if has_child[i] == node.text.is_some() {
                return Err(bad(format!("node {i}: text must be present exactly on leaves")));
            }
            // every walk towards the root must terminate within n steps
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.nodes[cur].parent {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(bad(format!("cycle through node {i}")));
                }
            }
        }
        Ok(())
    }
}

/// Writes one JSON document per line.
pub fn write_trees<W: Write>(mut w: W, trees: &[DocTree]) -> Result<(), CorpusError> {
    for t in trees {
        serde_json::to_writer(&mut w, t).map_err(|e| CorpusError::Serialize(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trees<R: BufRead>(r: R) -> Result<Vec<DocTree>, CorpusError> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tree: DocTree = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        tree.validate()?;
        out.push(tree);
    }
    Ok(out)
}
