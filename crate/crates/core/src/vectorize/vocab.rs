use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::tokenize::tokenize;
use super::VectorizeError;
use crate::corpus::DocTree;

/// Token index with per-token document frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_frequency: Vec<u64>,
    n_docs: u64,
}

impl Vocabulary {
    /// Builds from `(token, df)` pairs in index order.
    pub fn from_parts(entries: Vec<(String, u64)>, n_docs: u64) -> Result<Self, VectorizeError> {
        let mut tokens = Vec::with_capacity(entries.len());
        let mut doc_frequency = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (tok, df)) in entries.into_iter().enumerate() {
            if df == 0 || df > n_docs {
                return Err(VectorizeError::VocabFormat {
                    line: i + 2,
                    message: format!("document frequency {df} outside 1..={n_docs}"),
                });
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(VectorizeError::VocabFormat {
                    line: i + 2,
                    message: format!("duplicate token {tok:?}"),
                });
            }
            tokens.push(tok);
            doc_frequency.push(df);
        }
        Ok(Self {
            tokens,
            index,
            doc_frequency,
            n_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn doc_frequency(&self, i: usize) -> u64 {
        self.doc_frequency[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `#ndocs=N` followed by `token<TAB>index<TAB>df` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), VectorizeError> {
        writeln!(w, "#ndocs={}", self.n_docs)?;
        for (i, (t, df)) in self.tokens.iter().zip(&self.doc_frequency).enumerate() {
            writeln!(w, "{t}\t{i}\t{df}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, VectorizeError> {
        let mut lines = r.lines();
        let bad = |line: usize, message: String| VectorizeError::VocabFormat { line, message };
        let header = lines.next().ok_or_else(|| bad(1, "missing #ndocs header".into()))??;
        let n_docs: u64 = header
            .strip_prefix("#ndocs=")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(1, format!("expected #ndocs=N, got {header:?}")))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(lineno, "expected token<TAB>index<TAB>df".into()));
            }
            let idx: usize = parts[1].parse().map_err(|_| bad(lineno, "bad index".into()))?;
            let df: u64 = parts[2]
                .parse()
                .map_err(|_| bad(lineno, "bad document frequency".into()))?;
            if idx != entries.len() {
                return Err(bad(lineno, format!("index {idx} out of sequence")));
            }
            entries.push((parts[0].to_string(), df));
        }
        Self::from_parts(entries, n_docs)
    }
}

/// Keeps the `max_size` tokens with the highest document frequency, ties
/// broken lexicographically. A document's tokens are those of all its leaves.
pub fn build_vocabulary(docs: &[DocTree], max_size: usize) -> Result<Vocabulary, VectorizeError> {
    build_vocabulary_from_tokens(
        &docs
            .par_iter()
            .map(|d| {
                d.leaves()
                    .filter_map(|n| n.text.as_deref())
                    .flat_map(tokenize)
                    .collect()
            })
            .collect::<Vec<Vec<String>>>(),
        max_size,
    )
}

/// Same as [`build_vocabulary`] over pre-tokenized documents.
pub fn build_vocabulary_from_tokens(docs: &[Vec<String>], max_size: usize) -> Result<Vocabulary, VectorizeError> {
    if docs.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let per_doc: Vec<Vec<&str>> = docs
        .par_iter()
        .map(|toks| {
            let set: HashSet<&str> = toks.iter().map(String::as_str).collect();
            let mut v: Vec<&str> = set.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in &per_doc {
        for t in doc {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = df.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_parts(
        ranked.into_iter().map(|(t, d)| (t.to_string(), d)).collect(),
        docs.len() as u64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn truncation_and_tie_break() {
        let v = build_vocabulary_from_tokens(&docs(&["a b", "b c"]), 2).unwrap();
        assert_eq!(v.tokens(), ["b", "a"]);
        assert_eq!((v.doc_frequency(0), v.doc_frequency(1)), (2, 1));
        assert_eq!(v.n_docs(), 2);
        let all = build_vocabulary_from_tokens(&docs(&["a b", "b c"]), 10).unwrap();
        assert_eq!(all.tokens(), ["b", "a", "c"]);
    }

    #[test]
    fn repeated_tokens_count_once_per_document() {
        let v = build_vocabulary_from_tokens(&docs(&["x x x", "y"]), 10).unwrap();
        assert_eq!(v.doc_frequency(v.get("x").unwrap()), 1);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            build_vocabulary_from_tokens(&[], 5),
            Err(VectorizeError::EmptyCorpus)
        ));
    }

    #[test]
    fn file_round_trip() {
        let v = build_vocabulary_from_tokens(&docs(&["trial halted", "trial 250 slow", "halted"]), 10).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#ndocs=3\n"));
        assert_eq!(Vocabulary::read(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn rejects_inconsistent_files() {
        assert!(Vocabulary::read("a\t0\t1\n".as_bytes()).is_err());
        assert!(Vocabulary::read("#ndocs=2\na\t1\t1\n".as_bytes()).is_err());
        assert!(Vocabulary::read("#ndocs=2\na\t0\t3\n".as_bytes()).is_err());
        assert!(Vocabulary::read("#ndocs=2\na\t0\t0\n".as_bytes()).is_err());
    }
}
