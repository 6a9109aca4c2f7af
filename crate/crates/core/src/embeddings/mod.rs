//! Word vectors: the plain-text table format, lookup, cosine similarity and
//! a skip-gram trainer.

mod skipgram;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub use skipgram::{initial_vectors, train_skipgram, train_skipgram_with_losses, SkipgramConfig};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad float {value:?}")]
    BadFloat { line: usize, value: String },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("header declares {declared} rows, file has {found}")]
    RowCountMismatch { declared: usize, found: usize },
    #[error("vector dimension mismatch: {0} vs {1}")]
    VectorMismatch(usize, usize),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("vocabulary is empty after min_count filtering")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows.
    pub fn from_rows<S: Into<String>>(
        dim: usize,
        rows: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        let mut table = Self {
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        };
        for (word, vec) in rows {
            let word = word.into();
            if vec.len() != dim {
                return Err(EmbeddingError::VectorMismatch(dim, vec.len()));
            }
            if table.index.insert(word.clone(), table.vocab.len()).is_some() {
                return Err(EmbeddingError::DuplicateWord(word));
            }
            table.vocab.push(word);
            table.vectors.extend(vec);
        }
        Ok(table)
    }

    pub(crate) fn from_parts(dim: usize, vocab: Vec<String>, vectors: Vec<f64>) -> Self {
        debug_assert_eq!(vocab.len() * dim, vectors.len());
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            dim,
            vocab,
            index,
            vectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact-match lookup.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    /// Exact match, then the lowercased form. Tokens keep their surface case
    /// while most pretrained tables are lowercase.
    pub fn lookup_folded(&self, word: &str) -> Option<&[f64]> {
        self.lookup(word).or_else(|| {
            let lower = word.to_lowercase();
            (lower != word).then(|| self.lookup(&lower)).flatten()
        })
    }

    /// Row for `word` or the zero vector when out of vocabulary.
    pub fn vector_or_zero(&self, word: &str) -> Vec<f64> {
        self.lookup_folded(word)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn parse(contents: &str) -> Result<Self, EmbeddingError> {
        let mut lines = contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| EmbeddingError::MalformedHeader("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (declared, dim) = match fields.as_slice() {
            [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
                (Ok(n), Ok(d)) => (n, d),
                _ => return Err(EmbeddingError::MalformedHeader(header.to_owned())),
            },
            _ => return Err(EmbeddingError::MalformedHeader(header.to_owned())),
        };
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        let mut rows = Vec::with_capacity(declared);
        for (i, line) in lines {
            let line_no = i + 1;
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_owned();
            let values = parts
                .map(|v| {
                    v.parse::<f64>().map_err(|_| EmbeddingError::BadFloat {
                        line: line_no,
                        value: v.to_owned(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            rows.push((word, values));
        }
        if rows.len() != declared {
            return Err(EmbeddingError::RowCountMismatch {
                declared,
                found: rows.len(),
            });
        }
        Self::from_rows(dim, rows)
    }

    /// Serialises with shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, word) in self.vocab.iter().enumerate() {
            out.push_str(word);
            for v in self.row(i) {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    EmbeddingTable::parse(&fs::read_to_string(path)?)
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    fs::write(path, table.to_text())?;
    Ok(())
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, defined as 0 when either vector is zero. The result
/// is clamped to `[-1, 1]` against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::VectorMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
