//! Flags cure tweets whose anchors are not close, in embedding space, to a
//! treatment from the proven-cure list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{cosine, EmbeddingTable};

pub const PROVEN_CURES: [&str; 5] = [
    "chemotherapy",
    "radiation therapy",
    "immunotherapy",
    "targeted therapy",
    "hormone therapy",
];

pub const DEFAULT_TAU: f64 = 0.60;

#[derive(Debug, Error, PartialEq)]
pub enum CureError {
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("vector has dim {found}, lexicon has dim {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cure lexicon is empty")]
    EmptyLexicon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CureConfig {
    tau: f64,
}

impl CureConfig {
    pub fn new(tau: f64) -> Result<Self, CureError> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self { tau })
        } else {
            Err(CureError::InvalidThreshold(tau))
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Default for CureConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

/// Cure terms with their vectors: the mean of the known constituent words,
/// or zero when none is known.
#[derive(Debug, Clone, PartialEq)]
pub struct CureLexicon {
    dim: usize,
    terms: Vec<(String, Vec<f64>)>,
}

fn mean_vector<S: AsRef<str>>(words: &[S], emb: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; emb.dim()];
    let mut n = 0;
    for w in words {
        if let Some(v) = emb.lookup_folded(w.as_ref()) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

impl CureLexicon {
    pub fn new<S: AsRef<str>>(terms: &[S], emb: &EmbeddingTable) -> Result<Self, CureError> {
        if terms.is_empty() {
            return Err(CureError::EmptyLexicon);
        }
        let terms = terms
            .iter()
            .map(|t| {
                let t = t.as_ref().trim().to_lowercase();
                let words: Vec<&str> = t.split_whitespace().collect();
                let v = mean_vector(&words, emb).unwrap_or_else(|| vec![0.0; emb.dim()]);
                (t.clone(), v)
            })
            .collect();
        Ok(Self {
            dim: emb.dim(),
            terms,
        })
    }

    pub fn proven(emb: &EmbeddingTable) -> Self {
        Self::new(&PROVEN_CURES, emb).expect("non-empty")
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse_terms(contents: &str) -> Vec<String> {
        contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(t, _)| t.as_str())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Best cosine and the term achieving it (first on ties).
    fn best_match(&self, v: &[f64]) -> Result<(f64, &str), CureError> {
        if v.len() != self.dim {
            return Err(CureError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let mut best = (f64::NEG_INFINITY, "");
        for (term, tv) in &self.terms {
            let c = cosine(v, tv).expect("dims checked");
            if c > best.0 {
                best = (c, term.as_str());
            }
        }
        Ok(best)
    }
}

/// `(s1, s2)`: the highest cosine to any cure term and the threshold.
pub fn cure_score(v: &[f64], lexicon: &CureLexicon, cfg: &CureConfig) -> Result<(f64, f64), CureError> {
    Ok((lexicon.best_match(v)?.0, cfg.tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CureHit {
    /// Token range `start..end`.
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub score: f64,
    pub matched: String,
}

/// Unigrams and in-vocabulary bigrams scoring above tau, best first. A
/// bigram is kept only when it beats both of its words on their own.
pub fn detect_cure_anchor<S: AsRef<str>>(
    tokens: &[S],
    emb: &EmbeddingTable,
    lexicon: &CureLexicon,
    cfg: &CureConfig,
) -> Result<Vec<CureHit>, CureError> {
    let mut unigram = Vec::with_capacity(tokens.len());
    for t in tokens {
        unigram.push(match emb.lookup_folded(t.as_ref()) {
            Some(v) => {
                let (s, m) = lexicon.best_match(v)?;
                Some((s, m.to_owned()))
            }
            None => None,
        });
    }
    let mut hits = Vec::new();
    for (i, u) in unigram.iter().enumerate() {
        if let Some((s, m)) = u {
            if *s > cfg.tau {
                hits.push(CureHit {
                    start: i,
                    end: i + 1,
                    text: tokens[i].as_ref().to_owned(),
                    score: *s,
                    matched: m.clone(),
                });
            }
        }
    }
    for i in 1..tokens.len() {
        let (Some((a, _)), Some((b, _))) = (&unigram[i - 1], &unigram[i]) else {
            continue;
        };
        let v = mean_vector(&[tokens[i - 1].as_ref(), tokens[i].as_ref()], emb).expect("both known");
        let (s, m) = lexicon.best_match(&v)?;
        if s > cfg.tau && s > a.max(*b) {
            hits.push(CureHit {
                start: i - 1,
                end: i + 1,
                text: format!("{} {}", tokens[i - 1].as_ref(), tokens[i].as_ref()),
                score: s,
                matched: m.to_owned(),
            });
        }
    }
    hits.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(x.start.cmp(&y.start))
            .then(x.end.cmp(&y.end))
    });
    Ok(hits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CureVerdict {
    ProvenCurePresent,
    MisinfoCandidate,
}

impl CureVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CureVerdict::ProvenCurePresent => "proven_cure_present",
            CureVerdict::MisinfoCandidate => "misinfo_candidate",
        }
    }
}

/// Misinformation candidate iff no proven-cure-like term is present.
pub fn classify_cure_misinfo<S: AsRef<str>>(
    tokens: &[S],
    emb: &EmbeddingTable,
    lexicon: &CureLexicon,
    cfg: &CureConfig,
) -> Result<CureVerdict, CureError> {
    Ok(if detect_cure_anchor(tokens, emb, lexicon, cfg)?.is_empty() {
        CureVerdict::MisinfoCandidate
    } else {
        CureVerdict::ProvenCurePresent
    })
}
