//! Keyword spread over extracted anchors and lexicon-based comparison of
//! misinformed versus correct tweets.

mod lexicon;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use lexicon::{lexicon_features, FeatureVector, Lexicon, LexiconKind};
pub use stats::{
    compare_groups, signed_log_odds, t_two_tailed, welch_ttest, GroupComparison, TTest, SIGNIFICANCE,
};

use crate::preprocess::stem;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("samples need at least two values each and some variance")]
    DegenerateSamples,
    #[error("invalid counts: {present} present out of {total}")]
    InvalidCounts { present: usize, total: usize },
    #[error("groups need at least two tweets each (got {misinfo} and {correct})")]
    GroupTooSmall { misinfo: usize, correct: usize },
    #[error("lexicon {name} line {line}: {reason}")]
    MalformedLexicon { name: String, line: usize, reason: String },
}

/// Lowercases, splits a possessive `'s` into its own token, Porter-stems
/// every token and rejoins with single spaces: `"Dog's urine"` becomes
/// `"dog 's urin"`.
pub fn stem_phrase(anchor: &str) -> String {
    let mut out = Vec::new();
    for word in anchor.to_lowercase().split_whitespace() {
        let word = word.replace('\u{2019}', "'");
        match word.strip_suffix("'s").filter(|w| !w.is_empty()) {
            Some(head) => {
                out.push(stem(head));
                out.push("'s".to_owned());
            }
            None => out.push(stem(&word)),
        }
    }
    out.join(" ")
}

/// The `k` most frequent stemmed anchors, ties broken lexicographically.
pub fn top_keywords<S: AsRef<str>>(anchors: &[S], k: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for a in anchors {
        let s = stem_phrase(a.as_ref());
        if !s.is_empty() {
            *counts.entry(s).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Among tweets with an anchor in `top_keywords`, the fraction with an
/// anchor in `misinfo_keywords`. Both sets hold stemmed forms; anchors are
/// stemmed here. Zero when no tweet mentions a top keyword.
pub fn keyword_spread<S: AsRef<str>>(
    tweets: &[Vec<S>],
    top_keywords: &BTreeSet<String>,
    misinfo_keywords: &BTreeSet<String>,
) -> f64 {
    let mut covered = 0usize;
    let mut misinformed = 0usize;
    for anchors in tweets {
        let stems: Vec<String> = anchors.iter().map(|a| stem_phrase(a.as_ref())).collect();
        if stems.iter().any(|s| top_keywords.contains(s)) {
            covered += 1;
            if stems.iter().any(|s| misinfo_keywords.contains(s)) {
                misinformed += 1;
            }
        }
    }
    if covered == 0 {
        0.0
    } else {
        misinformed as f64 / covered as f64
    }
}
