//! Tweet corpora: JSON Lines ingestion, annotator votes, BIO tags and
//! reproducible train/validation splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{self, CleanConfig};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate tweet id {0:?}")]
    DuplicateId(String),
    #[error("expected exactly 3 annotator votes, got {0}")]
    WrongArity(usize),
    #[error("span {start}..{end} is out of bounds for text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("spans must be sorted and non-overlapping")]
    UnsortedSpans,
    #[error("need at least 5 examples to split, got {0}")]
    TooFewExamples(usize),
    #[error("split manifest references unknown id {0:?}")]
    UnknownId(String),
    #[error("malformed tag sequence")]
    MalformedTags,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Cause,
    Cure,
    Prevent,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Cause, Category::Cure, Category::Prevent];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cause => "cause",
            Category::Cure => "cure",
            Category::Prevent => "prevent",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cause" => Ok(Category::Cause),
            "cure" => Ok(Category::Cure),
            "prevent" => Ok(Category::Prevent),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

/// A token with byte offsets into the cleaned text. Hashtag segments share
/// the span of the hashtag they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn new(text: &str, start: usize, end: usize) -> Self {
        Self {
            text: text.to_owned(),
            start,
            end,
        }
    }

    fn overlaps(&self, span: &Range<usize>) -> bool {
        self.start < span.end && span.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    pub id: String,
    pub raw_text: String,
    pub category: Category,
    pub clean_text: Option<String>,
    pub tokens: Option<Vec<Token>>,
}

impl Tweet {
    pub fn new(id: &str, raw_text: &str, category: Category) -> Self {
        Self {
            id: id.to_owned(),
            raw_text: raw_text.to_owned(),
            category,
            clean_text: None,
            tokens: None,
        }
    }

    /// Fills `clean_text` and `tokens` if they are missing.
    pub fn prepare(&mut self) {
        let clean = self
            .clean_text
            .get_or_insert_with(|| preprocess::clean(&self.raw_text, &CleanConfig::default()));
        if self.tokens.is_none() {
            self.tokens = Some(preprocess::tokenize(clean));
        }
    }

    pub fn clean_text(&self) -> &str {
        self.clean_text.as_deref().unwrap_or("")
    }

    pub fn tokens(&self) -> &[Token] {
        self.tokens.as_deref().unwrap_or(&[])
    }

    pub fn token_texts(&self) -> Vec<&str> {
        self.tokens().iter().map(|t| t.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];

    pub fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::B => "B",
            BioTag::I => "I",
            BioTag::O => "O",
        }
    }
}

impl FromStr for BioTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" | "B-anchor" => Ok(BioTag::B),
            "I" | "I-anchor" => Ok(BioTag::I),
            "O" => Ok(BioTag::O),
            other => Err(format!("unknown BIO tag {other:?}")),
        }
    }
}

/// No `I` directly after `O` or at the start.
pub fn is_well_formed(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &t in tags {
        if t == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = t;
    }
    true
}

/// Token-index ranges of maximal `B I*` runs. A stray `I` opens a new run.
pub fn bio_to_spans(tags: &[BioTag]) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            BioTag::B => {
                if let Some(s) = open.take() {
                    spans.push(s..i);
                }
                open = Some(i);
            }
            BioTag::I => {
                open.get_or_insert(i);
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push(s..i);
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(s..tags.len());
    }
    spans
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedTweet {
    pub tweet: Tweet,
    pub relevant: bool,
    pub anchor_spans: Vec<Range<usize>>,
    pub bio_tags: Option<Vec<BioTag>>,
    /// Ground-truth misinformation flag used by the analysis stage.
    pub misinfo: Option<bool>,
    /// Externally supplied per-token categorical features (e.g. POS tags),
    /// keyed by feature name and aligned with the tokens.
    pub features: BTreeMap<String, Vec<String>>,
}

impl AnnotatedTweet {
    pub fn new(tweet: Tweet, relevant: bool, anchor_spans: Vec<Range<usize>>) -> Self {
        Self {
            tweet,
            relevant,
            anchor_spans,
            bio_tags: None,
            misinfo: None,
            features: BTreeMap::new(),
        }
    }

    /// Cleans and tokenizes the tweet and derives BIO tags from the spans.
    pub fn prepare(&mut self) -> Result<()> {
        self.tweet.prepare();
        if self.bio_tags.is_none() {
            let len = self.tweet.clean_text().len();
            check_spans(&self.anchor_spans, len)?;
            self.bio_tags = Some(spans_to_bio(self.tweet.tokens(), &self.anchor_spans)?);
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.tweet.id
    }

    /// Anchor strings as marked in the cleaned text.
    pub fn anchor_texts(&self) -> Vec<&str> {
        let text = self.tweet.clean_text();
        self.anchor_spans
            .iter()
            .filter_map(|s| text.get(s.clone()))
            .collect()
    }
}

fn check_spans(spans: &[Range<usize>], len: usize) -> Result<()> {
    let mut prev_end = 0;
    for s in spans {
        if s.start >= s.end || s.end > len {
            return Err(CorpusError::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
        if s.start < prev_end {
            return Err(CorpusError::UnsortedSpans);
        }
        prev_end = s.end;
    }
    Ok(())
}

/// Majority of exactly three annotator votes.
pub fn merge_annotations(votes: &[bool]) -> Result<bool> {
    if votes.len() != 3 {
        return Err(CorpusError::WrongArity(votes.len()));
    }
    Ok(votes.iter().filter(|&&v| v).count() >= 2)
}

/// Converts byte spans to BIO tags. Every token overlapping a span is part of
/// it; the first such token is `B`, the rest `I`. A token already claimed by
/// an earlier span stays with that span.
///
/// Spans are bounded by the end of the last token, which is the length of
/// the cleaned text.
pub fn spans_to_bio(tokens: &[Token], spans: &[Range<usize>]) -> Result<Vec<BioTag>> {
    let len = tokens.iter().map(|t| t.end).max().unwrap_or(0);
    check_spans(spans, len)?;
    let mut tags = vec![BioTag::O; tokens.len()];
    let mut claimed = vec![false; tokens.len()];
    for span in spans {
        let mut first = true;
        for (i, tok) in tokens.iter().enumerate() {
            if claimed[i] || !tok.overlaps(span) {
                continue;
            }
            tags[i] = if first { BioTag::B } else { BioTag::I };
            claimed[i] = true;
            first = false;
        }
    }
    Ok(tags)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RelevanceField {
    Single(bool),
    Votes(Vec<bool>),
}

#[derive(Debug, Deserialize)]
struct Record {
    id: Option<String>,
    text: Option<String>,
    category: Option<String>,
    relevant: Option<RelevanceField>,
    anchors: Option<Vec<(usize, usize)>>,
    misinfo: Option<bool>,
    clean_text: Option<String>,
    tokens: Option<Vec<Token>>,
    #[serde(default)]
    features: BTreeMap<String, Vec<String>>,
}

fn parse_record(line_no: usize, line: &str) -> Result<Record> {
    let malformed = |reason: String| CorpusError::MalformedRecord {
        line: line_no,
        reason,
    };
    let rec: Record = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    match (&rec.id, &rec.text, &rec.category) {
        (None, _, _) => Err(malformed("missing \"id\"".into())),
        (Some(id), _, _) if id.is_empty() => Err(malformed("empty \"id\"".into())),
        (_, None, _) => Err(malformed("missing \"text\"".into())),
        (_, _, None) => Err(malformed("missing \"category\"".into())),
        _ => Ok(rec),
    }
}

fn record_lines(contents: &str) -> impl Iterator<Item = (usize, &str)> {
    contents
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn record_to_tweet(line_no: usize, rec: &Record) -> Result<Tweet> {
    let category = rec
        .category
        .as_deref()
        .unwrap_or_default()
        .parse()
        .map_err(|reason| CorpusError::MalformedRecord {
            line: line_no,
            reason,
        })?;
    Ok(Tweet {
        id: rec.id.clone().unwrap_or_default(),
        raw_text: rec.text.clone().unwrap_or_default(),
        category,
        clean_text: rec.clean_text.clone(),
        tokens: rec.tokens.clone(),
    })
}

/// Reads a JSON Lines tweet file. Blank lines are skipped; line numbers in
/// errors are 1-based physical lines.
pub fn load_tweets(path: impl AsRef<Path>) -> Result<Vec<Tweet>> {
    parse_tweets(&fs::read_to_string(path)?)
}

pub fn parse_tweets(contents: &str) -> Result<Vec<Tweet>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in record_lines(contents) {
        let rec = parse_record(line_no, line)?;
        let tweet = record_to_tweet(line_no, &rec)?;
        if !seen.insert(tweet.id.clone()) {
            return Err(CorpusError::DuplicateId(tweet.id));
        }
        out.push(tweet);
    }
    Ok(out)
}

/// Reads tweets with their annotations and prepares them (cleaning,
/// tokenization, BIO tags).
///
/// A missing `"relevant"` field is read as "relevant iff anchors are given".
pub fn load_annotated(path: impl AsRef<Path>) -> Result<Vec<AnnotatedTweet>> {
    parse_annotated(&fs::read_to_string(path)?)
}

pub fn parse_annotated(contents: &str) -> Result<Vec<AnnotatedTweet>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in record_lines(contents) {
        let rec = parse_record(line_no, line)?;
        let tweet = record_to_tweet(line_no, &rec)?;
        if !seen.insert(tweet.id.clone()) {
            return Err(CorpusError::DuplicateId(tweet.id));
        }
        let malformed = |reason: String| CorpusError::MalformedRecord {
            line: line_no,
            reason,
        };
        let spans: Vec<Range<usize>> = rec
            .anchors
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|&(s, e)| s..e)
            .collect();
        let relevant = match &rec.relevant {
            None => !spans.is_empty(),
            Some(RelevanceField::Single(b)) => *b,
            Some(RelevanceField::Votes(v)) => {
                merge_annotations(v).map_err(|e| malformed(e.to_string()))?
            }
        };
        if !relevant && !spans.is_empty() {
            return Err(malformed("non-relevant tweet carries anchors".into()));
        }
        let mut at = AnnotatedTweet::new(tweet, relevant, spans);
        at.misinfo = rec.misinfo;
        at.features = rec.features;
        at.prepare().map_err(|e| malformed(e.to_string()))?;
        if let Some(text) = &at.tweet.clean_text {
            for s in &at.anchor_spans {
                if !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
                    return Err(malformed(format!("anchor {s:?} splits a character")));
                }
            }
        }
        let n_tokens = at.tweet.tokens().len();
        for (name, values) in &at.features {
            if values.len() != n_tokens {
                return Err(malformed(format!(
                    "feature {name:?} has {} values for {n_tokens} tokens",
                    values.len()
                )));
            }
        }
        out.push(at);
    }
    Ok(out)
}

/// 64-bit linear congruential generator (Knuth's MMIX constants). Split
/// shuffles use it so they can be reproduced in any language.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform-ish draw in `0..n` from the high 31 bits of the next state.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() >> 33) % n as u64) as usize
    }

    /// Fisher-Yates: for `i` from `n-1` down to 1, swap `i` with `below(i+1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<AnnotatedTweet>,
    pub val: Vec<AnnotatedTweet>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

impl Split {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            train_ids: self.train.iter().map(|t| t.id().to_owned()).collect(),
            val_ids: self.val.iter().map(|t| t.id().to_owned()).collect(),
        }
    }

    /// Rebuilds a split from a manifest, in manifest order.
    pub fn from_manifest(data: &[AnnotatedTweet], manifest: &SplitManifest) -> Result<Self> {
        let by_id: HashMap<&str, &AnnotatedTweet> = data.iter().map(|t| (t.id(), t)).collect();
        let pick = |ids: &[String]| -> Result<Vec<AnnotatedTweet>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|t| (*t).clone())
                        .ok_or_else(|| CorpusError::UnknownId(id.clone()))
                })
                .collect()
        };
        Ok(Self {
            train: pick(&manifest.train_ids)?,
            val: pick(&manifest.val_ids)?,
            seed: manifest.seed,
        })
    }
}

/// 4:1 train/validation split, stratified by relevance.
///
/// Indices are shuffled once with [`Lcg64`]; walking the shuffled order, an
/// example goes to validation while its class quota is unfilled. The
/// validation set has `floor(n/5)` examples and each class contributes its
/// proportional share rounded half-up.
pub fn split_dataset(data: &[AnnotatedTweet], seed: u64) -> Result<Split> {
    let n = data.len();
    if n < 5 {
        return Err(CorpusError::TooFewExamples(n));
    }
    let val_n = n / 5;
    let n_pos = data.iter().filter(|t| t.relevant).count();
    let n_neg = n - n_pos;
    let val_pos = ((2 * n_pos * val_n + n) / (2 * n)).min(n_pos);
    let val_neg = (val_n - val_pos).min(n_neg);
    let val_pos = val_n - val_neg;

    let mut order: Vec<usize> = (0..n).collect();
    Lcg64::new(seed).shuffle(&mut order);

    let (mut quota_pos, mut quota_neg) = (val_pos, val_neg);
    let mut train = Vec::with_capacity(n - val_n);
    let mut val = Vec::with_capacity(val_n);
    for i in order {
        let t = &data[i];
        let quota = if t.relevant {
            &mut quota_pos
        } else {
            &mut quota_neg
        };
        if *quota > 0 {
            *quota -= 1;
            val.push(t.clone());
        } else {
            train.push(t.clone());
        }
    }
    Ok(Split { train, val, seed })
}
