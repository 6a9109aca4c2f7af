//! Cancer-misinformation pipeline over tweet corpora.
//!
//! The crate is organised along the stages of the pipeline:
//!
//! - [`preprocess`]: cleaning, hashtag segmentation, tokenization, Porter stemming.
//! - [`corpus`]: JSON Lines ingestion, annotator vote merging, BIO conversion, splits.
//! - [`embeddings`]: plain-text word vectors and skip-gram training.
//! - [`neural`]: dense nets, LSTM, attention and optimizers with hand-written gradients.
//! - [`relevance`]: tfidf / tfidf-weighted embedding relevance classifier.
//! - [`tagger`]: CRF and BiLSTM-CRF anchor taggers.
//! - [`cure`]: embedding-similarity detection of proven cures.
//! - [`analysis`]: keyword spread and lexicon-based group comparison.

// index loops read closer to the maths in the gradient code
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod corpus;
pub mod cure;
pub mod embeddings;
pub mod metrics;
pub mod neural;
pub mod persist;
pub mod preprocess;
pub mod relevance;
pub mod tagger;

pub use corpus::{AnnotatedTweet, BioTag, Category, Split, Token, Tweet};
pub use embeddings::EmbeddingTable;
pub use metrics::Metrics;
