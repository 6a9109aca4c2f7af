//! Medical-relevance classification: tfidf or tfidf-weighted embedding
//! sentence vectors fed to a 1024/512/256 ReLU network with a sigmoid head.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::corpus::{AnnotatedTweet, Split, Tweet};
use crate::embeddings::EmbeddingTable;
use crate::metrics::{evaluate_classifier, Metrics};
use crate::neural::{bce_loss, DenseNet, NeuralError, Optimizer, OutputActivation, Params, TrainConfig};
use crate::persist::{ParamFile, PersistError};
use crate::preprocess;

pub const DEFAULT_HIDDEN: [usize; 3] = [1024, 512, 256];
pub const ARCH: &str = "relevance-ffn";

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("cannot fit tfidf on an empty corpus")]
    EmptyCorpus,
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("weighted mode needs an embedding table")]
    MissingEmbeddings,
    #[error("embedding table has dim {found}, model expects {expected}")]
    EmbeddingDimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfidfModel {
    fn from_parts(vocab: Vec<String>, idf: Vec<f64>, doc_count: usize) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            vocab,
            index,
            idf,
            doc_count,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn column(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn idf(&self, word: &str) -> Option<f64> {
        self.column(word).map(|c| self.idf[c])
    }

    /// Unnormalised `count(w) * idf(w)` per known column.
    pub fn raw_weights<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeMap<usize, f64> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(c) = self.column(t.as_ref()) {
                *counts.entry(c).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|(c, n)| (c, n as f64 * self.idf[c]))
            .collect()
    }

    /// L2-normalised sparse tfidf vector as sorted `(column, value)` pairs.
    pub fn vector<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(usize, f64)> {
        let raw = self.raw_weights(tokens);
        let norm = raw.values().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Vec::new();
        }
        raw.into_iter().map(|(c, v)| (c, v / norm)).collect()
    }

    pub fn dense_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size()];
        for (c, v) in self.vector(tokens) {
            out[c] = v;
        }
        out
    }
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`. Columns follow sorted word order.
pub fn fit_tfidf<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<TfidfModel, RelevanceError> {
    if docs.is_empty() {
        return Err(RelevanceError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let uniq: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for w in uniq {
            *df.entry(w).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let (vocab, idf) = df
        .into_iter()
        .map(|(w, d)| (w.to_owned(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    Ok(TfidfModel::from_parts(vocab, idf, docs.len()))
}

pub fn tfidf_vector<S: AsRef<str>>(model: &TfidfModel, tokens: &[S]) -> Vec<(usize, f64)> {
    model.vector(tokens)
}

/// Tfidf-weighted mean of the embeddings of tokens known to both models;
/// the zero vector when no token qualifies.
pub fn sentence_vector<S: AsRef<str>>(
    tfidf: &TfidfModel,
    embeddings: &EmbeddingTable,
    tokens: &[S],
) -> Vec<f64> {
    let mut out = vec![0.0; embeddings.dim()];
    let mut total = 0.0;
    for (col, weight) in tfidf.raw_weights(tokens) {
        if let Some(v) = embeddings.lookup_folded(&tfidf.vocab[col]) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += weight * x;
            }
            total += weight;
        }
    }
    if total > 0.0 {
        out.iter_mut().for_each(|o| *o /= total);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceMode {
    Tfidf,
    Weighted,
}

impl RelevanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceMode::Tfidf => "tfidf",
            RelevanceMode::Weighted => "weighted",
        }
    }
}

impl fmt::Display for RelevanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tfidf" => Ok(RelevanceMode::Tfidf),
            "weighted" | "tfidf_weighted_embedding" => Ok(RelevanceMode::Weighted),
            other => Err(format!("unknown relevance mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub decision_threshold: f64,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: TrainConfig::default(),
            decision_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct RelevanceModel {
    pub mode: RelevanceMode,
    pub tfidf: TfidfModel,
    pub embeddings: Option<Arc<EmbeddingTable>>,
    pub net: DenseNet,
    pub decision_threshold: f64,
}

fn tweet_tokens(tweet: &Tweet) -> Vec<String> {
    match &tweet.tokens {
        Some(t) => t.iter().map(|t| t.text.clone()).collect(),
        None => {
            let clean = tweet.clean_text.clone().unwrap_or_else(|| {
                preprocess::clean(&tweet.raw_text, &preprocess::CleanConfig::default())
            });
            preprocess::tokenize(&clean).into_iter().map(|t| t.text).collect()
        }
    }
}

impl RelevanceModel {
    pub fn features<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        match (self.mode, &self.embeddings) {
            (RelevanceMode::Weighted, Some(emb)) => sentence_vector(&self.tfidf, emb, tokens),
            _ => self.tfidf.dense_vector(tokens),
        }
    }

    pub fn probability<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.net
            .forward(&self.features(tokens))
            .expect("feature width matches the network")[0]
    }

    /// `(probability, label)`; ties at the threshold are positive.
    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> (f64, bool) {
        let p = self.probability(tokens);
        (p, p >= self.decision_threshold)
    }

    pub fn predict(&self, tweet: &Tweet) -> (f64, bool) {
        self.predict_tokens(&tweet_tokens(tweet))
    }

    pub fn evaluate(&self, data: &[AnnotatedTweet]) -> Metrics {
        let preds: Vec<bool> = data.iter().map(|t| self.predict(&t.tweet).1).collect();
        let golds: Vec<bool> = data.iter().map(|t| t.relevant).collect();
        evaluate_classifier(&preds, &golds).expect("equal lengths")
    }

    pub fn to_param_file(&self, seed: u64) -> ParamFile {
        let meta = json!({
            "mode": self.mode.as_str(),
            "decision_threshold": self.decision_threshold,
            "layer_dims": self.net.layer_dims(),
            "vocab": self.tfidf.vocab,
            "doc_count": self.tfidf.doc_count,
            "seed": seed,
        });
        let mut file = ParamFile::new(ARCH, &self.net, meta);
        file.push_tensor("tfidf.idf", self.tfidf.idf.len(), 1, self.tfidf.idf.clone());
        file
    }

    pub fn from_param_file(
        file: &ParamFile,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self, RelevanceError> {
        file.expect_arch(ARCH)?;
        let corrupt = |what: &str| PersistError::CorruptFile(format!("bad meta field {what}"));
        let meta = &file.meta;
        let mode: RelevanceMode = meta["mode"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("mode"))?;
        let threshold = meta["decision_threshold"]
            .as_f64()
            .ok_or_else(|| corrupt("decision_threshold"))?;
        let dims: Vec<usize> = serde_json::from_value(meta["layer_dims"].clone())
            .map_err(|_| corrupt("layer_dims"))?;
        let vocab: Vec<String> =
            serde_json::from_value(meta["vocab"].clone()).map_err(|_| corrupt("vocab"))?;
        let doc_count = meta["doc_count"].as_u64().ok_or_else(|| corrupt("doc_count"))? as usize;
        if dims.len() < 2 {
            return Err(corrupt("layer_dims").into());
        }
        let idf = file.tensor("tfidf.idf")?.data.clone();
        if idf.len() != vocab.len() {
            return Err(corrupt("vocab").into());
        }
        let mut net = DenseNet::zeros(&dims, OutputActivation::Sigmoid);
        file.load_into(&mut net)?;
        let embeddings = match mode {
            RelevanceMode::Tfidf => None,
            RelevanceMode::Weighted => {
                let emb = embeddings.ok_or(RelevanceError::MissingEmbeddings)?;
                if emb.dim() != dims[0] {
                    return Err(RelevanceError::EmbeddingDimMismatch {
                        expected: dims[0],
                        found: emb.dim(),
                    });
                }
                Some(emb)
            }
        };
        Ok(Self {
            mode,
            tfidf: TfidfModel::from_parts(vocab, idf, doc_count),
            embeddings,
            net,
            decision_threshold: threshold,
        })
    }
}

/// Trains the sigmoid network on precomputed feature vectors and returns the
/// checkpoint with the best validation F1 (the last epoch when there is no
/// validation data).
pub fn train_binary_classifier(
    train: &[(Vec<f64>, bool)],
    val: &[(Vec<f64>, bool)],
    hidden: &[usize],
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<(DenseNet, Vec<EpochStats>), RelevanceError> {
    let n_pos = train.iter().filter(|(_, y)| *y).count();
    if train.is_empty() || n_pos == 0 || n_pos == train.len() {
        return Err(RelevanceError::SingleClassTrainingSet);
    }
    let input_dim = train[0].0.len();
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = DenseNet::new(&dims, OutputActivation::Sigmoid, &mut rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, DenseNet)> = None;
    let mut stale = 0;

    let score = |net: &DenseNet, data: &[(Vec<f64>, bool)]| -> Result<Metrics, NeuralError> {
        let mut preds = Vec::with_capacity(data.len());
        for (x, _) in data {
            preds.push(net.forward(x)?[0] >= threshold);
        }
        let golds: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
        Ok(evaluate_classifier(&preds, &golds).expect("equal lengths"))
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grad = net.zeroed();
            for &i in batch {
                let (x, y) = &train[i];
                let y = f64::from(u8::from(*y));
                let trace = net.forward_trace(x)?;
                let p = trace.output[0];
                total_loss += bce_loss(p, y);
                net.backward(&trace, &[p - y], &mut grad);
            }
            let mut mean = grad.zeroed();
            mean.add_scaled(&grad, 1.0 / batch.len() as f64);
            opt.step(&mut net, &mean)?;
        }
        let train_metrics = score(&net, train)?;
        let val_f1 = if val.is_empty() {
            train_metrics.f1
        } else {
            score(&net, val)?.f1
        };
        history.push(EpochStats {
            epoch,
            train_loss: total_loss / train.len() as f64,
            train_accuracy: train_metrics.accuracy,
            val_f1,
        });
        if val.is_empty() {
            best = Some((val_f1, net.clone()));
            continue;
        }
        if best.as_ref().is_none_or(|(f, _)| val_f1 > *f) {
            best = Some((val_f1, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let net = best.map(|(_, n)| n).unwrap_or(net);
    Ok((net, history))
}

/// Fits tfidf on the training tweets, builds features per `mode` and trains
/// the classifier.
pub fn train_relevance(
    split: &Split,
    mode: RelevanceMode,
    embeddings: Option<Arc<EmbeddingTable>>,
    cfg: &RelevanceConfig,
) -> Result<(RelevanceModel, Vec<EpochStats>), RelevanceError> {
    let train_tokens: Vec<Vec<String>> = split.train.iter().map(|t| tweet_tokens(&t.tweet)).collect();
    let tfidf = fit_tfidf(&train_tokens)?;
    let embeddings = match mode {
        RelevanceMode::Tfidf => None,
        RelevanceMode::Weighted => Some(embeddings.ok_or(RelevanceError::MissingEmbeddings)?),
    };
    let mut model = RelevanceModel {
        mode,
        tfidf,
        embeddings,
        net: DenseNet::zeros(&[1, 1], OutputActivation::Sigmoid),
        decision_threshold: cfg.decision_threshold,
    };
    let featurize = |data: &[AnnotatedTweet], model: &RelevanceModel| -> Vec<(Vec<f64>, bool)> {
        data.iter()
            .map(|t| (model.features(&tweet_tokens(&t.tweet)), t.relevant))
            .collect()
    };
    let train = featurize(&split.train, &model);
    let val = featurize(&split.val, &model);
    let (net, history) =
        train_binary_classifier(&train, &val, &cfg.hidden, &cfg.train, cfg.decision_threshold)?;
    model.net = net;
    Ok((model, history))
}
