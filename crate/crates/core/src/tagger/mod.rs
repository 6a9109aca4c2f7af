//! BIO anchor tagging: a CRF over emission scores produced from frozen word
//! embeddings, optionally passed through token attention and a BiLSTM.

pub mod crf;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use crf::{crf_log_partition, crf_nll, crf_nll_backward, path_score, viterbi_decode, CrfLayer, NUM_TAGS};

use crate::corpus::{bio_to_spans, is_well_formed, AnnotatedTweet, BioTag, Split};
use crate::embeddings::EmbeddingTable;
use crate::metrics::{Metrics, SpanScores};
use crate::neural::{
    check_dim, logsumexp, prefixed, prefixed_mut, softmax, AttentionNet, AttentionTrace, BiLstm, BiLstmTrace,
    Dense, Matrix, NeuralError, Optimizer, Params, SelfAttentionTrace, TrainConfig,
};
use crate::persist::{ParamFile, PersistError};

pub const ARCH: &str = "bio-tagger";
pub const DEFAULT_LSTM_HIDDEN: usize = 64;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty token sequence")]
    EmptySequence,
    #[error("emission rows must have {NUM_TAGS} scores, found {0}")]
    EmissionWidth(usize),
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("tag sequence is not well formed (I after O or at the start)")]
    MalformedTags,
    #[error("example {0} has no BIO tags")]
    MissingTags(String),
    #[error("no training examples")]
    EmptyTrainingSet,
    #[error("predicted and gold corpora differ in size: {pred} vs {gold}")]
    CorpusMismatch { pred: usize, gold: usize },
    #[error("feature {name:?} has {found} values for {tokens} tokens")]
    FeatureLength { name: String, found: usize, tokens: usize },
    #[error("embedding table has dim {found}, model expects {expected}")]
    EmbeddingDimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaggerVariant {
    CrfOnly,
    BilstmSoftmax,
    BilstmCrf,
    AttnBilstmCrf,
    /// Dot-product self-attention in place of token gating.
    SelfAttnBilstmCrf,
}

impl TaggerVariant {
    pub const ALL: [TaggerVariant; 5] = [
        TaggerVariant::CrfOnly,
        TaggerVariant::BilstmSoftmax,
        TaggerVariant::BilstmCrf,
        TaggerVariant::AttnBilstmCrf,
        TaggerVariant::SelfAttnBilstmCrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaggerVariant::CrfOnly => "crf",
            TaggerVariant::BilstmSoftmax => "bilstm-softmax",
            TaggerVariant::BilstmCrf => "bilstm-crf",
            TaggerVariant::AttnBilstmCrf => "attn-bilstm-crf",
            TaggerVariant::SelfAttnBilstmCrf => "self-attn-bilstm-crf",
        }
    }

    /// Row label for evaluation tables.
    pub fn display_name(self) -> &'static str {
        match self {
            TaggerVariant::CrfOnly => "CRF",
            TaggerVariant::BilstmSoftmax => "BiLSTM-Softmax",
            TaggerVariant::BilstmCrf => "BiLSTM-CRF",
            TaggerVariant::AttnBilstmCrf => "Simple attention BiLSTM-CRF",
            TaggerVariant::SelfAttnBilstmCrf => "Self attention BiLSTM-CRF",
        }
    }

    pub fn has_lstm(self) -> bool {
        self != TaggerVariant::CrfOnly
    }

    pub fn has_crf(self) -> bool {
        self != TaggerVariant::BilstmSoftmax
    }

    pub fn has_attention(self) -> bool {
        matches!(self, TaggerVariant::AttnBilstmCrf | TaggerVariant::SelfAttnBilstmCrf)
    }
}

impl fmt::Display for TaggerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaggerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('_', "-");
        match norm.as_str() {
            "crf" | "crf-only" => Ok(TaggerVariant::CrfOnly),
            "bilstm-softmax" => Ok(TaggerVariant::BilstmSoftmax),
            "bilstm-crf" => Ok(TaggerVariant::BilstmCrf),
            "attn-bilstm-crf" => Ok(TaggerVariant::AttnBilstmCrf),
            "self-attn-bilstm-crf" => Ok(TaggerVariant::SelfAttnBilstmCrf),
            _ => Err(format!("unknown tagger variant {s:?}")),
        }
    }
}

/// One-hot layout of the external per-token features (POS, dependency tags).
/// Values unseen at training time encode as all zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub features: Vec<(String, Vec<String>)>,
}

impl FeatureSpec {
    pub fn fit(names: &[String], data: &[AnnotatedTweet]) -> Self {
        let features = names
            .iter()
            .map(|name| {
                let values: BTreeSet<&str> = data
                    .iter()
                    .filter_map(|t| t.features.get(name))
                    .flatten()
                    .map(String::as_str)
                    .collect();
                (name.clone(), values.into_iter().map(str::to_owned).collect())
            })
            .collect();
        Self { features }
    }

    pub fn width(&self) -> usize {
        self.features.iter().map(|(_, v)| v.len()).sum()
    }

    fn encode(
        &self,
        features: &BTreeMap<String, Vec<String>>,
        tokens: usize,
    ) -> Result<Vec<Vec<f64>>, TaggerError> {
        let mut rows = vec![vec![0.0; self.width()]; tokens];
        let mut offset = 0;
        for (name, values) in &self.features {
            if let Some(col) = features.get(name) {
                if col.len() != tokens {
                    return Err(TaggerError::FeatureLength {
                        name: name.clone(),
                        found: col.len(),
                        tokens,
                    });
                }
                for (row, v) in rows.iter_mut().zip(col) {
                    if let Ok(k) = values.binary_search(v) {
                        row[offset + k] = 1.0;
                    }
                }
            }
            offset += values.len();
        }
        Ok(rows)
    }
}

/// Trainable part of a tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerNet {
    pub variant: TaggerVariant,
    pub attention: Option<AttentionNet>,
    pub bilstm: Option<BiLstm>,
    pub projection: Dense,
    pub crf: Option<CrfLayer>,
}

#[derive(Debug, Clone)]
enum AttnTrace {
    Gate(AttentionTrace),
    SelfAttn(SelfAttentionTrace),
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TaggerTrace {
    attn: Option<AttnTrace>,
    lstm: Option<BiLstmTrace>,
    encoded: Vec<Vec<f64>>,
    pub emissions: Vec<Vec<f64>>,
}

fn softmax_ce(emissions: &[Vec<f64>], gold: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(emissions.len());
    for (row, &g) in emissions.iter().zip(gold) {
        let mut p = softmax(row);
        loss += logsumexp(row) - row[g];
        p[g] -= 1.0;
        grads.push(p);
    }
    (loss, grads)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Rewrites each `I` that follows `O` (or opens the sequence) to `B`.
pub fn repair_tags(tags: &mut [BioTag]) {
    let mut prev = BioTag::O;
    for t in tags.iter_mut() {
        if *t == BioTag::I && prev == BioTag::O {
            *t = BioTag::B;
        }
        prev = *t;
    }
}

impl TaggerNet {
    pub fn new(variant: TaggerVariant, input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let attention = variant.has_attention().then(|| AttentionNet::new(input_dim, rng));
        let bilstm = variant.has_lstm().then(|| BiLstm::new(input_dim, hidden, rng));
        let enc = if variant.has_lstm() { 2 * hidden } else { input_dim };
        let projection = Dense::new(enc, NUM_TAGS, rng);
        let crf = variant.has_crf().then(|| CrfLayer::new(rng));
        Self {
            variant,
            attention,
            bilstm,
            projection,
            crf,
        }
    }

    pub fn zeros(variant: TaggerVariant, input_dim: usize, hidden: usize) -> Self {
        let mut net = Self::new(variant, input_dim, hidden, &mut ChaCha8Rng::seed_from_u64(0));
        for (_, m) in net.params_mut() {
            m.fill(0.0);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        match (&self.attention, &self.bilstm) {
            (Some(a), _) => a.input_dim(),
            (None, Some(b)) => b.fwd.input_dim(),
            (None, None) => self.projection.input_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.bilstm.as_ref().map_or(0, |b| b.fwd.hidden_dim())
    }

    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<TaggerTrace, TaggerError> {
        if inputs.is_empty() {
            return Err(TaggerError::EmptySequence);
        }
        let (attn, mut seq) = match &self.attention {
            Some(att) if self.variant == TaggerVariant::SelfAttnBilstmCrf => {
                let tr = att.self_apply_trace(inputs)?;
                let out = tr.outputs.clone();
                (Some(AttnTrace::SelfAttn(tr)), out)
            }
            Some(att) => {
                let tr = att.apply_trace(inputs)?;
                let out = tr.outputs.clone();
                (Some(AttnTrace::Gate(tr)), out)
            }
            None => (None, inputs.to_vec()),
        };
        let lstm = match &self.bilstm {
            Some(b) => {
                let tr = b.encode_trace(&seq)?;
                seq = tr.outputs.clone();
                Some(tr)
            }
            None => None,
        };
        for x in &seq {
            check_dim(self.projection.input_dim(), x.len())?;
        }
        let emissions = seq.iter().map(|x| self.projection.forward(x)).collect();
        Ok(TaggerTrace {
            attn,
            lstm,
            encoded: seq,
            emissions,
        })
    }

    pub fn emission_scores(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TaggerError> {
        Ok(self.forward(inputs)?.emissions)
    }

    fn check_gold(inputs: &[Vec<f64>], gold: &[BioTag]) -> Result<(), TaggerError> {
        if inputs.len() != gold.len() {
            return Err(TaggerError::LengthMismatch {
                tokens: inputs.len(),
                tags: gold.len(),
            });
        }
        Ok(())
    }

    /// CRF negative log-likelihood, or summed token cross-entropy for the
    /// softmax variant.
    pub fn loss(&self, inputs: &[Vec<f64>], gold: &[BioTag]) -> Result<f64, TaggerError> {
        Self::check_gold(inputs, gold)?;
        let trace = self.forward(inputs)?;
        match &self.crf {
            Some(crf) => crf_nll(&trace.emissions, crf, gold),
            None => {
                let idx: Vec<usize> = gold.iter().map(|t| t.index()).collect();
                Ok(softmax_ce(&trace.emissions, &idx).0)
            }
        }
    }

    /// Loss of one sequence; parameter gradients are added into `grad`.
    pub fn loss_and_grad(
        &self,
        inputs: &[Vec<f64>],
        gold: &[BioTag],
        grad: &mut TaggerNet,
    ) -> Result<f64, TaggerError> {
        Self::check_gold(inputs, gold)?;
        let trace = self.forward(inputs)?;
        let (loss, d_em) = match (&self.crf, &mut grad.crf) {
            (Some(crf), Some(g)) => crf_nll_backward(&trace.emissions, crf, gold, g)?,
            _ => {
                let idx: Vec<usize> = gold.iter().map(|t| t.index()).collect();
                softmax_ce(&trace.emissions, &idx)
            }
        };
        let d_enc: Vec<Vec<f64>> = trace
            .encoded
            .iter()
            .zip(&d_em)
            .map(|(x, d)| self.projection.backward(x, d, &mut grad.projection))
            .collect();
        let d_att = match (&self.bilstm, &mut grad.bilstm, &trace.lstm) {
            (Some(b), Some(g), Some(tr)) => b.backward(tr, &d_enc, g),
            _ => d_enc,
        };
        match (&self.attention, &mut grad.attention, &trace.attn) {
            (Some(a), Some(g), Some(AttnTrace::Gate(tr))) => a.backward(tr, &d_att, g),
            (Some(a), Some(g), Some(AttnTrace::SelfAttn(tr))) => a.self_backward(tr, &d_att, g),
            _ => {}
        }
        Ok(loss)
    }

    /// Viterbi for CRF variants; per-token argmax plus repair otherwise.
    pub fn decode(&self, inputs: &[Vec<f64>]) -> Result<Vec<BioTag>, TaggerError> {
        let em = self.emission_scores(inputs)?;
        match &self.crf {
            Some(crf) => viterbi_decode(&em, crf),
            None => {
                let mut tags: Vec<BioTag> = em
                    .iter()
                    .map(|row| BioTag::from_index(argmax(row)).expect("three scores"))
                    .collect();
                repair_tags(&mut tags);
                Ok(tags)
            }
        }
    }
}

impl Params for TaggerNet {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut p = Vec::new();
        if let Some(a) = &self.attention {
            p.extend(prefixed("attention", a.params()));
        }
        if let Some(b) = &self.bilstm {
            p.extend(prefixed("bilstm", b.params()));
        }
        p.extend(prefixed("projection", self.projection.params()));
        if let Some(c) = &self.crf {
            p.extend(prefixed("crf", c.params()));
        }
        p
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut p = Vec::new();
        if let Some(a) = &mut self.attention {
            p.extend(prefixed_mut("attention", a.params_mut()));
        }
        if let Some(b) = &mut self.bilstm {
            p.extend(prefixed_mut("bilstm", b.params_mut()));
        }
        p.extend(prefixed_mut("projection", self.projection.params_mut()));
        if let Some(c) = &mut self.crf {
            p.extend(prefixed_mut("crf", c.params_mut()));
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerConfig {
    pub hidden: usize,
    /// Names of per-token features to one-hot into the input.
    pub features: Vec<String>,
    pub train: TrainConfig,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_LSTM_HIDDEN,
            features: Vec::new(),
            train: TrainConfig {
                epochs: 50,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaggerModel {
    pub embeddings: Arc<EmbeddingTable>,
    pub features: FeatureSpec,
    pub net: TaggerNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_span_f1: f64,
}

impl TaggerModel {
    pub fn variant(&self) -> TaggerVariant {
        self.net.variant
    }

    /// Embedding (zero when out of vocabulary) followed by the one-hot
    /// features, per token.
    pub fn inputs<S: AsRef<str>>(
        &self,
        tokens: &[S],
        features: &BTreeMap<String, Vec<String>>,
    ) -> Result<Vec<Vec<f64>>, TaggerError> {
        let extra = self.features.encode(features, tokens.len())?;
        Ok(tokens
            .iter()
            .zip(extra)
            .map(|(tok, f)| {
                let mut row = self.embeddings.vector_or_zero(tok.as_ref());
                row.extend(f);
                row
            })
            .collect())
    }

    fn example_inputs(&self, t: &AnnotatedTweet) -> Result<Vec<Vec<f64>>, TaggerError> {
        self.inputs(&t.tweet.token_texts(), &t.features)
    }

    pub fn emission_scores<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Vec<f64>>, TaggerError> {
        self.net.emission_scores(&self.inputs(tokens, &BTreeMap::new())?)
    }

    pub fn tag_tokens<S: AsRef<str>>(
        &self,
        tokens: &[S],
        features: &BTreeMap<String, Vec<String>>,
    ) -> Result<Vec<BioTag>, TaggerError> {
        self.net.decode(&self.inputs(tokens, features)?)
    }

    /// Tags a prepared tweet.
    pub fn tag(&self, tweet: &AnnotatedTweet) -> Result<Vec<BioTag>, TaggerError> {
        self.net.decode(&self.example_inputs(tweet)?)
    }

    pub fn evaluate(&self, data: &[AnnotatedTweet]) -> Result<TaggingReport, TaggerError> {
        let mut preds = Vec::with_capacity(data.len());
        let mut golds = Vec::with_capacity(data.len());
        for t in data {
            let gold = t.bio_tags.clone().ok_or_else(|| TaggerError::MissingTags(t.id().to_owned()))?;
            preds.push(self.tag(t)?);
            golds.push(gold);
        }
        evaluate_tagging(&preds, &golds)
    }

    pub fn to_param_file(&self, seed: u64) -> ParamFile {
        let meta = json!({
            "variant": self.variant().as_str(),
            "input_dim": self.net.input_dim(),
            "hidden": self.net.hidden_dim(),
            "embedding_dim": self.embeddings.dim(),
            "features": self.features,
            "seed": seed,
        });
        ParamFile::new(ARCH, &self.net, meta)
    }

    pub fn from_param_file(file: &ParamFile, embeddings: Arc<EmbeddingTable>) -> Result<Self, TaggerError> {
        file.expect_arch(ARCH)?;
        let corrupt = |what: &str| PersistError::CorruptFile(format!("bad meta field {what}"));
        let meta = &file.meta;
        let variant: TaggerVariant = meta["variant"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("variant"))?;
        let field = |k: &str| meta[k].as_u64().map(|v| v as usize).ok_or_else(|| corrupt(k));
        let (input_dim, hidden, emb_dim) = (field("input_dim")?, field("hidden")?, field("embedding_dim")?);
        let features: FeatureSpec =
            serde_json::from_value(meta["features"].clone()).map_err(|_| corrupt("features"))?;
        if emb_dim + features.width() != input_dim || (variant.has_lstm() && hidden == 0) {
            return Err(corrupt("input_dim").into());
        }
        if embeddings.dim() != emb_dim {
            return Err(TaggerError::EmbeddingDimMismatch {
                expected: emb_dim,
                found: embeddings.dim(),
            });
        }
        let mut net = TaggerNet::zeros(variant, input_dim, hidden);
        file.load_into(&mut net)?;
        Ok(Self {
            embeddings,
            features,
            net,
        })
    }
}

/// Maximal `B I*` runs joined by single spaces.
pub fn extract_anchors<S: AsRef<str>>(tokens: &[S], tags: &[BioTag]) -> Result<Vec<String>, TaggerError> {
    if tokens.len() != tags.len() {
        return Err(TaggerError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    if !is_well_formed(tags) {
        return Err(TaggerError::MalformedTags);
    }
    Ok(bio_to_spans(tags)
        .into_iter()
        .map(|r| {
            tokens[r]
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect())
}

/// Exact-match span scores over token-index ranges, tweet by tweet.
pub fn evaluate_spans(
    pred: &[Vec<Range<usize>>],
    gold: &[Vec<Range<usize>>],
) -> Result<SpanScores, TaggerError> {
    if pred.len() != gold.len() {
        return Err(TaggerError::CorpusMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let hits = p.iter().filter(|s| g.contains(s)).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - g.iter().filter(|s| p.contains(s)).count();
    }
    Ok(SpanScores::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggingReport {
    pub span: SpanScores,
    /// B and I count as the positive class.
    pub token: Metrics,
}

pub fn evaluate_tagging(pred: &[Vec<BioTag>], gold: &[Vec<BioTag>]) -> Result<TaggingReport, TaggerError> {
    if pred.len() != gold.len() {
        return Err(TaggerError::CorpusMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(TaggerError::LengthMismatch {
                tokens: g.len(),
                tags: p.len(),
            });
        }
        for (a, b) in p.iter().zip(g) {
            match (*a != BioTag::O, *b != BioTag::O) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let span = evaluate_spans(
        &pred.iter().map(|t| bio_to_spans(t)).collect::<Vec<_>>(),
        &gold.iter().map(|t| bio_to_spans(t)).collect::<Vec<_>>(),
    )?;
    Ok(TaggingReport {
        span,
        token: Metrics::from_counts(tp, fp, fn_, tn),
    })
}

fn require_tags(data: &[AnnotatedTweet]) -> Result<Vec<&[BioTag]>, TaggerError> {
    data.iter()
        .map(|t| {
            t.bio_tags
                .as_deref()
                .ok_or_else(|| TaggerError::MissingTags(t.id().to_owned()))
        })
        .collect()
}

/// Mini-batch Adam (or SGD) on the mean sequence loss. Returns the
/// checkpoint with the best validation span F1; the training set stands in
/// when the validation set is empty.
pub fn train_tagger(
    split: &Split,
    variant: TaggerVariant,
    embeddings: Arc<EmbeddingTable>,
    cfg: &TaggerConfig,
) -> Result<(TaggerModel, Vec<TaggerEpoch>), TaggerError> {
    if split.train.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }
    let train_tags = require_tags(&split.train)?;
    require_tags(&split.val)?;
    let tc = &cfg.train;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let features = FeatureSpec::fit(&cfg.features, &split.train);
    let input_dim = embeddings.dim() + features.width();
    let mut model = TaggerModel {
        net: TaggerNet::new(variant, input_dim, cfg.hidden, &mut rng),
        embeddings,
        features,
    };
    let inputs: Vec<Vec<Vec<f64>>> = split
        .train
        .iter()
        .map(|t| model.example_inputs(t))
        .collect::<Result<_, _>>()?;
    let eval_set = if split.val.is_empty() { &split.train } else { &split.val };

    let mut opt = Optimizer::new(tc.optimizer, tc.learning_rate);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, TaggerNet)> = None;
    let mut stale = 0;
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size.max(1)) {
            let mut grad = model.net.zeroed();
            for &i in batch {
                if inputs[i].is_empty() {
                    continue;
                }
                total += model.net.loss_and_grad(&inputs[i], train_tags[i], &mut grad)?;
            }
            let mut mean = grad.zeroed();
            mean.add_scaled(&grad, 1.0 / batch.len() as f64);
            opt.step(&mut model.net, &mean)?;
        }
        let f1 = model.evaluate(eval_set)?.span.f1;
        history.push(TaggerEpoch {
            epoch,
            train_loss: total / inputs.len() as f64,
            val_span_f1: f1,
        });
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, model.net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= tc.patience {
                break;
            }
        }
    }
    if let Some((_, net)) = best {
        model.net = net;
    }
    Ok((model, history))
}
