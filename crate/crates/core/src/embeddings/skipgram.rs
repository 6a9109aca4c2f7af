//! Skip-gram with negative sampling.
//!
//! Single-threaded and fully seeded. Frequent-word subsampling is not
//! applied. The context window is fixed (no random shrinking).

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingError, EmbeddingTable};

#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            min_count: 2,
            seed: 0,
        }
    }
}

/// Vocabulary sorted by descending count, ties lexicographic.
fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], min_count: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(w, c)| (w.to_owned(), c))
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vocab
}

/// Input-side initialisation: uniform in `±0.5/dim`, row-major from a
/// ChaCha8 stream seeded with `seed`.
pub fn initial_vectors(rows: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with(&mut rng, rows, dim)
}

fn init_with(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f64> {
    let bound = 0.5 / dim as f64;
    (0..rows * dim).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ln_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn train_skipgram<S: AsRef<str>>(
    sentences: &[Vec<S>],
    cfg: &SkipgramConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    train_skipgram_with_losses(sentences, cfg).map(|(t, _)| t)
}

/// Trains and also returns the mean per-pair loss of every epoch.
pub fn train_skipgram_with_losses<S: AsRef<str>>(
    sentences: &[Vec<S>],
    cfg: &SkipgramConfig,
) -> Result<(EmbeddingTable, Vec<f64>), EmbeddingError> {
    if cfg.dim == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    let vocab = build_vocab(sentences, cfg.min_count);
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (w.as_str(), i)).collect();
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_ref()).copied()).collect())
        .collect();

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = init_with(&mut rng, vocab.len(), dim);
    let mut output = vec![0.0; vocab.len() * dim];
    let noise = WeightedIndex::new(vocab.iter().map(|(_, c)| (*c as f64).powf(0.75)))
        .expect("counts are positive");

    let positions: usize = corpus.iter().map(Vec::len).sum();
    let total_steps = (positions * cfg.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut grad_in = vec![0.0; dim];

    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut pairs = 0usize;
        for sent in &corpus {
            for (c, &center) in sent.iter().enumerate() {
                let progress = step as f64 / total_steps;
                let lr = (cfg.learning_rate
                    - (cfg.learning_rate - cfg.min_learning_rate) * progress)
                    .max(cfg.min_learning_rate);
                step += 1;

                let lo = c.saturating_sub(cfg.window);
                let hi = (c + cfg.window + 1).min(sent.len());
                for (o, &context) in sent.iter().enumerate().take(hi).skip(lo) {
                    if o == c {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    let v = &input[center * dim..(center + 1) * dim];
                    let mut targets = Vec::with_capacity(cfg.negatives + 1);
                    targets.push((context, 1.0));
                    for _ in 0..cfg.negatives {
                        let k = noise.sample(&mut rng);
                        if k != context {
                            targets.push((k, 0.0));
                        }
                    }
                    for (target, label) in targets {
                        let u = &mut output[target * dim..(target + 1) * dim];
                        let score: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                        epoch_loss -= if label == 1.0 {
                            ln_sigmoid(score)
                        } else {
                            ln_sigmoid(-score)
                        };
                        let g = lr * (label - sigmoid(score));
                        for d in 0..dim {
                            grad_in[d] += g * u[d];
                            u[d] += g * v[d];
                        }
                    }
                    for (x, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad_in) {
                        *x += g;
                    }
                    pairs += 1;
                }
            }
        }
        losses.push(if pairs == 0 { 0.0 } else { epoch_loss / pairs as f64 });
    }

    let words = vocab.into_iter().map(|(w, _)| w).collect();
    Ok((EmbeddingTable::from_parts(dim, words, input), losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::cosine;

    fn cfg(epochs: usize) -> SkipgramConfig {
        SkipgramConfig {
            dim: 8,
            window: 2,
            negatives: 3,
            epochs,
            min_count: 1,
            seed: 3,
            ..SkipgramConfig::default()
        }
    }

    #[test]
    fn empty_corpus() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(
            train_skipgram(&empty, &cfg(1)),
            Err(EmbeddingError::EmptyVocabulary)
        ));
        let rare = vec![vec!["a", "b"]];
        let c = SkipgramConfig { min_count: 2, ..cfg(1) };
        assert!(matches!(train_skipgram(&rare, &c), Err(EmbeddingError::EmptyVocabulary)));
    }

    #[test]
    fn zero_epochs_is_initialisation() {
        let corpus = vec![vec!["b", "a", "a"], vec!["c", "a"]];
        let t = train_skipgram(&corpus, &cfg(0)).unwrap();
        assert_eq!(t.vocab(), &["a", "b", "c"]);
        let init = initial_vectors(3, 8, 3);
        for i in 0..3 {
            assert_eq!(t.row(i), &init[i * 8..(i + 1) * 8]);
        }
    }

    #[test]
    fn deterministic() {
        let corpus: Vec<Vec<&str>> = (0..20).map(|i| vec!["x", "y", if i % 2 == 0 { "z" } else { "w" }]).collect();
        let a = train_skipgram(&corpus, &cfg(3)).unwrap();
        let b = train_skipgram(&corpus, &cfg(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_context_pulls_words_together() {
        let mut corpus = Vec::new();
        for _ in 0..200 {
            corpus.push(vec!["heat", "burns", "hot", "flame"]);
            corpus.push(vec!["fire", "burns", "hot", "flame"]);
            corpus.push(vec!["ice", "chills", "cold", "frost"]);
        }
        let c = SkipgramConfig { dim: 16, seed: 42, ..cfg(5) };
        let t = train_skipgram(&corpus, &c).unwrap();
        let heat = t.lookup("heat").unwrap();
        let pair = cosine(heat, t.lookup("fire").unwrap()).unwrap();
        let control = cosine(heat, t.lookup("ice").unwrap()).unwrap();
        assert!(pair > control, "pair {pair} control {control}");
    }
}
