use rand::Rng;

use super::{check_dim, prefixed, prefixed_mut, Dense, Matrix, NeuralError, Params};

/// Hidden widths of the attention scorer.
pub const ATTENTION_HIDDEN: (usize, usize) = (64, 32);

/// Per-token scorer: two tanh layers (64 and 32 units) and a scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    pub l1: Dense,
    pub l2: Dense,
    pub head: Dense,
}

struct TrunkTrace {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// Trace of [`AttentionNet::apply_trace`].
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    inputs: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

/// Trace of [`AttentionNet::self_apply_trace`].
#[derive(Debug, Clone)]
pub struct SelfAttentionTrace {
    inputs: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    /// Row `t` holds the weights token `t` puts on every token.
    pub weights: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax Jacobian-vector product: `a ⊙ (d - <a, d>)`.
fn softmax_backward(a: &[f64], d: &[f64]) -> Vec<f64> {
    let dot: f64 = a.iter().zip(d).map(|(x, y)| x * y).sum();
    a.iter().zip(d).map(|(x, y)| x * (y - dot)).collect()
}

fn tanh_vec(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn tanh_back(y: &[f64], d: &[f64]) -> Vec<f64> {
    y.iter().zip(d).map(|(y, d)| d * (1.0 - y * y)).collect()
}

impl AttentionNet {
    pub fn new(input_dim: usize, rng: &mut impl Rng) -> Self {
        Self::with_hidden(input_dim, ATTENTION_HIDDEN, rng)
    }

    pub fn with_hidden(input_dim: usize, (h1, h2): (usize, usize), rng: &mut impl Rng) -> Self {
        Self {
            l1: Dense::new(input_dim, h1, rng),
            l2: Dense::new(h1, h2, rng),
            head: Dense::new(h2, 1, rng),
        }
    }

    pub fn zeros(input_dim: usize) -> Self {
        let (h1, h2) = ATTENTION_HIDDEN;
        Self {
            l1: Dense::zeros(input_dim, h1),
            l2: Dense::zeros(h1, h2),
            head: Dense::zeros(h2, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.l1.input_dim()
    }

    fn trunk(&self, x: &[f64]) -> TrunkTrace {
        let h1 = tanh_vec(self.l1.forward(x));
        let h2 = tanh_vec(self.l2.forward(&h1));
        TrunkTrace { h1, h2 }
    }

    fn trunk_backward(&self, x: &[f64], h1: &[f64], h2: &[f64], d_h2: &[f64], grad: &mut AttentionNet) {
        let d_z2 = tanh_back(h2, d_h2);
        let d_h1 = self.l2.backward(h1, &d_z2, &mut grad.l2);
        let d_z1 = tanh_back(h1, &d_h1);
        self.l1.backward(x, &d_z1, &mut grad.l1);
    }

    /// Scalar score of one token.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.head.forward(&self.trunk(x).h2)[0]
    }

    fn check(&self, seq: &[Vec<f64>]) -> Result<(), NeuralError> {
        if seq.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        seq.iter().try_for_each(|x| check_dim(self.input_dim(), x.len()))
    }

    /// Token gating: `out_t = T * softmax(s)_t * x_t`, so uniform scores
    /// leave the sequence unchanged.
    pub fn apply_trace(&self, seq: &[Vec<f64>]) -> Result<AttentionTrace, NeuralError> {
        self.check(seq)?;
        let traces: Vec<TrunkTrace> = seq.iter().map(|x| self.trunk(x)).collect();
        let scores: Vec<f64> = traces.iter().map(|t| self.head.forward(&t.h2)[0]).collect();
        let weights = softmax(&scores);
        let len = seq.len() as f64;
        let outputs = seq
            .iter()
            .zip(&weights)
            .map(|(x, w)| x.iter().map(|v| len * w * v).collect())
            .collect();
        let (h1, h2) = traces.into_iter().map(|t| (t.h1, t.h2)).unzip();
        Ok(AttentionTrace {
            inputs: seq.to_vec(),
            h1,
            h2,
            weights,
            outputs,
        })
    }

    /// Accumulates parameter gradients. The inputs are frozen embeddings, so
    /// no input gradient is returned.
    pub fn backward(&self, trace: &AttentionTrace, d_out: &[Vec<f64>], grad: &mut AttentionNet) {
        let len = trace.inputs.len() as f64;
        let d_w: Vec<f64> = trace
            .inputs
            .iter()
            .zip(d_out)
            .map(|(x, d)| len * x.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let d_scores = softmax_backward(&trace.weights, &d_w);
        for t in 0..trace.inputs.len() {
            let d_h2 = self.head.backward(&trace.h2[t], &[d_scores[t]], &mut grad.head);
            self.trunk_backward(&trace.inputs[t], &trace.h1[t], &trace.h2[t], &d_h2, grad);
        }
    }

    /// Single-head dot-product self-attention over the 32-unit trunk
    /// features: `out_t = sum_j softmax_j(phi_t . phi_j / sqrt(32)) x_j`.
    /// The scalar head is unused here.
    pub fn self_apply_trace(&self, seq: &[Vec<f64>]) -> Result<SelfAttentionTrace, NeuralError> {
        self.check(seq)?;
        let traces: Vec<TrunkTrace> = seq.iter().map(|x| self.trunk(x)).collect();
        let scale = (self.l2.output_dim() as f64).sqrt();
        let dim = seq[0].len();
        let mut weights = Vec::with_capacity(seq.len());
        let mut outputs = Vec::with_capacity(seq.len());
        for q in &traces {
            let scores: Vec<f64> = traces
                .iter()
                .map(|k| q.h2.iter().zip(&k.h2).map(|(a, b)| a * b).sum::<f64>() / scale)
                .collect();
            let a = softmax(&scores);
            let mut out = vec![0.0; dim];
            for (w, x) in a.iter().zip(seq) {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += w * v;
                }
            }
            weights.push(a);
            outputs.push(out);
        }
        let (h1, h2) = traces.into_iter().map(|t| (t.h1, t.h2)).unzip();
        Ok(SelfAttentionTrace {
            inputs: seq.to_vec(),
            h1,
            h2,
            weights,
            outputs,
        })
    }

    pub fn self_backward(&self, trace: &SelfAttentionTrace, d_out: &[Vec<f64>], grad: &mut AttentionNet) {
        let n = trace.inputs.len();
        let scale = (self.l2.output_dim() as f64).sqrt();
        let width = trace.h2[0].len();
        let mut d_phi = vec![vec![0.0; width]; n];
        for t in 0..n {
            let d_a: Vec<f64> = trace
                .inputs
                .iter()
                .map(|x| x.iter().zip(&d_out[t]).map(|(a, b)| a * b).sum())
                .collect();
            let d_s = softmax_backward(&trace.weights[t], &d_a);
            for j in 0..n {
                let g = d_s[j] / scale;
                if g == 0.0 {
                    continue;
                }
                for k in 0..width {
                    d_phi[t][k] += g * trace.h2[j][k];
                    d_phi[j][k] += g * trace.h2[t][k];
                }
            }
        }
        for t in 0..n {
            self.trunk_backward(&trace.inputs[t], &trace.h1[t], &trace.h2[t], &d_phi[t], grad);
        }
    }
}

impl Params for AttentionNet {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut p = prefixed("l1", self.l1.params());
        p.extend(prefixed("l2", self.l2.params()));
        p.extend(prefixed("head", self.head.params()));
        p
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut p = prefixed_mut("l1", self.l1.params_mut());
        p.extend(prefixed_mut("l2", self.l2.params_mut()));
        p.extend(prefixed_mut("head", self.head.params_mut()));
        p
    }
}

/// `(weights, weighted_seq)` of token gating attention.
pub fn attention_apply(
    att: &AttentionNet,
    seq: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), NeuralError> {
    let trace = att.apply_trace(seq)?;
    Ok((trace.weights, trace.outputs))
}

/// Attention weight rows and attended outputs.
pub type WeightsAndOutputs = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// `(weight rows, outputs)` of dot-product self-attention.
pub fn self_attention_apply(att: &AttentionNet, seq: &[Vec<f64>]) -> Result<WeightsAndOutputs, NeuralError> {
    let trace = att.self_apply_trace(seq)?;
    Ok((trace.weights, trace.outputs))
}
