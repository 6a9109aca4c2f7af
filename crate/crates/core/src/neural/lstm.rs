use rand::Rng;

use super::{check_dim, prefixed, prefixed_mut, sigmoid, Matrix, NeuralError, Params};

/// LSTM cell parameters, one input matrix `W_*`, recurrent matrix `U_*` and
/// bias `b_*` per gate (input, forget, output, candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_g: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_o: Matrix,
    pub b_g: Matrix,
}

/// Values of one step needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    /// Xavier-initialised weights, zero biases except the forget gate at 1.
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut w = || Matrix::xavier(hidden_dim, input_dim, rng);
        let (w_i, w_f, w_o, w_g) = (w(), w(), w(), w());
        let mut u = || Matrix::xavier(hidden_dim, hidden_dim, rng);
        let (u_i, u_f, u_o, u_g) = (u(), u(), u(), u());
        let mut b_f = Matrix::zeros(hidden_dim, 1);
        b_f.fill(1.0);
        Self {
            w_i,
            w_f,
            w_o,
            w_g,
            u_i,
            u_f,
            u_o,
            u_g,
            b_i: Matrix::zeros(hidden_dim, 1),
            b_f,
            b_o: Matrix::zeros(hidden_dim, 1),
            b_g: Matrix::zeros(hidden_dim, 1),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        Self {
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_g: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_g: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_g: b(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.rows()
    }

    fn gate(w: &Matrix, u: &Matrix, b: &Matrix, x: &[f64], h: &[f64]) -> Vec<f64> {
        let wx = w.matvec(x);
        let uh = u.matvec(h);
        wx.iter()
            .zip(&uh)
            .zip(b.data())
            .map(|((a, c), d)| a + c + d)
            .collect()
    }

    pub fn step_cached(
        &self,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache), NeuralError> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.hidden_dim(), h.len())?;
        check_dim(self.hidden_dim(), c.len())?;
        let act = |v: Vec<f64>, f: fn(f64) -> f64| v.into_iter().map(f).collect::<Vec<_>>();
        let i = act(Self::gate(&self.w_i, &self.u_i, &self.b_i, x, h), sigmoid);
        let f = act(Self::gate(&self.w_f, &self.u_f, &self.b_f, x, h), sigmoid);
        let o = act(Self::gate(&self.w_o, &self.u_o, &self.b_o, x, h), sigmoid);
        let g = act(Self::gate(&self.w_g, &self.u_g, &self.b_g, x, h), f64::tanh);
        let c_new: Vec<f64> = (0..c.len()).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            i,
            f,
            o,
            g,
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Gradients of one step. `dh`/`dc` are the total gradients flowing into
    /// this step's outputs. Returns `(dx, dh_prev, dc_prev)`.
    pub fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut LstmParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = dh.len();
        let LstmStepCache {
            x,
            h_prev,
            c_prev,
            i,
            f,
            o,
            g,
            tanh_c,
        } = cache;
        let mut da_i = vec![0.0; n];
        let mut da_f = vec![0.0; n];
        let mut da_o = vec![0.0; n];
        let mut da_g = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let d_o = dh[k] * tanh_c[k];
            let d_c = dc[k] + dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
            da_i[k] = d_c * g[k] * i[k] * (1.0 - i[k]);
            da_f[k] = d_c * c_prev[k] * f[k] * (1.0 - f[k]);
            da_o[k] = d_o * o[k] * (1.0 - o[k]);
            da_g[k] = d_c * i[k] * (1.0 - g[k] * g[k]);
            dc_prev[k] = d_c * f[k];
        }
        let mut dx = vec![0.0; x.len()];
        let mut dh_prev = vec![0.0; n];
        let gates = [
            (&self.w_i, &self.u_i, &mut grad.w_i, &mut grad.u_i, &mut grad.b_i, &da_i),
            (&self.w_f, &self.u_f, &mut grad.w_f, &mut grad.u_f, &mut grad.b_f, &da_f),
            (&self.w_o, &self.u_o, &mut grad.w_o, &mut grad.u_o, &mut grad.b_o, &da_o),
            (&self.w_g, &self.u_g, &mut grad.w_g, &mut grad.u_g, &mut grad.b_g, &da_g),
        ];
        for (w, u, gw, gu, gb, da) in gates {
            gw.add_outer(da, x);
            gu.add_outer(da, h_prev);
            gb.add_vec(da);
            for (d, v) in dx.iter_mut().zip(w.matvec_t(da)) {
                *d += v;
            }
            for (d, v) in dh_prev.iter_mut().zip(u.matvec_t(da)) {
                *d += v;
            }
        }
        (dx, dh_prev, dc_prev)
    }

    /// Runs the cell over `seq` from zero state.
    pub fn run(&self, seq: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<LstmStepCache>), NeuralError> {
        let n = self.hidden_dim();
        let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
        let mut outs = Vec::with_capacity(seq.len());
        let mut caches = Vec::with_capacity(seq.len());
        for x in seq {
            let (h2, c2, cache) = self.step_cached(x, &h, &c)?;
            outs.push(h2.clone());
            caches.push(cache);
            h = h2;
            c = c2;
        }
        Ok((outs, caches))
    }

    /// Backpropagation through time for [`LstmParams::run`]. Returns input
    /// gradients in sequence order.
    pub fn backward_run(
        &self,
        caches: &[LstmStepCache],
        d_outs: &[Vec<f64>],
        grad: &mut LstmParams,
    ) -> Vec<Vec<f64>> {
        let n = self.hidden_dim();
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut dxs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            let dh: Vec<f64> = d_outs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.backward_step(&caches[t], &dh, &dc_next, grad);
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}

impl Params for LstmParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_i".into(), &self.w_i),
            ("w_f".into(), &self.w_f),
            ("w_o".into(), &self.w_o),
            ("w_g".into(), &self.w_g),
            ("u_i".into(), &self.u_i),
            ("u_f".into(), &self.u_f),
            ("u_o".into(), &self.u_o),
            ("u_g".into(), &self.u_g),
            ("b_i".into(), &self.b_i),
            ("b_f".into(), &self.b_f),
            ("b_o".into(), &self.b_o),
            ("b_g".into(), &self.b_g),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("w_i".into(), &mut self.w_i),
            ("w_f".into(), &mut self.w_f),
            ("w_o".into(), &mut self.w_o),
            ("w_g".into(), &mut self.w_g),
            ("u_i".into(), &mut self.u_i),
            ("u_f".into(), &mut self.u_f),
            ("u_o".into(), &mut self.u_o),
            ("u_g".into(), &mut self.u_g),
            ("b_i".into(), &mut self.b_i),
            ("b_f".into(), &mut self.b_f),
            ("b_o".into(), &mut self.b_o),
            ("b_g".into(), &mut self.b_g),
        ]
    }
}

/// One LSTM step: `(h', c')`.
pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
    params.step_cached(x, h, c).map(|(h, c, _)| (h, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    fwd: Vec<LstmStepCache>,
    bwd: Vec<LstmStepCache>,
    pub outputs: Vec<Vec<f64>>,
}

impl BiLstm {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            fwd: LstmParams::new(input_dim, hidden_dim, rng),
            bwd: LstmParams::new(input_dim, hidden_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }

    pub fn encode_trace(&self, seq: &[Vec<f64>]) -> Result<BiLstmTrace, NeuralError> {
        if seq.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let (f_out, f_cache) = self.fwd.run(seq)?;
        let reversed: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let (mut b_out, b_cache) = self.bwd.run(&reversed)?;
        b_out.reverse();
        let outputs = f_out
            .into_iter()
            .zip(b_out)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
        Ok(BiLstmTrace {
            fwd: f_cache,
            bwd: b_cache,
            outputs,
        })
    }

    /// Returns input gradients in sequence order.
    pub fn backward(&self, trace: &BiLstmTrace, d_out: &[Vec<f64>], grad: &mut BiLstm) -> Vec<Vec<f64>> {
        let hf = self.fwd.hidden_dim();
        let d_f: Vec<Vec<f64>> = d_out.iter().map(|d| d[..hf].to_vec()).collect();
        let d_b: Vec<Vec<f64>> = d_out.iter().rev().map(|d| d[hf..].to_vec()).collect();
        let dx_f = self.fwd.backward_run(&trace.fwd, &d_f, &mut grad.fwd);
        let dx_b = self.bwd.backward_run(&trace.bwd, &d_b, &mut grad.bwd);
        dx_f.into_iter()
            .zip(dx_b.into_iter().rev())
            .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect())
            .collect()
    }
}

impl Params for BiLstm {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut p = prefixed("fwd", self.fwd.params());
        p.extend(prefixed("bwd", self.bwd.params()));
        p
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut p = prefixed_mut("fwd", self.fwd.params_mut());
        p.extend(prefixed_mut("bwd", self.bwd.params_mut()));
        p
    }
}

/// Forward outputs concatenated with the position-aligned backward outputs.
pub fn bilstm_encode(
    fwd: &LstmParams,
    bwd: &LstmParams,
    seq: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, NeuralError> {
    let bi = BiLstm {
        fwd: fwd.clone(),
        bwd: bwd.clone(),
    };
    Ok(bi.encode_trace(seq)?.outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_step(&p, &[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!((h, c), (vec![0.0; 2], vec![0.0; 2]));
    }

    #[test]
    fn zero_params_unit_cell() {
        let p = LstmParams::zeros(1, 3);
        let (h, c) = lstm_step(&p, &[4.0], &[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(c, vec![0.5; 3]);
        for v in h {
            assert!((v - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::new(2, 3, &mut rng);
        assert!(p.b_f.data().iter().all(|&b| b == 1.0));
        assert!(p.b_i.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn step_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = LstmParams::new(2, 2, &mut rng);
        for (_, m) in p.params_mut() {
            for v in m.data_mut() {
                *v = rand::Rng::gen_range(&mut rng, -0.5..0.5);
            }
        }
        let x = [0.3, -0.8];
        let h = [0.1, -0.2];
        let c = [0.5, 0.05];
        let (h2, c2) = lstm_step(&p, &x, &h, &c).unwrap();

        // scalar-by-scalar recomputation
        let pre = |w: &Matrix, u: &Matrix, b: &Matrix, k: usize| {
            w.get(k, 0) * x[0] + w.get(k, 1) * x[1] + u.get(k, 0) * h[0] + u.get(k, 1) * h[1] + b.get(k, 0)
        };
        for k in 0..2 {
            let i = sig(pre(&p.w_i, &p.u_i, &p.b_i, k));
            let f = sig(pre(&p.w_f, &p.u_f, &p.b_f, k));
            let o = sig(pre(&p.w_o, &p.u_o, &p.b_o, k));
            let g = pre(&p.w_g, &p.u_g, &p.b_g, k).tanh();
            let ck = f * c[k] + i * g;
            assert!((c2[k] - ck).abs() < 1e-14);
            assert!((h2[k] - o * ck.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_checks() {
        let p = LstmParams::zeros(2, 2);
        assert!(lstm_step(&p, &[1.0], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(matches!(
            bilstm_encode(&p, &p, &[]),
            Err(NeuralError::EmptySequence)
        ));
    }

    #[test]
    fn bilstm_single_token() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = LstmParams::new(2, 3, &mut rng);
        let b = LstmParams::new(2, 3, &mut rng);
        let x = vec![0.4, -0.1];
        let out = bilstm_encode(&f, &b, std::slice::from_ref(&x)).unwrap();
        let (hf, _) = lstm_step(&f, &x, &[0.0; 3], &[0.0; 3]).unwrap();
        let (hb, _) = lstm_step(&b, &x, &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(out, vec![[hf, hb].concat()]);
    }

    #[test]
    fn bilstm_palindrome_with_tied_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::new(2, 3, &mut rng);
        let a = vec![0.2, 0.9];
        let b = vec![-0.5, 0.1];
        let seq = vec![a.clone(), b, a];
        let out = bilstm_encode(&p, &p, &seq).unwrap();
        for t in 0..3 {
            let mirror = &out[2 - t];
            let swapped = [&mirror[3..], &mirror[..3]].concat();
            for (x, y) in out[t].iter().zip(&swapped) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bilstm_zero_params() {
        let p = LstmParams::zeros(2, 2);
        let out = bilstm_encode(&p, &p, &[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
    }
}
