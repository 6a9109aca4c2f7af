use super::{Matrix, NeuralError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// SGD or Adam. Adam moments are created lazily on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<(), NeuralError> {
        let grads: Vec<(String, &Matrix)> = grads.params();
        let params = params.params_mut();
        if params.len() != grads.len() {
            return Err(NeuralError::ShapeMismatch("parameter count".into()));
        }
        let (names, mats): (Vec<String>, Vec<&mut Matrix>) = params.into_iter().unzip();
        self.step_matrices(
            names.iter().map(String::as_str).zip(mats).collect(),
            grads.iter().map(|(_, g)| *g).collect(),
        )
    }

    pub fn step_matrices(
        &mut self,
        params: Vec<(&str, &mut Matrix)>,
        grads: Vec<&Matrix>,
    ) -> Result<(), NeuralError> {
        if params.len() != grads.len() {
            return Err(NeuralError::ShapeMismatch("parameter count".into()));
        }
        for ((name, p), g) in params.iter().zip(&grads) {
            if p.shape() != g.shape() {
                return Err(NeuralError::ShapeMismatch((*name).to_owned()));
            }
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, p), g) in params.into_iter().zip(grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= self.learning_rate * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                    self.v = self.m.clone();
                }
                if self.m.len() != grads.len()
                    || self.m.iter().zip(&grads).any(|(m, g)| m.shape() != g.shape())
                {
                    return Err(NeuralError::ShapeMismatch("optimizer moments".into()));
                }
                self.step += 1;
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (i, ((_, p), g)) in params.into_iter().zip(grads).enumerate() {
                    let m = self.m[i].data_mut();
                    let v = self.v[i].data_mut();
                    for (k, (x, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * d;
                        v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * d * d;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mini-batch training settings shared by the relevance classifier and the
/// taggers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}
