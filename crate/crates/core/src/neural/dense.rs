use rand::Rng;

use super::{check_dim, prefixed, prefixed_mut, relu, sigmoid, Matrix, NeuralError, Params};

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Matrix::xavier(output, input, rng),
            bias: Matrix::zeros(output, 1),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(output, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (v, b) in y.iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        y
    }

    /// Accumulates `dW += dy x^T`, `db += dy` into `grad` and returns `W^T dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        grad.weight.add_outer(dy, x);
        grad.bias.add_vec(dy);
        self.weight.matvec_t(dy)
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    Linear,
}

/// Feed-forward net: ReLU on hidden layers, a configurable output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct DenseTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl DenseNet {
    /// `dims` lists every layer width including input and output.
    pub fn new(dims: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "a net needs input and output dims");
        let layers = dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Self { layers, output }
    }

    pub fn zeros(dims: &[usize], output: OutputActivation) -> Self {
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, output }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<DenseTrace, NeuralError> {
        check_dim(self.input_dim(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(std::mem::take(&mut h));
            h = if i == last {
                match self.output {
                    OutputActivation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                    OutputActivation::Linear => z.clone(),
                }
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            pre.push(z);
        }
        Ok(DenseTrace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Backpropagates the gradient with respect to the output layer's
    /// *pre-activation*. For a sigmoid head trained with binary cross-entropy
    /// that gradient is `p - y`.
    pub fn backward(&self, trace: &DenseTrace, d_logits: &[f64], grad: &mut DenseNet) -> Vec<f64> {
        let mut d = d_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let dx = self.layers[i].backward(&trace.inputs[i], &d, &mut grad.layers[i]);
            if i > 0 {
                d = dx
                    .iter()
                    .zip(&trace.pre[i - 1])
                    .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
                    .collect();
            } else {
                d = dx;
            }
        }
        d
    }
}

impl Params for DenseNet {
    fn params(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layer{i}"), l.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| prefixed_mut(&format!("layer{i}"), l.params_mut()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::bce_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_half() {
        let net = DenseNet::zeros(&[3, 4, 2], OutputActivation::Sigmoid);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn identity_layer() {
        let mut net = DenseNet::zeros(&[2, 2], OutputActivation::Linear);
        net.layers[0].weight = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);
    }

    #[test]
    fn hand_computed_1_2_1() {
        // h = relu([2x + 1, -x + 0.5]); y = sigmoid(1.5 h0 - 2 h1 + 0.25)
        let mut net = DenseNet::zeros(&[1, 2, 1], OutputActivation::Sigmoid);
        net.layers[0].weight = Matrix::from_vec(2, 1, vec![2.0, -1.0]).unwrap();
        net.layers[0].bias = Matrix::column(vec![1.0, 0.5]);
        net.layers[1].weight = Matrix::from_vec(1, 2, vec![1.5, -2.0]).unwrap();
        net.layers[1].bias = Matrix::column(vec![0.25]);
        // x = 0.2: h = [1.4, 0.3], logit = 2.1 - 0.6 + 0.25 = 1.75
        let y = net.forward(&[0.2]).unwrap()[0];
        assert!((y - 1.0 / (1.0 + (-1.75f64).exp())).abs() < 1e-15);
        // x = 1.0: h = [3, 0] (relu clips), logit = 4.75
        let y = net.forward(&[1.0]).unwrap()[0];
        assert!((y - 1.0 / (1.0 + (-4.75f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn square_gradient() {
        // y = w * 1 with w = 3; loss y^2 has dL/dw = 6
        let mut layer = Dense::zeros(1, 1);
        layer.weight.set(0, 0, 3.0);
        let y = layer.forward(&[1.0]);
        let mut grad = layer.zeroed();
        layer.backward(&[1.0], &[2.0 * y[0]], &mut grad);
        assert_eq!(grad.weight.get(0, 0), 6.0);
    }

    #[test]
    fn bce_sigmoid_gradient_matches_finite_differences() {
        let x = 0.7;
        let y = 1.0;
        let mut layer = Dense::zeros(1, 1);
        let w = 0.4;
        layer.weight.set(0, 0, w);
        let p = sigmoid(w * x);
        let mut grad = layer.zeroed();
        layer.backward(&[x], &[p - y], &mut grad);
        let h = 1e-5;
        let fd = (bce_loss(sigmoid((w + h) * x), y) - bce_loss(sigmoid((w - h) * x), y)) / (2.0 * h);
        let rel = (grad.weight.get(0, 0) - fd).abs() / fd.abs();
        assert!(rel < 1e-6, "rel {rel}");
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::new(&[10, 1024, 512, 256, 1], OutputActivation::Sigmoid, &mut rng);
        let expected: usize = [(10, 1024), (1024, 512), (512, 256), (256, 1)]
            .iter()
            .map(|(i, o)| (i + 1) * o)
            .sum();
        assert_eq!(net.param_count(), expected);
        assert_eq!(net.layer_dims(), vec![10, 1024, 512, 256, 1]);
    }
}
