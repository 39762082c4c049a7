//! Dense multilayer perceptron with hand-written backpropagation.
//!
//! Forward passes keep per-layer activations so `backward` can push a loss
//! gradient from the output back to both parameter gradients and the input
//! gradient. Parameters are updated either by plain gradient descent or by
//! an adaptive-moment rule; both are deterministic given the stream that
//! initialized the weights.

use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, RandomStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// in_dim x out_dim, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer activations of one forward pass (batch rows).
pub struct ForwardTrace {
    /// inputs[0] is the batch itself; inputs[k+1] is layer k's output.
    pub outputs: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace has at least the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().expect("trace has at least the input")
    }
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &MlpParams) -> Self {
        MlpGradients {
            weights: mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.map_inplace(|v| v * factor);
        }
        for b in &mut self.bias {
            for v in b {
                *v *= factor;
            }
        }
    }

    pub fn accumulate(&mut self, other: &MlpGradients) -> Result<()> {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

impl MlpParams {
    /// Builds an MLP from a dimension chain and per-layer activations.
    /// Weights are Gaussian with std 0.02, biases zero.
    pub fn init(dims: &[usize], activations: &[Activation], stream: &mut RandomStream) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "layer chain needs dims.len()-1 activations, got {} dims and {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let mut weights = Matrix::zeros(dims[k], dims[k + 1]);
            for v in weights.data_mut() {
                *v = 0.02 * stream.standard_normal();
            }
            layers.push(Layer {
                weights,
                bias: vec![0.0; dims[k + 1]],
                activation: act,
            });
        }
        Ok(MlpParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(Layer::in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::out_dim).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim() * l.out_dim() + l.out_dim())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Forward pass on a batch (rows are samples), keeping the trace.
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp forward",
                format!("input {}", batch.shape_string()),
                format!("expected cols {}", self.input_dim()),
            ));
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(batch.clone());
        for layer in &self.layers {
            let mut z = outputs.last().unwrap().matmul(&layer.weights)?;
            z.add_row_bias(&layer.bias)?;
            z.map_inplace(|v| layer.activation.apply(v));
            outputs.push(z);
        }
        Ok(ForwardTrace { outputs })
    }

    /// Backpropagates `grad_output` (dL/d output, batch rows) through the
    /// trace. Returns parameter gradients and dL/d input.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &Matrix) -> Result<(MlpGradients, Matrix)> {
        let mut grads = MlpGradients::zeros_like(self);
        let mut delta = grad_output.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let activated = &trace.outputs[k + 1];
            if delta.shape() != activated.shape() {
                return Err(Error::shape(
                    "mlp backward",
                    format!("delta {}", delta.shape_string()),
                    format!("layer output {}", activated.shape_string()),
                ));
            }
            // dL/dz = dL/dy * act'(z), with act' expressed via the output.
            for (d, &y) in delta.data_mut().iter_mut().zip(activated.data()) {
                *d *= layer.activation.derivative_from_output(y);
            }
            let input = &trace.outputs[k];
            grads.weights[k] = input.matmul_tn(&delta)?;
            for col in 0..delta.cols() {
                let mut acc = 0.0;
                for row in 0..delta.rows() {
                    acc += delta.get(row, col);
                }
                grads.bias[k][col] = acc;
            }
            delta = delta.matmul_nt(&layer.weights)?;
        }
        Ok((grads, delta))
    }

    /// Flattens all parameters (layer order, weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Writes a flat parameter vector back (inverse of `flatten`).
    pub fn unflatten_into(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(
                "mlp unflatten",
                format!("{} values", flat.len()),
                format!("{} parameters", self.parameter_count()),
            ));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.data().len();
            layer.weights.data_mut().copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }
}

/// Optimizer choice for GAN training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive moments with the GAN-community decay rates.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Optimizer::Sgd => "sgd".to_string(),
            Optimizer::Adam { beta1, beta2, .. } => format!("adam({beta1},{beta2})"),
        }
    }
}

/// Per-network optimizer state (first/second moment estimates).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: MlpGradients,
    v: MlpGradients,
    step: u64,
}

impl OptimizerState {
    pub fn new(mlp: &MlpParams) -> Self {
        OptimizerState {
            m: MlpGradients::zeros_like(mlp),
            v: MlpGradients::zeros_like(mlp),
            step: 0,
        }
    }

    /// Applies one descent step of `grads` on `params` with rate `eta`.
    pub fn apply(
        &mut self,
        params: &mut MlpParams,
        grads: &MlpGradients,
        eta: f64,
        optimizer: Optimizer,
    ) -> Result<()> {
        match optimizer {
            Optimizer::Sgd => {
                for (layer, gw) in params.layers.iter_mut().zip(&grads.weights) {
                    layer.weights.scaled_add_assign(-eta, gw)?;
                }
                for (layer, gb) in params.layers.iter_mut().zip(&grads.bias) {
                    for (b, g) in layer.bias.iter_mut().zip(gb) {
                        *b -= eta * g;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                self.step += 1;
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (k, layer) in params.layers.iter_mut().enumerate() {
                    let gw = grads.weights[k].data();
                    let mw = self.m.weights[k].data_mut();
                    let vw = self.v.weights[k].data_mut();
                    for ((w, (&g, m)), v) in layer
                        .weights
                        .data_mut()
                        .iter_mut()
                        .zip(gw.iter().zip(mw.iter_mut()))
                        .zip(vw.iter_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= eta * m_hat / (v_hat.sqrt() + epsilon);
                    }
                    let gb = &grads.bias[k];
                    let mb = &mut self.m.bias[k];
                    let vb = &mut self.v.bias[k];
                    for ((b, (&g, m)), v) in layer
                        .bias
                        .iter_mut()
                        .zip(gb.iter().zip(mb.iter_mut()))
                        .zip(vb.iter_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *b -= eta * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    fn small_mlp(seed: u64) -> MlpParams {
        let mut stream = RandomStream::derive(seed, "mlp-test", 0);
        MlpParams::init(
            &[4, 6, 3],
            &[Activation::LeakyRelu(0.01), Activation::Sigmoid],
            &mut stream,
        )
        .unwrap()
    }

    #[test]
    fn forward_shape_checks() {
        let mlp = small_mlp(1);
        assert_eq!(mlp.input_dim(), 4);
        assert_eq!(mlp.output_dim(), 3);
        let bad = Matrix::zeros(2, 5);
        assert!(mlp.forward(&bad).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let mlp = small_mlp(2);
        let flat = mlp.flatten();
        assert_eq!(flat.len(), mlp.parameter_count());
        let mut other = small_mlp(3);
        other.unflatten_into(&flat).unwrap();
        assert_eq!(other, mlp);
    }

    #[test]
    fn backward_matches_finite_differences_on_scalar_loss() {
        // Loss: sum of squared outputs over a 3-row batch.
        let mlp = small_mlp(4);
        let mut stream = RandomStream::derive(9, "mlp-fd", 0);
        let batch = Matrix::from_fn(3, 4, |_, _| stream.uniform01() * 2.0 - 1.0);

        let loss_of = |flat: &[f64]| {
            let mut model = small_mlp(4);
            model.unflatten_into(flat).unwrap();
            let trace = model.forward(&batch).unwrap();
            trace.output().data().iter().map(|&y| y * y).sum::<f64>()
        };

        let trace = mlp.forward(&batch).unwrap();
        let grad_out = trace.output().map(|y| 2.0 * y);
        let (grads, _) = mlp.backward(&trace, &grad_out).unwrap();

        let flat = mlp.flatten();
        let numeric = finite_diff_grad(loss_of, &flat, 1e-5).unwrap();

        let mut analytic = Vec::with_capacity(flat.len());
        for k in 0..mlp.layers.len() {
            analytic.extend_from_slice(grads.weights[k].data());
            analytic.extend_from_slice(&grads.bias[k]);
        }
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            // The floor keeps central-difference noise on near-zero
            // gradients from masquerading as relative error.
            let denom = a.abs().max(n.abs()).max(1e-6);
            assert!(
                (a - n).abs() / denom < 1e-4,
                "coordinate {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn sgd_and_adam_move_parameters_downhill() {
        for optimizer in [Optimizer::Sgd, Optimizer::adam_default()] {
            let mut mlp = small_mlp(6);
            let mut state = OptimizerState::new(&mlp);
            let batch = Matrix::from_fn(2, 4, |i, j| (i + j) as f64 * 0.1);
            let loss = |m: &MlpParams| {
                let trace = m.forward(&batch).unwrap();
                trace.output().data().iter().map(|&y| (y - 0.2) * (y - 0.2)).sum::<f64>()
            };
            let before = loss(&mlp);
            for _ in 0..50 {
                let trace = mlp.forward(&batch).unwrap();
                let grad_out = trace.output().map(|y| 2.0 * (y - 0.2));
                let (grads, _) = mlp.backward(&trace, &grad_out).unwrap();
                state.apply(&mut mlp, &grads, 0.05, optimizer).unwrap();
            }
            let after = loss(&mlp);
            assert!(after < before, "{optimizer:?}: {before} -> {after}");
        }
    }
}
