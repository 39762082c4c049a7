//! Numerical kernel: dense matrices, activations, seeded random streams, and
//! a finite-difference gradient checker. All arithmetic is f64; reductions use
//! a fixed summation order so results are bit-reproducible.

mod gradcheck;
mod matrix;
mod random;

pub use gradcheck::finite_diff_grad;
pub use matrix::{dot, Matrix};
pub use random::{derive_seed, RandomStream, STREAM_ALGORITHM};

/// Activation functions used by the RBM conditionals and the GAN layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    /// Leaky rectifier: `x` for `x >= 0`, `slope * x` otherwise.
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative expressed through the activation output `y = apply(x)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu(slope) => {
                if y >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Activation::Sigmoid => "sigmoid".to_string(),
            Activation::Tanh => "tanh".to_string(),
            Activation::LeakyRelu(slope) => format!("leaky_relu({slope})"),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
        assert!((Activation::Sigmoid.apply(3.0f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_uses_slope_on_negative_side() {
        let act = Activation::LeakyRelu(0.01);
        assert_eq!(act.apply(-1.0), -0.01);
        assert_eq!(act.apply(2.5), 2.5);
        assert_eq!(act.derivative_from_output(-0.01), 0.01);
        assert_eq!(act.derivative_from_output(2.5), 1.0);
    }

    #[test]
    fn tanh_stays_in_open_interval() {
        // f64 tanh saturates to exactly +/-1 near |x| = 19, so probe below that.
        for x in [-18.0, -1.0, 0.0, 1.0, 18.0] {
            let y = Activation::Tanh.apply(x);
            assert!(y > -1.0 && y < 1.0);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -700.0f64..700.0) {
            let s = sigmoid(x) + sigmoid(-x);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
