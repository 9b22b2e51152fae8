//! Elementwise nonlinearities.

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f32),
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn eval(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            // clamped into the largest open (0, 1) interval f32 can
            // represent so saturated inputs never return exactly 0 or 1
            Activation::Sigmoid => {
                (1.0 / (1.0 + (-x).exp())).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
            }
            Activation::Tanh => x.tanh(),
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.eval(v))
}

/// Gradient of the activation given the forward input and output. The
/// saturating kinds derive their slope from the output, the rectifiers from
/// the input sign.
pub fn activation_backward(
    input: &Tensor,
    output: &Tensor,
    kind: Activation,
    grad_out: &Tensor,
) -> Tensor {
    let mut grad = grad_out.clone();
    match kind {
        Activation::Relu => {
            for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                if x < 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::LeakyRelu(slope) => {
            for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                if x < 0.0 {
                    *g *= slope;
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                *g *= y * (1.0 - y);
            }
        }
        Activation::Tanh => {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                *g *= 1.0 - y * y;
            }
        }
    }
    grad
}
