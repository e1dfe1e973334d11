use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Mish,
}

/// `x * tanh(softplus(x))`.
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

pub fn mish_grad(x: f64) -> f64 {
    let sp = softplus(x);
    let t = sp.tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

impl Activation {
    pub fn apply(self, x: &mut Tensor) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Mish => x.data.iter_mut().for_each(|v| *v = mish(*v as f64) as f32),
        }
    }

    /// Gradient through the activation given its pre-activation input.
    pub fn backward(self, pre: &Tensor, dy: &mut Tensor) {
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &x) in dy.data.iter_mut().zip(&pre.data) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Mish => {
                for (g, &x) in dy.data.iter_mut().zip(&pre.data) {
                    *g *= mish_grad(x as f64) as f32;
                }
            }
        }
    }
}
