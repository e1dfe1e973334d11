use rand_chacha::ChaCha8Rng;

use super::act::Activation;
use super::conv::Conv2d;
use super::norm::BatchNorm2d;
use super::param::{Module, Param};
use super::tensor::Tensor;

/// Convolution, optional batch norm, activation.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: Option<BatchNorm2d>,
    pub act: Activation,
    pre_act: Option<Tensor>,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        batch_norm: bool,
        act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = dilation * (k - 1) / 2;
        Self {
            conv: Conv2d::new(in_c, out_c, k, stride, pad, dilation, !batch_norm, rng),
            bn: batch_norm.then(|| BatchNorm2d::new(out_c)),
            act,
            pre_act: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut y = self.conv.forward(x);
        if let Some(bn) = &self.bn {
            y = bn.forward(&y);
        }
        self.act.apply(&mut y);
        y
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut y = self.conv.forward_train(x);
        if let Some(bn) = &mut self.bn {
            y = bn.forward_train(&y);
        }
        if self.act != Activation::Identity {
            self.pre_act = Some(y.clone());
        }
        self.act.apply(&mut y);
        y
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let mut g = dy.clone();
        if let Some(pre) = self.pre_act.take() {
            self.act.backward(&pre, &mut g);
        }
        if let Some(bn) = &mut self.bn {
            g = bn.backward(&g);
        }
        self.conv.backward(&g, need_dx)
    }
}

impl Module for ConvBlock {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        if let Some(bn) = &mut self.bn {
            bn.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        if let Some(bn) = &mut self.bn {
            bn.visit_buffers(f);
        }
    }
}
