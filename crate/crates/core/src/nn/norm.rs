use super::param::{Module, Param};
use super::tensor::Tensor;

const EPS: f32 = 1e-5;
const MOMENTUM: f32 = 0.1;

/// Per-channel batch normalisation with running statistics for inference.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    cache: Option<(Vec<f32>, Vec<f32>, [usize; 4])>,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Param::filled(c, 1.0),
            beta: Param::zeros(c),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
            cache: None,
        }
    }

    /// Inference: normalises with the running statistics.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let c = x.c;
        let plane = x.plane();
        let mut out = x.clone();
        for i in 0..x.n {
            let s = out.sample_mut(i);
            for ch in 0..c {
                let scale = self.gamma.value[ch] / (self.running_var[ch] + EPS).sqrt();
                let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
                s[ch * plane..(ch + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }

    /// Training: normalises with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let c = x.c;
        let plane = x.plane();
        let mut out = x.clone();
        let m = (x.n * plane) as f64;
        let mut inv_std = vec![0.0f32; c];
        for ch in 0..c {
            let (mut sum, mut sq) = (0.0f64, 0.0f64);
            for i in 0..x.n {
                for &v in &x.sample(i)[ch * plane..(ch + 1) * plane] {
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
            }
            let mean = sum / m;
            let var = (sq / m - mean * mean).max(0.0);
            inv_std[ch] = (1.0 / (var + EPS as f64).sqrt()) as f32;
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            self.running_mean[ch] =
                (1.0 - MOMENTUM) * self.running_mean[ch] + MOMENTUM * mean as f32;
            self.running_var[ch] =
                (1.0 - MOMENTUM) * self.running_var[ch] + MOMENTUM * unbiased as f32;
            for i in 0..x.n {
                let s = &mut out.sample_mut(i)[ch * plane..(ch + 1) * plane];
                s.iter_mut()
                    .for_each(|v| *v = (*v - mean as f32) * inv_std[ch]);
            }
        }
        let xhat = out.data.clone();
        for i in 0..x.n {
            let s = out.sample_mut(i);
            for ch in 0..c {
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                s[ch * plane..(ch + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v = *v * g + b);
            }
        }
        self.cache = Some((xhat, inv_std, x.shape()));
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (xhat, inv_std, shape) = self
            .cache
            .take()
            .expect("batchnorm backward without forward");
        assert_eq!(dy.shape(), shape);
        let [n, c, h, w] = shape;
        let plane = h * w;
        let m = (n * plane) as f32;
        let mut dx = Tensor::zeros(n, c, h, w);
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f32, 0.0f32);
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for k in 0..plane {
                    let g = dy.data[off + k];
                    sum_dy += g;
                    sum_dy_xhat += g * xhat[off + k];
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let g = self.gamma.value[ch];
            let k0 = g * inv_std[ch] / m;
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for k in 0..plane {
                    dx.data[off + k] =
                        k0 * (m * dy.data[off + k] - sum_dy - xhat[off + k] * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
