use rand_chacha::ChaCha8Rng;

use super::gemm::gemm;
use super::param::{Module, Param};
use super::tensor::Tensor;

/// 2-D convolution with stride, zero padding and dilation (atrous rate).
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
    /// `out_c x (in_c * k * k)`, row-major.
    pub weight: Param,
    pub bias: Option<Param>,
    cache: Option<ConvCache>,
}

#[derive(Clone, Debug)]
struct ConvCache {
    in_shape: [usize; 4],
    out_hw: (usize, usize),
    /// Per-sample column matrices (`K x P`), or the raw input for pointwise convs.
    cols: Vec<Vec<f32>>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        dilation: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(k >= 1 && stride >= 1 && dilation >= 1);
        let fan_in = in_c * k * k;
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            dilation,
            weight: Param::he_normal(out_c * fan_in, fan_in, rng),
            bias: bias.then(|| Param::zeros(out_c)),
            cache: None,
        }
    }

    /// Spatial size of the output for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.k - 1) + 1;
        (
            (h + 2 * self.pad - span) / self.stride + 1,
            (w + 2 * self.pad - span) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, x: &[f32], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f32> {
        let p = ho * wo;
        let kk = self.k * self.k;
        let mut cols = vec![0.0f32; self.in_c * kk * p];
        for ci in 0..self.in_c {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * kk + ky * self.k + kx) * p;
                    let dst = &mut cols[row..row + p];
                    let oy_off = (ky * self.dilation) as isize - self.pad as isize;
                    let ox_off = (kx * self.dilation) as isize - self.pad as isize;
                    for oy in 0..ho {
                        let iy = (oy * self.stride) as isize + oy_off;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let d = &mut dst[oy * wo..(oy + 1) * wo];
                        if self.stride == 1 {
                            // contiguous run of valid x
                            let lo = (-ox_off).max(0) as usize;
                            let hi = ((w as isize - ox_off).min(wo as isize)).max(0) as usize;
                            if lo < hi {
                                let s = (lo as isize + ox_off) as usize;
                                d[lo..hi].copy_from_slice(&src_row[s..s + (hi - lo)]);
                            }
                        } else {
                            for (ox, v) in d.iter_mut().enumerate() {
                                let ix = (ox * self.stride) as isize + ox_off;
                                if ix >= 0 && ix < w as isize {
                                    *v = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32], dx: &mut [f32], h: usize, w: usize, ho: usize, wo: usize) {
        let p = ho * wo;
        let kk = self.k * self.k;
        for ci in 0..self.in_c {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * kk + ky * self.k + kx) * p;
                    let src = &cols[row..row + p];
                    let oy_off = (ky * self.dilation) as isize - self.pad as isize;
                    let ox_off = (kx * self.dilation) as isize - self.pad as isize;
                    for oy in 0..ho {
                        let iy = (oy * self.stride) as isize + oy_off;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let s = &src[oy * wo..(oy + 1) * wo];
                        for (ox, v) in s.iter().enumerate() {
                            let ix = (ox * self.stride) as isize + ox_off;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Inference forward pass.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.run(x, false).0
    }

    /// Forward pass that keeps the column buffers needed by [`backward`](Self::backward).
    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (out, cols) = self.run(x, true);
        self.cache = Some(ConvCache {
            in_shape: x.shape(),
            out_hw: (out.h, out.w),
            cols,
        });
        out
    }

    fn run(&self, x: &Tensor, train: bool) -> (Tensor, Vec<Vec<f32>>) {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (ho, wo) = self.output_hw(x.h, x.w);
        let p = ho * wo;
        let kdim = self.in_c * self.k * self.k;
        let mut out = Tensor::zeros(x.n, self.out_c, ho, wo);
        let mut cache_cols = Vec::new();
        for i in 0..x.n {
            let cols = if self.is_pointwise() {
                x.sample(i).to_vec()
            } else {
                self.im2col(x.sample(i), x.h, x.w, ho, wo)
            };
            let y = out.sample_mut(i);
            if let Some(b) = &self.bias {
                for (co, bv) in b.value.iter().enumerate() {
                    y[co * p..(co + 1) * p].iter_mut().for_each(|v| *v = *bv);
                }
            }
            let beta = if self.bias.is_some() { 1.0 } else { 0.0 };
            gemm(
                self.out_c,
                kdim,
                p,
                &self.weight.value,
                false,
                &cols,
                false,
                y,
                beta,
            );
            if train {
                cache_cols.push(cols);
            }
        }
        (out, cache_cols)
    }

    /// Accumulates parameter gradients; returns the input gradient when `need_dx`.
    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let cache = self
            .cache
            .take()
            .expect("conv backward without training forward");
        let [n, c, h, w] = cache.in_shape;
        let (ho, wo) = cache.out_hw;
        assert_eq!(dy.shape(), [n, self.out_c, ho, wo], "conv grad shape");
        let p = ho * wo;
        let kdim = self.in_c * self.k * self.k;
        let mut dx = need_dx.then(|| Tensor::zeros(n, c, h, w));
        let mut dcols = vec![0.0f32; kdim * p];
        for i in 0..n {
            let g = dy.sample(i);
            gemm(
                self.out_c,
                p,
                kdim,
                g,
                false,
                &cache.cols[i],
                true,
                &mut self.weight.grad,
                1.0,
            );
            if let Some(b) = &mut self.bias {
                for co in 0..self.out_c {
                    b.grad[co] += g[co * p..(co + 1) * p].iter().sum::<f32>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                if self.is_pointwise() {
                    gemm(
                        kdim,
                        self.out_c,
                        p,
                        &self.weight.value,
                        true,
                        g,
                        false,
                        dx.sample_mut(i),
                        0.0,
                    );
                } else {
                    gemm(
                        kdim,
                        self.out_c,
                        p,
                        &self.weight.value,
                        true,
                        g,
                        false,
                        &mut dcols,
                        0.0,
                    );
                    self.col2im(&dcols, dx.sample_mut(i), h, w, ho, wo);
                }
            }
        }
        dx
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}
