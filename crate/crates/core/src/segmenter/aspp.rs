use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    concat_channels, global_avg_pool, global_avg_pool_backward, split_channels, upsample_bilinear,
    upsample_bilinear_backward, Activation, ConvBlock, Module, Param, Tensor,
};

/// Span of a `k`-tap kernel dilated by rate `r`.
pub fn effective_kernel(k: usize, r: usize) -> usize {
    k + (k - 1) * (r - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsppConfig {
    pub rates: Vec<usize>,
    pub branch_channels: usize,
    pub include_image_pooling: bool,
}

impl Default for AsppConfig {
    fn default() -> Self {
        Self {
            rates: vec![6, 12, 18],
            branch_channels: 64,
            include_image_pooling: true,
        }
    }
}

impl AsppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rates.contains(&0) {
            return Err(Error::Config("ASPP rates must be >= 1".into()));
        }
        let mut r = self.rates.clone();
        r.sort_unstable();
        r.dedup();
        if r.len() != self.rates.len() {
            return Err(Error::Config("ASPP rates must be distinct".into()));
        }
        if self.branch_channels == 0 {
            return Err(Error::Config("ASPP branch_channels must be >= 1".into()));
        }
        Ok(())
    }
}

/// Atrous spatial pyramid pooling: 1x1 branch, one dilated 3x3 branch per rate and
/// an image-level pooling branch, concatenated and fused by a 1x1 conv.
#[derive(Clone, Debug)]
pub struct Aspp {
    pub conv1x1: ConvBlock,
    pub atrous: Vec<ConvBlock>,
    /// Global average pool, then 1x1 conv (no batch norm on a 1x1 map).
    pub pooling: Option<ConvBlock>,
    pub fuse: ConvBlock,
    branch_channels: usize,
    in_hw: (usize, usize),
}

pub fn build_aspp(in_channels: usize, config: &AsppConfig, rng: &mut ChaCha8Rng) -> Result<Aspp> {
    config.validate()?;
    if in_channels == 0 {
        return Err(Error::Config(
            "ASPP needs at least one input channel".into(),
        ));
    }
    let bc = config.branch_channels;
    let relu = Activation::Relu;
    let conv1x1 = ConvBlock::new(in_channels, bc, 1, 1, 1, true, relu, rng);
    let atrous = config
        .rates
        .iter()
        .map(|&r| ConvBlock::new(in_channels, bc, 3, 1, r, true, relu, rng))
        .collect();
    let pooling = config
        .include_image_pooling
        .then(|| ConvBlock::new(in_channels, bc, 1, 1, 1, false, relu, rng));
    let branches = 1 + config.rates.len() + config.include_image_pooling as usize;
    let fuse = ConvBlock::new(branches * bc, bc, 1, 1, 1, true, relu, rng);
    Ok(Aspp {
        conv1x1,
        atrous,
        pooling,
        fuse,
        branch_channels: bc,
        in_hw: (0, 0),
    })
}

impl Aspp {
    pub fn num_branches(&self) -> usize {
        1 + self.atrous.len() + self.pooling.is_some() as usize
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut outs = vec![self.conv1x1.forward(x)];
        outs.extend(self.atrous.iter().map(|b| b.forward(x)));
        if let Some(p) = &self.pooling {
            outs.push(upsample_bilinear(&p.forward(&global_avg_pool(x)), x.h, x.w));
        }
        let refs: Vec<&Tensor> = outs.iter().collect();
        self.fuse.forward(&concat_channels(&refs))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.in_hw = (x.h, x.w);
        let mut outs = vec![self.conv1x1.forward_train(x)];
        for b in &mut self.atrous {
            outs.push(b.forward_train(x));
        }
        if let Some(p) = &mut self.pooling {
            outs.push(upsample_bilinear(
                &p.forward_train(&global_avg_pool(x)),
                x.h,
                x.w,
            ));
        }
        let refs: Vec<&Tensor> = outs.iter().collect();
        self.fuse.forward_train(&concat_channels(&refs))
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (h, w) = self.in_hw;
        let dcat = self.fuse.backward(dy, true).unwrap();
        let sizes = vec![self.branch_channels; self.num_branches()];
        let mut parts = split_channels(&dcat, &sizes).into_iter();
        let mut dx = self.conv1x1.backward(&parts.next().unwrap(), true).unwrap();
        for b in &mut self.atrous {
            dx.add_assign(&b.backward(&parts.next().unwrap(), true).unwrap());
        }
        if let Some(p) = &mut self.pooling {
            let dp = upsample_bilinear_backward(&parts.next().unwrap(), 1, 1);
            let dpool = p.backward(&dp, true).unwrap();
            dx.add_assign(&global_avg_pool_backward(&dpool, h, w));
        }
        dx
    }
}

impl Module for Aspp {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1x1.visit_params(f);
        for b in &mut self.atrous {
            b.visit_params(f);
        }
        if let Some(p) = &mut self.pooling {
            p.visit_params(f);
        }
        self.fuse.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        self.conv1x1.visit_buffers(f);
        for b in &mut self.atrous {
            b.visit_buffers(f);
        }
        self.fuse.visit_buffers(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Conv2d;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            n,
            c,
            h,
            w,
            (0..n * c * h * w)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }

    #[test]
    fn effective_kernel_sizes() {
        assert_eq!(effective_kernel(3, 1), 3);
        assert_eq!(effective_kernel(3, 2), 5);
        assert_eq!(effective_kernel(3, 12), 25);
    }

    #[test]
    fn output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AsppConfig {
            branch_channels: 5,
            ..Default::default()
        };
        let aspp = build_aspp(4, &cfg, &mut rng).unwrap();
        let y = aspp.forward(&random(2, 4, 9, 7, 1));
        assert_eq!(y.shape(), [2, 5, 9, 7]);
    }

    /// Direct-loop dilated convolution used as an oracle.
    fn direct(conv: &Conv2d, x: &Tensor) -> Tensor {
        let (ho, wo) = conv.output_hw(x.h, x.w);
        let mut out = Tensor::zeros(x.n, conv.out_c, ho, wo);
        let k = conv.k;
        for n in 0..x.n {
            for co in 0..conv.out_c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.value[co] as f64);
                        for ci in 0..conv.in_c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * conv.stride + ky * conv.dilation) as isize
                                        - conv.pad as isize;
                                    let ix = (ox * conv.stride + kx * conv.dilation) as isize
                                        - conv.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize
                                    {
                                        continue;
                                    }
                                    let wv = conv.weight.value
                                        [((co * conv.in_c + ci) * k + ky) * k + kx];
                                    acc += wv as f64 * x.at(n, ci, iy as usize, ix as usize) as f64;
                                }
                            }
                        }
                        let i = ((n * conv.out_c + co) * ho + oy) * wo + ox;
                        out.data[i] = acc as f32;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn rate_one_branch_is_plain_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AsppConfig {
            rates: vec![1, 3],
            branch_channels: 4,
            include_image_pooling: true,
        };
        let aspp = build_aspp(3, &cfg, &mut rng).unwrap();
        let conv = &aspp.atrous[0].conv;
        assert_eq!((conv.k, conv.dilation, conv.pad), (3, 1, 1));
        let x = random(1, 3, 8, 6, 3);
        let got = conv.forward(&x);
        let want = direct(conv, &x);
        let diff = got
            .data
            .iter()
            .zip(&want.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(diff <= 1e-6, "{diff}");
        // dilated branches keep the spatial size
        assert_eq!(aspp.atrous[1].conv.forward(&x).shape(), [1, 4, 8, 6]);
    }

    #[test]
    fn atrous_translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = 2;
        let conv = Conv2d::new(2, 3, 3, 1, r, r, true, &mut rng);
        let x = random(1, 2, 16, 16, 5);
        // shift right by r pixels
        let mut xs = Tensor::zeros(1, 2, 16, 16);
        for c in 0..2 {
            for y in 0..16 {
                for xx in r..16 {
                    xs.data[(c * 16 + y) * 16 + xx] = x.at(0, c, y, xx - r);
                }
            }
        }
        let a = conv.forward(&x);
        let b = conv.forward(&xs);
        for c in 0..3 {
            for y in 2 * r..16 - 2 * r {
                for xx in 3 * r..16 - 2 * r {
                    assert!((b.at(0, c, y, xx) - a.at(0, c, y, xx - r)).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn pooling_branch_constant_on_constant_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let aspp = build_aspp(3, &AsppConfig::default(), &mut rng).unwrap();
        let x = Tensor::from_vec(1, 3, 5, 4, vec![0.7; 60]);
        let p = aspp.pooling.as_ref().unwrap();
        let y = upsample_bilinear(&p.forward(&global_avg_pool(&x)), 5, 4);
        for c in 0..y.c {
            let plane = &y.sample(0)[c * 20..(c + 1) * 20];
            assert!(plane.iter().all(|v| *v == plane[0]));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = AsppConfig {
            rates: vec![1, 2],
            branch_channels: 3,
            include_image_pooling: true,
        };
        let mut aspp = build_aspp(2, &cfg, &mut rng).unwrap();
        let x = random(2, 2, 6, 5, 9);
        let y = aspp.forward_train(&x);
        let coeff = random(y.n, y.c, y.h, y.w, 10);
        let dx = aspp.backward(&coeff);
        let f = |xx: &Tensor| -> f64 {
            let out = aspp.clone().forward_train(xx);
            out.data
                .iter()
                .zip(&coeff.data)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum()
        };
        for i in [0usize, 7, 33, 59] {
            let h = 1e-2;
            let mut p = x.clone();
            p.data[i] += h;
            let mut m = x.clone();
            m.data[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h as f64);
            let an = dx.data[i] as f64;
            assert!(
                (fd - an).abs() <= 2e-2 * fd.abs().max(an.abs()).max(0.1),
                "{i}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(AsppConfig {
            rates: vec![6, 6],
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AsppConfig {
            rates: vec![0],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
