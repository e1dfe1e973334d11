use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DetectorConfig;
use super::decode::OUTPUTS_PER_ANCHOR;
use crate::error::{Error, Result};
use crate::nn::{
    concat_channels, split_channels, upsample_nearest2, upsample_nearest2_backward, Activation,
    Conv2d, ConvBlock, Module, Param, Tensor,
};

/// Objectness bias at initialization: a prior probability of 1%.
const OBJ_PRIOR: f64 = 0.01;

/// Channel width of the feature map at a given stride.
fn level_channels(width: usize, stride: usize) -> usize {
    match stride {
        2 => width,
        4 => 2 * width,
        s => width * (4 + 2 * (s.trailing_zeros() as usize - 3)),
    }
}

/// One downsampling stage: a stride-2 conv followed by a 3x3 conv.
#[derive(Clone, Debug)]
struct Stage {
    down: ConvBlock,
    conv: Option<ConvBlock>,
}

impl Stage {
    fn forward(&self, x: &Tensor) -> Tensor {
        let y = self.down.forward(x);
        match &self.conv {
            Some(c) => c.forward(&y),
            None => y,
        }
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.down.forward_train(x);
        match &mut self.conv {
            Some(c) => c.forward_train(&y),
            None => y,
        }
    }

    fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let g = match &mut self.conv {
            Some(c) => c.backward(dy, true).unwrap(),
            None => dy.clone(),
        };
        self.down.backward(&g, need_dx)
    }
}

impl Module for Stage {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.down.visit_params(f);
        if let Some(c) = &mut self.conv {
            c.visit_params(f);
        }
    }
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        self.down.visit_buffers(f);
        if let Some(c) = &mut self.conv {
            c.visit_buffers(f);
        }
    }
}

/// Top-down merge into a finer level: lateral 1x1 on the coarser map, 2x upsample, concat, 3x3.
#[derive(Clone, Debug)]
struct Merge {
    lateral: ConvBlock,
    fuse: ConvBlock,
    lateral_c: usize,
    skip_c: usize,
}

/// Compact one-stage detector: strided Mish conv pyramid, light top-down neck, 1x1 heads.
#[derive(Clone, Debug)]
pub struct DetectorNet {
    pub strides: Vec<usize>,
    pub anchors_per_scale: usize,
    /// Stages up to and including the finest detection stride.
    stem: Vec<Stage>,
    /// One stage per coarser detection stride.
    pyramid: Vec<Stage>,
    /// `merges[l]` produces level `l` from level `l + 1`.
    merges: Vec<Merge>,
    heads: Vec<Conv2d>,
}

impl DetectorNet {
    pub fn new(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let mish = Activation::Mish;
        let s0 = config.strides[0];
        if !s0.is_power_of_two() || s0 < 2 {
            return Err(Error::Config(
                "the finest stride must be a power of two >= 2".into(),
            ));
        }
        let mut stem = Vec::new();
        let mut in_c = 3;
        let mut s = 2;
        while s <= s0 {
            let c = level_channels(w, s);
            stem.push(Stage {
                down: ConvBlock::new(in_c, c, 3, 2, 1, true, mish, &mut rng),
                // keep the stride-2 level cheap
                conv: (s > 2).then(|| ConvBlock::new(c, c, 3, 1, 1, true, mish, &mut rng)),
            });
            in_c = c;
            s *= 2;
        }
        let mut pyramid = Vec::new();
        for &st in &config.strides[1..] {
            let c = level_channels(w, st);
            pyramid.push(Stage {
                down: ConvBlock::new(in_c, c, 3, 2, 1, true, mish, &mut rng),
                conv: Some(ConvBlock::new(c, c, 3, 1, 1, true, mish, &mut rng)),
            });
            in_c = c;
        }
        let mut merges = Vec::new();
        for l in 0..config.strides.len() - 1 {
            let c = level_channels(w, config.strides[l]);
            let coarse = level_channels(w, config.strides[l + 1]);
            let lateral_c = c / 2;
            merges.push(Merge {
                lateral: ConvBlock::new(coarse, lateral_c, 1, 1, 1, true, mish, &mut rng),
                fuse: ConvBlock::new(lateral_c + c, c, 3, 1, 1, true, mish, &mut rng),
                lateral_c,
                skip_c: c,
            });
        }
        let out_c = config.anchors_per_scale * OUTPUTS_PER_ANCHOR;
        let obj_bias = (OBJ_PRIOR / (1.0 - OBJ_PRIOR)).ln() as f32;
        let heads = config
            .strides
            .iter()
            .map(|&st| {
                let mut h = Conv2d::new(level_channels(w, st), out_c, 1, 1, 0, 1, true, &mut rng);
                // small initial outputs keep early box gradients tame
                h.weight.value.iter_mut().for_each(|v| *v *= 0.1);
                let b = h.bias.as_mut().unwrap();
                for a in 0..config.anchors_per_scale {
                    b.value[a * OUTPUTS_PER_ANCHOR + 4] = obj_bias;
                }
                h
            })
            .collect();
        Ok(Self {
            strides: config.strides.clone(),
            anchors_per_scale: config.anchors_per_scale,
            stem,
            pyramid,
            merges,
            heads,
        })
    }

    /// Zeroes head weights and biases so every raw output is 0.
    pub fn zero_heads(&mut self) {
        for h in &mut self.heads {
            h.weight.value.iter_mut().for_each(|v| *v = 0.0);
            if let Some(b) = &mut h.bias {
                b.value.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let max = *self.strides.last().unwrap();
        if x.c != 3 || !x.h.is_multiple_of(max) || !x.w.is_multiple_of(max) || x.h == 0 || x.w == 0
        {
            return Err(Error::invalid(format!(
                "detector input {}x{}x{} must have 3 channels and sides divisible by {max}",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Head outputs, finest scale first.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for st in &self.stem {
            y = st.forward(&y);
        }
        let mut levels = vec![y];
        for st in &self.pyramid {
            let next = st.forward(levels.last().unwrap());
            levels.push(next);
        }
        let mut feats = vec![levels.pop().unwrap()];
        for (l, m) in self.merges.iter().enumerate().rev() {
            let up = upsample_nearest2(&m.lateral.forward(&feats[0]));
            let f = m.fuse.forward(&concat_channels(&[&up, &levels[l]]));
            feats.insert(0, f);
        }
        Ok(self
            .heads
            .iter()
            .zip(&feats)
            .map(|(h, f)| h.forward(f))
            .collect())
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut y = x.clone();
        for st in &mut self.stem {
            y = st.forward_train(&y);
        }
        let mut levels = vec![y];
        for st in &mut self.pyramid {
            let next = st.forward_train(levels.last().unwrap());
            levels.push(next);
        }
        let mut feats = vec![levels.pop().unwrap()];
        for l in (0..self.merges.len()).rev() {
            let m = &mut self.merges[l];
            let up = upsample_nearest2(&m.lateral.forward_train(&feats[0]));
            let f = m.fuse.forward_train(&concat_channels(&[&up, &levels[l]]));
            feats.insert(0, f);
        }
        Ok(self
            .heads
            .iter_mut()
            .zip(&feats)
            .map(|(h, f)| h.forward_train(f))
            .collect())
    }

    /// Backpropagates head gradients (finest first) into parameter gradients.
    pub fn backward(&mut self, grads: &[Tensor]) {
        let n = self.heads.len();
        assert_eq!(grads.len(), n, "one gradient per head");
        let mut dfeat: Vec<Option<Tensor>> = self
            .heads
            .iter_mut()
            .zip(grads)
            .map(|(h, g)| h.backward(g, true))
            .collect();
        // skip-path gradients into the backbone levels
        let mut dlevel: Vec<Option<Tensor>> = vec![None; n];
        for l in 0..self.merges.len() {
            let m = &mut self.merges[l];
            let df = dfeat[l].take().unwrap();
            let dcat = m.fuse.backward(&df, true).unwrap();
            let mut parts = split_channels(&dcat, &[m.lateral_c, m.skip_c]);
            let dskip = parts.pop().unwrap();
            let dup = parts.pop().unwrap();
            let dlat = m
                .lateral
                .backward(&upsample_nearest2_backward(&dup), true)
                .unwrap();
            dfeat[l + 1].as_mut().unwrap().add_assign(&dlat);
            dlevel[l] = Some(dskip);
        }
        let mut g = dfeat[n - 1].take().unwrap();
        for l in (1..n).rev() {
            let mut d = self.pyramid[l - 1].backward(&g, true).unwrap();
            if let Some(skip) = &dlevel[l - 1] {
                d.add_assign(skip);
            }
            g = d;
        }
        let k = self.stem.len();
        for (i, st) in self.stem.iter_mut().enumerate().rev() {
            match st.backward(&g, i > 0) {
                Some(d) => g = d,
                None => debug_assert!(i == 0 && k > 0),
            }
        }
    }
}

impl Module for DetectorNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for s in self.stem.iter_mut().chain(self.pyramid.iter_mut()) {
            s.visit_params(f);
        }
        for m in &mut self.merges {
            m.lateral.visit_params(f);
            m.fuse.visit_params(f);
        }
        for h in &mut self.heads {
            h.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        for s in self.stem.iter_mut().chain(self.pyramid.iter_mut()) {
            s.visit_buffers(f);
        }
        for m in &mut self.merges {
            m.lateral.visit_buffers(f);
            m.fuse.visit_buffers(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> DetectorConfig {
        DetectorConfig {
            input_size: 64,
            width: 4,
            ..Default::default()
        }
    }

    fn random_input(n: usize, side: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3 * side * side)
            .map(|_| rng.random::<f32>())
            .collect();
        Tensor::from_vec(n, 3, side, side, data)
    }

    #[test]
    fn grid_shapes() {
        let net = DetectorNet::new(&DetectorConfig {
            input_size: 416,
            width: 2,
            ..Default::default()
        })
        .unwrap();
        let out = net.forward(&Tensor::zeros(1, 3, 416, 416)).unwrap();
        let dims: Vec<_> = out.iter().map(|t| (t.c, t.h, t.w)).collect();
        assert_eq!(dims, vec![(30, 52, 52), (30, 26, 26), (30, 13, 13)]);
    }

    #[test]
    fn random_input_is_finite() {
        let net = DetectorNet::new(&small_config()).unwrap();
        for seed in 0..3 {
            for t in net.forward(&random_input(2, 64, seed)).unwrap() {
                assert!(t.is_finite());
                assert_eq!(t.c, 3 * OUTPUTS_PER_ANCHOR);
            }
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let net = DetectorNet::new(&small_config()).unwrap();
        assert!(net.forward(&Tensor::zeros(1, 3, 48, 48)).is_err());
        assert!(DetectorNet::new(&DetectorConfig {
            input_size: 100,
            ..small_config()
        })
        .is_err());
    }

    #[test]
    fn zero_heads_output_zero() {
        let mut net = DetectorNet::new(&small_config()).unwrap();
        net.zero_heads();
        for t in net.forward(&random_input(1, 64, 1)).unwrap() {
            assert!(t.data.iter().all(|&v| v == 0.0));
        }
    }

    /// Loss = sum of head outputs times fixed random weights; checks backward against finite differences.
    #[test]
    fn backward_matches_finite_differences() {
        let mut net = DetectorNet::new(&small_config()).unwrap();
        let x = random_input(2, 64, 5);
        let heads = net.forward_train(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs: Vec<Vec<f32>> = heads
            .iter()
            .map(|t| {
                (0..t.data.len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let grads: Vec<Tensor> = heads
            .iter()
            .zip(&coeffs)
            .map(|(t, c)| Tensor::from_vec(t.n, t.c, t.h, t.w, c.clone()))
            .collect();
        net.zero_grad();
        net.backward(&grads);
        let objective = |net: &mut DetectorNet| -> f64 {
            let out = net.clone().forward_train(&x).unwrap();
            out.iter()
                .zip(&coeffs)
                .map(|(t, c)| {
                    t.data
                        .iter()
                        .zip(c)
                        .map(|(a, b)| *a as f64 * *b as f64)
                        .sum::<f64>()
                })
                .sum()
        };
        // probe a few weights in the first stem conv and in a merge
        let mut probes = Vec::new();
        let mut idx = 0;
        net.visit_params(&mut |p| {
            if idx == 0 || idx == 20 {
                probes.push((idx, 0usize, p.grad[0] as f64));
                probes.push((idx, p.value.len() / 2, p.grad[p.value.len() / 2] as f64));
            }
            idx += 1;
        });
        for (pi, k, analytic) in probes {
            let h = 1e-2f32;
            let shifted = |delta: f32| {
                let mut n2 = net.clone();
                let mut j = 0;
                n2.visit_params(&mut |p| {
                    if j == pi {
                        p.value[k] += delta;
                    }
                    j += 1;
                });
                objective(&mut n2)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h as f64);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            assert!(rel < 2e-2, "param {pi}[{k}]: fd {fd} vs {analytic}");
        }
    }
}
