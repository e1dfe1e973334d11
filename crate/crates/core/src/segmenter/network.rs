use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::aspp::{build_aspp, Aspp};
use super::config::SegmenterConfig;
use crate::dataset::NUM_MASK_CLASSES;
use crate::error::{Error, Result};
use crate::nn::{
    upsample_bilinear, upsample_bilinear_backward, Activation, Conv2d, ConvBlock, Module, Param,
    Tensor,
};

/// Compact encoder (one atrous stage), ASPP, 1x1 classifier, bilinear upsampling to the input size.
#[derive(Clone, Debug)]
pub struct SegmenterNet {
    pub output_stride: usize,
    encoder: Vec<ConvBlock>,
    pub aspp: Aspp,
    head: Conv2d,
    feat_hw: (usize, usize),
}

impl SegmenterNet {
    pub fn new(config: &SegmenterConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.width;
        let relu = Activation::Relu;
        let os16 = config.output_stride == 16;
        let mut blk = |i, o, s, d| ConvBlock::new(i, o, 3, s, d, true, relu, &mut rng);
        let mut encoder = vec![
            blk(3, w, 2, 1),
            blk(w, 2 * w, 2, 1),
            blk(2 * w, 2 * w, 1, 1),
            blk(2 * w, 4 * w, 2, 1),
            blk(4 * w, 4 * w, 1, 1),
        ];
        // the 1/16 stage: strided at output stride 16, dilated at 8
        if os16 {
            encoder.push(blk(4 * w, 6 * w, 2, 1));
            encoder.push(blk(6 * w, 6 * w, 1, 1));
        } else {
            encoder.push(blk(4 * w, 6 * w, 1, 2));
            encoder.push(blk(6 * w, 6 * w, 1, 2));
        }
        // atrous stage in place of a further downsampling
        encoder.push(blk(6 * w, 6 * w, 1, if os16 { 2 } else { 4 }));
        let aspp = build_aspp(6 * w, &config.aspp, &mut rng)?;
        let head = Conv2d::new(
            config.aspp.branch_channels,
            NUM_MASK_CLASSES,
            1,
            1,
            0,
            1,
            true,
            &mut rng,
        );
        Ok(Self {
            output_stride: config.output_stride,
            encoder,
            aspp,
            head,
            feat_hw: (0, 0),
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c != 3
            || !x.h.is_multiple_of(self.output_stride)
            || !x.w.is_multiple_of(self.output_stride)
            || x.h == 0
            || x.w == 0
        {
            return Err(Error::invalid(format!(
                "segmenter input {}x{}x{} must have 3 channels and sides divisible by {}",
                x.c, x.h, x.w, self.output_stride
            )));
        }
        Ok(())
    }

    /// Class logits at feature resolution.
    pub fn forward_features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = x.clone();
        for b in &self.encoder {
            y = b.forward(&y);
        }
        Ok(self.head.forward(&self.aspp.forward(&y)))
    }

    /// Logits upsampled to `out_h x out_w`.
    pub fn forward(&self, x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
        Ok(upsample_bilinear(&self.forward_features(x)?, out_h, out_w))
    }

    /// Training forward; logits at the input size.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = x.clone();
        for b in &mut self.encoder {
            y = b.forward_train(&y);
        }
        let logits = self.head.forward_train(&self.aspp.forward_train(&y));
        self.feat_hw = (logits.h, logits.w);
        Ok(upsample_bilinear(&logits, x.h, x.w))
    }

    pub fn backward(&mut self, dlogits: &Tensor) {
        let (fh, fw) = self.feat_hw;
        let d = upsample_bilinear_backward(dlogits, fh, fw);
        let d = self.head.backward(&d, true).unwrap();
        let mut g = self.aspp.backward(&d);
        let n = self.encoder.len();
        for (i, b) in self.encoder.iter_mut().enumerate().rev() {
            if let Some(dx) = b.backward(&g, i > 0) {
                g = dx;
            }
            debug_assert!(i > 0 || n > 0);
        }
    }
}

impl Module for SegmenterNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.encoder {
            b.visit_params(f);
        }
        self.aspp.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Vec<f32>)) {
        for b in &mut self.encoder {
            b.visit_buffers(f);
        }
        self.aspp.visit_buffers(f);
    }
}
