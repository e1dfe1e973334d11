use std::path::Path;

use super::config::SegmenterConfig;
use super::loss::{softmax_probs, ProbMap};
use super::network::SegmenterNet;
use super::train::prepare_seg_input;
use crate::checkpoint::{load_checkpoint_weights, read_checkpoint_config};
use crate::dataset::{DatasetManifest, ImageRecord, NUM_MASK_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{seg_report, ConfusionMatrix, SegEvalReport};
use crate::nn::images_to_tensor;
use crate::parallel::map_indexed;
use crate::raster::Raster;

/// A trained network together with its config.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub net: SegmenterNet,
    pub config: SegmenterConfig,
}

/// Per-pixel labels (argmax) and class probabilities at the original image size.
#[derive(Clone, Debug)]
pub struct MaskPrediction {
    pub mask: Raster,
    pub probs: ProbMap,
}

impl Segmenter {
    pub fn new(net: SegmenterNet, config: SegmenterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { net, config })
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let config: SegmenterConfig = read_checkpoint_config(checkpoint)?;
        let mut net = SegmenterNet::new(&config)?;
        load_checkpoint_weights(checkpoint, &mut net)?;
        Self::new(net, config)
    }

    /// Logits are upsampled straight to the image's own size before the softmax.
    pub fn predict(&self, image: &Raster) -> Result<MaskPrediction> {
        if image.is_empty() {
            return Err(Error::invalid("empty image"));
        }
        let input = prepare_seg_input(image, &self.config)?;
        let x = images_to_tensor(&[&input], 3);
        let logits = self.net.forward(&x, image.height, image.width)?;
        let l: Vec<f64> = logits.sample(0).iter().map(|&v| v as f64).collect();
        let probs = softmax_probs(&l, image.width, image.height, NUM_MASK_CLASSES);
        Ok(MaskPrediction {
            mask: probs.argmax(),
            probs,
        })
    }

    /// Confusion-matrix metrics over records with masks, at original resolution.
    pub fn evaluate(
        &self,
        manifest: &DatasetManifest,
        records: &[&ImageRecord],
    ) -> Result<SegEvalReport> {
        let parts = map_indexed(records.len(), |i| -> Result<ConfusionMatrix> {
            let r = records[i];
            let gt = manifest
                .load_mask(r)?
                .ok_or_else(|| Error::invalid(format!("image {} has no mask", r.id)))?;
            let pred = self.predict(&manifest.load_image(r)?)?;
            let mut cm = ConfusionMatrix::new(NUM_MASK_CLASSES);
            cm.accumulate(&pred.mask, &gt)?;
            Ok(cm)
        });
        let mut total = ConfusionMatrix::new(NUM_MASK_CLASSES);
        for p in parts {
            total.merge(&p?);
        }
        seg_report(&total)
    }
}

/// Loads a checkpoint and segments one image.
pub fn predict_mask(image: &Raster, checkpoint: &Path) -> Result<MaskPrediction> {
    Segmenter::load(checkpoint)?.predict(image)
}
