use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::preprocess::{AugmentationSpec, ClaheParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Square network input side in pixels.
    pub input_size: usize,
    pub strides: Vec<usize>,
    pub anchors_per_scale: usize,
    /// Fixed anchors; when absent, training clusters them from the train split.
    pub anchors: Option<AnchorSet>,
    pub anchor_kmeans_iterations: usize,
    /// Extra anchors become positive above this shape IoU with a GT.
    pub assign_iou: f64,
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_cls: f64,
    pub label_smoothing: f64,
    /// Skip the objectness loss on unassigned slots whose box overlaps a GT above `ignore_iou`.
    pub ignore_region: bool,
    pub ignore_iou: f64,
    /// Base channel width of the backbone.
    pub width: usize,
    pub batch: usize,
    pub subdivisions: usize,
    pub max_iterations: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    /// Validation mAP cadence in iterations; 0 disables it.
    pub eval_interval: usize,
    pub conf_threshold: f64,
    pub nms_threshold: f64,
    /// Score threshold used when decoding for validation mAP.
    pub eval_conf_threshold: f64,
    pub clahe: Option<ClaheParams>,
    pub augment: bool,
    pub augmentation: AugmentationSpec,
    pub seed: u64,
    /// Train and validate on the first N training images without augmentation.
    pub overfit_images: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 416,
            strides: vec![8, 16, 32],
            anchors_per_scale: 3,
            anchors: None,
            anchor_kmeans_iterations: 100,
            assign_iou: 0.3,
            lambda_box: 1.0,
            lambda_obj: 1.0,
            lambda_cls: 0.5,
            label_smoothing: 0.1,
            ignore_region: false,
            ignore_iou: 0.7,
            width: 16,
            batch: 64,
            subdivisions: 32,
            max_iterations: 10_000,
            lr_max: 1e-3,
            lr_min: 1e-5,
            weight_decay: 5e-4,
            eval_interval: 100,
            conf_threshold: 0.25,
            nms_threshold: 0.45,
            eval_conf_threshold: 0.005,
            clahe: None,
            augment: true,
            augmentation: AugmentationSpec::default(),
            seed: 0,
            overfit_images: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.strides.is_empty() || self.strides.contains(&0) {
            return bad("strides must be positive");
        }
        if self.overfit_images == Some(0) {
            return bad("overfit_images must be >= 1");
        }
        let max_stride = *self.strides.iter().max().unwrap();
        if self.input_size == 0 || !self.input_size.is_multiple_of(max_stride) {
            return Err(Error::Config(format!(
                "input_size {} is not divisible by stride {max_stride}",
                self.input_size
            )));
        }
        if self.strides.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad("strides must double from scale to scale");
        }
        if self.anchors_per_scale == 0 {
            return bad("anchors_per_scale must be >= 1");
        }
        if let Some(a) = &self.anchors {
            a.validate()?;
            if a.strides != self.strides {
                return bad("anchor strides differ from configured strides");
            }
            if a.anchors.iter().any(|g| g.len() != self.anchors_per_scale) {
                return bad("anchor groups must hold anchors_per_scale entries");
            }
        }
        if !(0.0..=1.0).contains(&self.assign_iou) {
            return bad("assign_iou must lie in [0, 1]");
        }
        if [self.lambda_box, self.lambda_obj, self.lambda_cls]
            .iter()
            .any(|l| l.is_nan() || *l < 0.0)
        {
            return bad("loss weights must be >= 0");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if self.batch == 0
            || self.subdivisions == 0
            || !self.batch.is_multiple_of(self.subdivisions)
        {
            return bad("batch must be a positive multiple of subdivisions");
        }
        if self.width == 0 {
            return bad("width must be >= 1");
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("need 0 <= lr_min <= lr_max and lr_max > 0");
        }
        for t in [
            self.conf_threshold,
            self.nms_threshold,
            self.eval_conf_threshold,
            self.ignore_iou,
        ] {
            if !(0.0..=1.0).contains(&t) {
                return bad("thresholds must lie in [0, 1]");
            }
        }
        if let Some(c) = &self.clahe {
            c.validate()?;
        }
        self.augmentation.validate()
    }

    /// Images per micro-batch.
    pub fn micro_batch(&self) -> usize {
        self.batch / self.subdivisions
    }

    pub fn num_anchors(&self) -> usize {
        self.strides.len() * self.anchors_per_scale
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.strides.iter().map(|s| self.input_size / s).collect()
    }

    /// Configured anchors, or the rescaled YOLOv4 defaults.
    pub fn anchor_set(&self) -> AnchorSet {
        self.anchors
            .clone()
            .unwrap_or_else(|| AnchorSet::yolo_default(self.input_size))
    }
}

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let t = t.min(total) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t / total as f64).cos())
}
