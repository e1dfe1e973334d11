use serde::{Deserialize, Serialize};

use super::aspp::AsppConfig;
use crate::dataset::NUM_MASK_CLASSES;
use crate::error::{Error, Result};
use crate::preprocess::{AugmentationSpec, ClaheParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    /// Network input size; images are resized to it.
    pub input_width: usize,
    pub input_height: usize,
    /// Encoder downsampling factor: 8 or 16.
    pub output_stride: usize,
    /// Base channel width of the encoder.
    pub width: usize,
    pub aspp: AsppConfig,
    /// Per-label loss weights (background first); derived from train pixel frequencies when absent.
    pub class_weights: Option<Vec<f64>>,
    /// Exponent on the inverse frequency when weights are derived.
    pub class_weight_power: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Random training crop `(width, height)` taken from the resized image.
    pub crop: Option<(usize, usize)>,
    pub clahe: Option<ClaheParams>,
    pub augment: bool,
    pub augmentation: AugmentationSpec,
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            input_width: 480,
            input_height: 320,
            output_stride: 16,
            width: 16,
            aspp: AsppConfig::default(),
            class_weights: None,
            class_weight_power: 1.0,
            lr: 5e-4,
            weight_decay: 0.0,
            batch: 4,
            max_epochs: 40,
            patience: 10,
            min_delta: 1e-4,
            crop: None,
            clahe: None,
            augment: true,
            augmentation: AugmentationSpec::default(),
            seed: 0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.output_stride != 8 && self.output_stride != 16 {
            return bad(format!(
                "output_stride must be 8 or 16, got {}",
                self.output_stride
            ));
        }
        let (tw, th) = self.crop.unwrap_or((self.input_width, self.input_height));
        for (name, v) in [
            ("input_width", self.input_width),
            ("input_height", self.input_height),
            ("crop width", tw),
            ("crop height", th),
        ] {
            if v == 0 || v % self.output_stride != 0 {
                return bad(format!(
                    "{name} {v} must be a positive multiple of {}",
                    self.output_stride
                ));
            }
        }
        if tw > self.input_width || th > self.input_height {
            return bad("crop must fit inside the input size".into());
        }
        if let Some(w) = &self.class_weights {
            if w.len() != NUM_MASK_CLASSES || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad(format!(
                    "class_weights needs {NUM_MASK_CLASSES} positive entries"
                ));
            }
        }
        if !(self.class_weight_power >= 0.0 && self.class_weight_power.is_finite()) {
            return bad("class_weight_power must be finite and >= 0".into());
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if self.width == 0 {
            return bad("width must be >= 1".into());
        }
        if self.lr.is_nan()
            || self.lr <= 0.0
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
            || self.min_delta < 0.0
        {
            return bad("lr must be > 0; weight_decay and min_delta >= 0".into());
        }
        if let Some(c) = &self.clahe {
            c.validate()?;
        }
        self.aspp.validate()?;
        self.augmentation.validate()
    }
}
