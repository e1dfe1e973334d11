use std::path::Path;

use super::config::DetectorConfig;
use super::decode::{decode_predictions, Detection, RawPrediction};
use super::network::DetectorNet;
use super::nms::diou_nms;
use super::train::prepare_input;
use super::AnchorSet;
use crate::checkpoint::{load_checkpoint_weights, read_checkpoint_config};
use crate::error::Result;
use crate::geometry::BBox;
use crate::nn::images_to_tensor;
use crate::raster::Raster;

/// A read-only network plus its config; `detect` takes `&self`, so one instance can serve concurrent calls.
#[derive(Clone, Debug)]
pub struct Detector {
    pub net: DetectorNet,
    pub config: DetectorConfig,
    pub anchors: AnchorSet,
}

impl Detector {
    pub fn new(net: DetectorNet, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let anchors = config.anchor_set();
        Ok(Self {
            net,
            config,
            anchors,
        })
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let config: DetectorConfig = read_checkpoint_config(checkpoint)?;
        let mut net = DetectorNet::new(&config)?;
        load_checkpoint_weights(checkpoint, &mut net)?;
        Self::new(net, config)
    }

    /// Detections in input-pixel coordinates for images already passed through [`prepare_input`].
    pub fn detect_prepared(
        &self,
        images: &[&Raster],
        conf_threshold: f64,
        nms_threshold: f64,
    ) -> Result<Vec<Vec<Detection>>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let x = images_to_tensor(images, 3);
        let heads = self.net.forward(&x)?;
        let raws = RawPrediction::from_tensors(&heads, &self.config.strides)?;
        Ok(raws
            .iter()
            .map(|r| {
                diou_nms(
                    &decode_predictions(r, &self.anchors, conf_threshold),
                    nms_threshold,
                )
            })
            .collect())
    }

    /// Resize, optional CLAHE, forward, decode, DIoU-NMS; boxes in the original image's pixels.
    pub fn detect(
        &self,
        image: &Raster,
        conf_threshold: f64,
        nms_threshold: f64,
    ) -> Result<Vec<Detection>> {
        let input = prepare_input(image, &self.config)?;
        let dets = self
            .detect_prepared(&[&input], conf_threshold, nms_threshold)?
            .remove(0);
        let s = self.config.input_size as f64;
        let (w, h) = (image.width as f64, image.height as f64);
        Ok(dets
            .into_iter()
            .filter_map(|d| {
                let b = d.bbox.scale(w / s, h / s).clamp(w, h);
                b.is_valid().then_some(Detection {
                    bbox: BBox::new(b.x1, b.y1, b.x2, b.y2),
                    ..d
                })
            })
            .collect())
    }
}

pub fn infer_detector(
    image: &Raster,
    checkpoint: &Path,
    conf_threshold: f64,
    nms_threshold: f64,
) -> Result<Vec<Detection>> {
    Detector::load(checkpoint)?.detect(image, conf_threshold, nms_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_head_detector() -> Detector {
        let config = DetectorConfig {
            input_size: 64,
            width: 4,
            ..Default::default()
        };
        let mut net = DetectorNet::new(&config).unwrap();
        net.zero_heads();
        Detector::new(net, config).unwrap()
    }

    #[test]
    fn blank_image_at_sigma_boundary() {
        let d = zero_head_detector();
        let gray = Raster::filled(90, 60, 3, 128);
        let dets = d.detect(&gray, 0.25, 0.45).unwrap();
        assert!(!dets.is_empty());
        assert!(dets.iter().all(|x| x.score == 0.25));
        assert!(d.detect(&gray, 0.26, 0.45).unwrap().is_empty());
    }

    #[test]
    fn repeatable() {
        let d = zero_head_detector();
        let mut img = Raster::new(70, 50, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 31 % 251) as u8;
        }
        let a = d.detect(&img, 0.1, 0.45).unwrap();
        assert_eq!(a, d.detect(&img, 0.1, 0.45).unwrap());
        for x in a {
            assert!(x.bbox.x1 >= 0.0 && x.bbox.x2 <= 70.0 && x.bbox.y2 <= 50.0);
        }
    }
}
