//! Contrast enhancement, resizing and training-time augmentation.

mod augment;
mod clahe;

pub use augment::{
    apply_augmentation, apply_params, augment_rng, transform_box, Affine, AugmentParams,
    AugmentationSpec, MIN_VISIBLE_FRACTION,
};
pub use clahe::{clahe, tile_lut, ClaheMode, ClaheParams};

use crate::dataset::{BoxAnnotation, ImageRecord};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// An image with its boxes and optional label mask, all in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Raster,
    pub boxes: Vec<BoxAnnotation>,
    pub mask: Option<Raster>,
}

/// Bilinear image resize, nearest-neighbour mask resize; normalized boxes carry over unchanged.
pub fn resize_with_annotations(
    sample: &LabeledImage,
    width: usize,
    height: usize,
) -> Result<LabeledImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    Ok(LabeledImage {
        image: sample.image.resize_bilinear(width, height),
        boxes: sample.boxes.clone(),
        mask: sample
            .mask
            .as_ref()
            .map(|m| m.resize_nearest(width, height)),
    })
}

/// Record metadata after a resize to `width`x`height`.
pub fn resized_record(record: &ImageRecord, width: usize, height: usize) -> ImageRecord {
    ImageRecord {
        width,
        height,
        ..record.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DistressClass;

    #[test]
    fn resize_keeps_boxes_and_label_set() {
        let mut mask = Raster::new(180, 120, 1);
        for (i, v) in mask.data.iter_mut().enumerate() {
            *v = ((i / 7) % 6) as u8;
        }
        let img = Raster::filled(180, 120, 3, 90);
        let boxes =
            vec![
                BoxAnnotation::new_clamped(DistressClass::Delamination, 0.5, 0.5, 0.2, 0.1)
                    .unwrap(),
            ];
        let s = LabeledImage {
            image: img.clone(),
            boxes: boxes.clone(),
            mask: Some(mask.clone()),
        };
        let same = resize_with_annotations(&s, 180, 120).unwrap();
        assert_eq!(same.image, img);
        let small = resize_with_annotations(&s, 90, 60).unwrap();
        assert_eq!(small.boxes, boxes);
        let present = |m: &Raster| {
            let h = m.histogram();
            (0..6).filter(|&c| h[c] > 0).collect::<Vec<_>>()
        };
        assert_eq!(present(small.mask.as_ref().unwrap()), present(&mask));
        assert!(resize_with_annotations(&s, 0, 10).is_err());
    }
}
