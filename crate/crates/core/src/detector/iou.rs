use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::dual::Real;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouVariant {
    Iou,
    /// IoU minus squared center distance over the squared enclosing diagonal.
    Diou,
    /// DIoU minus an aspect-ratio consistency penalty.
    Ciou,
}

/// IoU family on `(x1, y1, x2, y2)` corners, generic so the loss can differentiate it.
pub fn iou_generic<T: Real>(a: [T; 4], b: [T; 4], variant: IouVariant) -> T {
    let zero = T::cst(0.0);
    let [ax1, ay1, ax2, ay2] = a;
    let [bx1, by1, bx2, by2] = b;
    let (aw, ah) = (ax2 - ax1, ay2 - ay1);
    let (bw, bh) = (bx2 - bx1, by2 - by1);
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(zero);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(zero);
    let inter = iw * ih;
    let union = aw * ah + bw * bh - inter;
    let iou = inter / union;
    if variant == IouVariant::Iou {
        return iou;
    }
    let cw = ax2.max(bx2) - ax1.min(bx1);
    let ch = ay2.max(by2) - ay1.min(by1);
    let c2 = cw * cw + ch * ch;
    let two = T::cst(2.0);
    let dx = (ax1 + ax2 - bx1 - bx2) / two;
    let dy = (ay1 + ay2 - by1 - by2) / two;
    let rho2 = dx * dx + dy * dy;
    let diou = iou - rho2 / c2;
    if variant == IouVariant::Diou {
        return diou;
    }
    let datan = (aw / ah).atan() - (bw / bh).atan();
    let v = T::cst(4.0 / (PI * PI)) * datan * datan;
    let denom = (T::cst(1.0) - iou) + v;
    if denom.val() <= 0.0 {
        // identical boxes: no aspect penalty
        return diou;
    }
    let alpha = v / denom;
    diou - alpha * v
}

/// IoU, DIoU or CIoU of two pixel boxes. Degenerate boxes are rejected.
pub fn box_iou(a: &BBox, b: &BBox, variant: IouVariant) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::invalid("IoU needs boxes with positive area"));
    }
    Ok(iou_generic(a.as_array(), b.as_array(), variant))
}

/// IoU without validation, for hot loops over boxes already known to be valid.
pub(crate) fn iou_unchecked(a: &BBox, b: &BBox, variant: IouVariant) -> f64 {
    iou_generic(a.as_array(), b.as_array(), variant)
}

/// IoU of two `(w, h)` shapes sharing a center.
pub fn shape_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes_score_one() {
        let a = BBox::new(3.0, 4.0, 10.0, 20.0);
        for v in [IouVariant::Iou, IouVariant::Diou, IouVariant::Ciou] {
            assert_eq!(box_iou(&a, &a, v).unwrap(), 1.0);
        }
    }

    #[test]
    fn overlapping_squares() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        let iou = box_iou(&a, &b, IouVariant::Iou).unwrap();
        let diou = box_iou(&a, &b, IouVariant::Diou).unwrap();
        assert!((iou - 1.0 / 7.0).abs() < 1e-12);
        assert!((diou - (1.0 / 7.0 - 2.0 / 18.0)).abs() < 1e-12);
        // equal aspect ratio: no CIoU penalty
        assert_eq!(box_iou(&a, &b, IouVariant::Ciou).unwrap(), diou);
    }

    #[test]
    fn degenerate_box_is_error() {
        let a = BBox::new(0.0, 0.0, 0.0, 2.0);
        let b = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert!(box_iou(&a, &b, IouVariant::Iou).is_err());
    }

    #[test]
    fn disjoint_boxes_have_negative_diou() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(10.0, 10.0, 11.0, 12.0);
        assert_eq!(box_iou(&a, &b, IouVariant::Iou).unwrap(), 0.0);
        assert!(box_iou(&a, &b, IouVariant::Diou).unwrap() < 0.0);
        assert!(
            box_iou(&a, &b, IouVariant::Ciou).unwrap() < box_iou(&a, &b, IouVariant::Diou).unwrap()
        );
    }

    #[test]
    fn shape_iou_cases() {
        assert_eq!(shape_iou((10.0, 10.0), (10.0, 10.0)), 1.0);
        assert!((shape_iou((10.0, 10.0), (20.0, 10.0)) - 0.5).abs() < 1e-12);
    }
}
