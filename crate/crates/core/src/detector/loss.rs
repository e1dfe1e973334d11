use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::decode::{slot_box, RawPrediction};
use super::dual::{Dual, Real};
use super::iou::{iou_generic, iou_unchecked, IouVariant};
use super::targets::TargetGrids;
use crate::dataset::NUM_CLASSES;
use crate::geometry::BBox;
use crate::nn::{sigmoid, softplus};

/// Loss weights and options, split out of the training config.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_cls: f64,
    pub label_smoothing: f64,
    /// Objectness of unassigned slots above this IoU with any GT is not penalized.
    pub ignore_iou: Option<f64>,
}

impl From<&super::DetectorConfig> for LossParams {
    fn from(c: &super::DetectorConfig) -> Self {
        Self {
            lambda_box: c.lambda_box,
            lambda_obj: c.lambda_obj,
            lambda_cls: c.lambda_cls,
            label_smoothing: c.label_smoothing,
            ignore_iou: c.ignore_region.then_some(c.ignore_iou),
        }
    }
}

/// Weighted loss components; `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    #[serde(rename = "box")]
    pub box_term: f64,
    #[serde(rename = "obj")]
    pub obj_term: f64,
    #[serde(rename = "cls")]
    pub cls_term: f64,
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.box_term += o.box_term;
        self.obj_term += o.obj_term;
        self.cls_term += o.cls_term;
    }
}

impl LossTerms {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            total: self.total * k,
            box_term: self.box_term * k,
            obj_term: self.obj_term * k,
            cls_term: self.cls_term * k,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.box_term, self.obj_term, self.cls_term]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Smoothed binary target `y(1 - eps) + eps / 2`.
pub fn smooth_label(y: f64, eps: f64) -> f64 {
    y * (1.0 - eps) + eps / 2.0
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, stable for infinite logits at hard targets.
pub fn bce_logit(z: f64, y: f64) -> f64 {
    let mut l = 0.0;
    if y != 0.0 {
        l += y * softplus(-z);
    }
    if y != 1.0 {
        l += (1.0 - y) * softplus(z);
    }
    l
}

/// Loss of one image and its gradient with respect to every raw output.
///
/// Box and class terms are averaged over positive slots, objectness over all slots.
pub fn detection_loss(
    raw: &RawPrediction,
    targets: &TargetGrids,
    anchors: &AnchorSet,
    params: &LossParams,
) -> (LossTerms, RawPrediction) {
    let mut grad = raw.zeros_like();
    let n_pos = targets.num_positives();
    let n_slots = targets.num_slots() as f64;
    let pos_norm = if n_pos > 0 { 1.0 / n_pos as f64 } else { 0.0 };
    let mut box_sum = 0.0;
    let mut obj_sum = 0.0;
    let mut cls_sum = 0.0;
    let eps = params.label_smoothing;

    for (si, (s, ts)) in raw.scales.iter().zip(&targets.scales).enumerate() {
        assert_eq!(
            (s.grid, s.num_anchors),
            (ts.grid, ts.num_anchors),
            "prediction/target shape"
        );
        let g = &mut grad.scales[si];
        let st = s.stride as f64;
        for a in 0..s.num_anchors {
            let anchor = anchors.anchors[si][a];
            for gy in 0..s.grid {
                for gx in 0..s.grid {
                    let slot = ts.slot(a, gy, gx);
                    let z_obj = s.get(a, 4, gy, gx);
                    let oi = s.index(a, 4, gy, gx);
                    let Some(t) = ts.slots[slot] else {
                        if let Some(thr) = params.ignore_iou {
                            let b = slot_box(s, anchor, a, gy, gx);
                            let near = b.is_valid()
                                && targets
                                    .gts
                                    .iter()
                                    .any(|(_, gt)| iou_unchecked(&b, gt, IouVariant::Iou) > thr);
                            if near {
                                continue;
                            }
                        }
                        obj_sum += bce_logit(z_obj, 0.0);
                        g.data[oi] += params.lambda_obj * sigmoid(z_obj) / n_slots;
                        continue;
                    };

                    obj_sum += bce_logit(z_obj, 1.0);
                    g.data[oi] += params.lambda_obj * (sigmoid(z_obj) - 1.0) / n_slots;

                    // box: differentiate 1 - CIoU through the decode with dual numbers
                    let v = |k: usize| Dual::<4>::var(s.get(a, k, gy, gx), k);
                    let half = Dual::cst(0.5);
                    let bx = (v(0).sigmoid() + Dual::cst(gx as f64)) * Dual::cst(st);
                    let by = (v(1).sigmoid() + Dual::cst(gy as f64)) * Dual::cst(st);
                    let bw = Dual::cst(anchor.0) * v(2).exp();
                    let bh = Dual::cst(anchor.1) * v(3).exp();
                    let pred = [
                        bx - half * bw,
                        by - half * bh,
                        bx + half * bw,
                        by + half * bh,
                    ];
                    let gt: BBox = targets.gts[t.gt].1;
                    let gt = gt.as_array().map(Dual::cst);
                    let ciou = iou_generic(pred, gt, IouVariant::Ciou);
                    box_sum += 1.0 - ciou.v;
                    for k in 0..4 {
                        g.data[s.index(a, k, gy, gx)] -= params.lambda_box * ciou.d[k] * pos_norm;
                    }

                    for c in 0..NUM_CLASSES {
                        let y = smooth_label(if c == t.class.index() { 1.0 } else { 0.0 }, eps);
                        let z = s.get(a, 5 + c, gy, gx);
                        cls_sum += bce_logit(z, y);
                        g.data[s.index(a, 5 + c, gy, gx)] +=
                            params.lambda_cls * (sigmoid(z) - y) * pos_norm;
                    }
                }
            }
        }
    }

    let box_term = params.lambda_box * box_sum * pos_norm;
    let obj_term = params.lambda_obj * obj_sum / n_slots;
    let cls_term = params.lambda_cls * cls_sum * pos_norm;
    let terms = LossTerms {
        total: box_term + obj_term + cls_term,
        box_term,
        obj_term,
        cls_term,
    };
    (terms, grad)
}
