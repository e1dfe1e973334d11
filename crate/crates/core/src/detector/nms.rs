use std::cmp::Ordering;

use super::decode::Detection;
use super::iou::{iou_unchecked, IouVariant};

/// Descending score, then ascending `x1` (then the remaining corners) for a total order.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x1.total_cmp(&b.bbox.x1))
        .then(a.bbox.y1.total_cmp(&b.bbox.y1))
        .then(a.bbox.x2.total_cmp(&b.bbox.x2))
        .then(a.bbox.y2.total_cmp(&b.bbox.y2))
}

/// Greedy per-class NMS suppressing boxes whose DIoU with a kept box exceeds `nms_threshold`.
///
/// Output is ordered by [`detection_order`].
pub fn diou_nms(detections: &[Detection], nms_threshold: f64) -> Vec<Detection> {
    let mut sorted: Vec<Detection> = detections.to_vec();
    sorted.sort_by(detection_order);
    let mut suppressed = vec![false; sorted.len()];
    let mut keep = Vec::new();
    for i in 0..sorted.len() {
        if suppressed[i] {
            continue;
        }
        let kept = sorted[i];
        keep.push(kept);
        for j in i + 1..sorted.len() {
            if !suppressed[j]
                && sorted[j].class == kept.class
                && iou_unchecked(&kept.bbox, &sorted[j].bbox, IouVariant::Diou) > nms_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    keep
}
