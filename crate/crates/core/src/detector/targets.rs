use log::debug;

use super::anchors::AnchorSet;
use super::iou::shape_iou;
use crate::dataset::{BoxAnnotation, DistressClass};
use crate::geometry::BBox;

/// Encoded regression target for one positive `(cell, anchor)` slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    /// `(tx, ty, tw, th)`: in-cell offsets and log size ratios to the anchor.
    pub t: [f64; 4],
    pub class: DistressClass,
    /// Index into [`TargetGrids::gts`].
    pub gt: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTargets {
    pub stride: usize,
    pub grid: usize,
    pub num_anchors: usize,
    /// Indexed `(anchor * grid + gy) * grid + gx`.
    pub slots: Vec<Option<Target>>,
}

impl ScaleTargets {
    pub fn slot(&self, a: usize, gy: usize, gx: usize) -> usize {
        (a * self.grid + gy) * self.grid + gx
    }
}

/// Training targets for one image at every scale.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetGrids {
    pub scales: Vec<ScaleTargets>,
    /// Ground-truth boxes in input pixels.
    pub gts: Vec<(DistressClass, BBox)>,
    /// Slots claimed by more than one GT.
    pub conflicts: usize,
}

impl TargetGrids {
    pub fn num_positives(&self) -> usize {
        self.scales
            .iter()
            .map(|s| s.slots.iter().flatten().count())
            .sum()
    }

    pub fn num_slots(&self) -> usize {
        self.scales.iter().map(|s| s.slots.len()).sum()
    }
}

/// Cell index and in-cell offset of a normalized coordinate on a `grid`-wide axis.
pub fn cell_offset(c: f64, grid: usize) -> (usize, f64) {
    let g = c * grid as f64;
    let cell = (g.floor().max(0.0) as usize).min(grid - 1);
    (cell, g - cell as f64)
}

/// Encodes a normalized box against an anchor on a grid of the given stride.
pub fn encode_box(
    b: &BoxAnnotation,
    anchor: (f64, f64),
    input_size: usize,
    stride: usize,
) -> ((usize, usize), [f64; 4]) {
    let grid = input_size / stride;
    let (gx, tx) = cell_offset(b.cx, grid);
    let (gy, ty) = cell_offset(b.cy, grid);
    let s = input_size as f64;
    let tw = (b.w * s / anchor.0).ln();
    let th = (b.h * s / anchor.1).ln();
    ((gx, gy), [tx, ty, tw, th])
}

/// Inverse of [`encode_box`]: center and size in input pixels.
pub fn decode_target(
    t: [f64; 4],
    cell: (usize, usize),
    anchor: (f64, f64),
    stride: usize,
) -> (f64, f64, f64, f64) {
    let s = stride as f64;
    (
        (t[0] + cell.0 as f64) * s,
        (t[1] + cell.1 as f64) * s,
        anchor.0 * t[2].exp(),
        anchor.1 * t[3].exp(),
    )
}

/// Assigns each GT to its center cell on every scale, for every anchor whose shape IoU
/// exceeds `assign_iou`, and always for the single best anchor overall.
pub fn assign_targets(
    boxes: &[BoxAnnotation],
    anchors: &AnchorSet,
    input_size: usize,
    assign_iou: f64,
) -> TargetGrids {
    let s = input_size as f64;
    let mut scales: Vec<ScaleTargets> = anchors
        .strides
        .iter()
        .zip(&anchors.anchors)
        .map(|(&stride, group)| {
            let grid = input_size / stride;
            ScaleTargets {
                stride,
                grid,
                num_anchors: group.len(),
                slots: vec![None; group.len() * grid * grid],
            }
        })
        .collect();
    let gts: Vec<(DistressClass, BBox)> = boxes
        .iter()
        .map(|b| {
            (
                b.class,
                BBox::from_center(b.cx * s, b.cy * s, b.w * s, b.h * s),
            )
        })
        .collect();
    let mut conflicts = 0;

    for (gi, b) in boxes.iter().enumerate() {
        let shape = (b.w * s, b.h * s);
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (si, group) in anchors.anchors.iter().enumerate() {
            for (ai, &a) in group.iter().enumerate() {
                let iou = shape_iou(shape, a);
                if iou > best.2 {
                    best = (si, ai, iou);
                }
            }
        }
        for (si, group) in anchors.anchors.iter().enumerate() {
            for (ai, &a) in group.iter().enumerate() {
                let chosen = (si, ai) == (best.0, best.1) || shape_iou(shape, a) > assign_iou;
                if !chosen {
                    continue;
                }
                let sc = &mut scales[si];
                let ((gx, gy), t) = encode_box(b, a, input_size, sc.stride);
                let idx = sc.slot(ai, gy, gx);
                let target = Target {
                    t,
                    class: b.class,
                    gt: gi,
                };
                match &sc.slots[idx] {
                    Some(prev) => {
                        conflicts += 1;
                        if gts[gi].1.area() > gts[prev.gt].1.area() {
                            sc.slots[idx] = Some(target);
                        }
                    }
                    None => sc.slots[idx] = Some(target),
                }
            }
        }
    }
    if conflicts > 0 {
        debug!("{conflicts} anchor slot(s) claimed by several boxes; kept the larger box");
    }
    TargetGrids {
        scales,
        gts,
        conflicts,
    }
}
