use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{BoxAnnotation, DistressClass, NUM_CLASSES};
use crate::detector::{box_iou, detection_order, Detection, IouVariant};
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// A ground-truth box in absolute pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: DistressClass,
    pub bbox: BBox,
}

impl GroundTruth {
    pub fn from_annotations(boxes: &[BoxAnnotation], width: usize, height: usize) -> Vec<Self> {
        boxes
            .iter()
            .map(|b| Self {
                class: b.class,
                bbox: b.to_pixels(width, height),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub tp: bool,
    /// Index of the matched ground truth.
    pub gt: Option<usize>,
    /// IoU with the matched GT, or the best same-class IoU for a false positive.
    pub iou: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Outcome of matching one image's detections to its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// One entry per input detection, in input order.
    pub detections: Vec<DetectionMatch>,
    pub gt_matched: Vec<bool>,
    /// Indexed by zero-based class index.
    pub per_class: [Tally; NUM_CLASSES],
}

fn iou_or_zero(a: &BBox, b: &BBox) -> f64 {
    box_iou(a, b, IouVariant::Iou).unwrap_or(0.0)
}

/// Greedy matching: per class, by descending score, each detection takes the unmatched
/// same-class GT of highest IoU if that IoU reaches `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| detection_order(&dets[a], &dets[b]).then(a.cmp(&b)));
    let mut gt_matched = vec![false; gts.len()];
    let mut detections = vec![
        DetectionMatch {
            tp: false,
            gt: None,
            iou: 0.0,
        };
        dets.len()
    ];
    let mut per_class = [Tally::default(); NUM_CLASSES];
    for &di in &order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if g.class != d.class || gt_matched[gi] {
                continue;
            }
            let iou = iou_or_zero(&d.bbox, &g.bbox);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let tally = &mut per_class[d.class.index()];
        match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                gt_matched[gi] = true;
                detections[di] = DetectionMatch {
                    tp: true,
                    gt: Some(gi),
                    iou,
                };
                tally.tp += 1;
            }
            other => {
                detections[di].iou = other.map_or(0.0, |(_, iou)| iou);
                tally.fp += 1;
            }
        }
    }
    for (g, &m) in gts.iter().zip(&gt_matched) {
        if !m {
            per_class[g.class.index()].fn_ += 1;
        }
    }
    MatchResult {
        detections,
        gt_matched,
        per_class,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    #[default]
    AllPoint,
    ElevenPoint,
}

impl FromStr for ApMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_point" | "all-point" => Ok(Self::AllPoint),
            "eleven_point" | "eleven-point" | "11point" => Ok(Self::ElevenPoint),
            _ => Err(Error::invalid(format!(
                "unknown AP method `{s}` (all_point, eleven_point)"
            ))),
        }
    }
}

impl fmt::Display for ApMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AllPoint => "all_point",
            Self::ElevenPoint => "eleven_point",
        })
    }
}

/// Precision/recall after each distinct confidence level, highest first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub confidence: Vec<f64>,
}

/// Builds the PR curve from `(score, is_tp)` pairs. Tied scores enter together.
pub fn pr_curve(scored: &[(f64, bool)], n_gt: usize) -> PrCurve {
    let mut s = scored.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = PrCurve::default();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < s.len() {
        let conf = s[i].0;
        while i < s.len() && s[i].0 == conf {
            tp += s[i].1 as usize;
            seen += 1;
            i += 1;
        }
        curve.recall.push(if n_gt > 0 {
            tp as f64 / n_gt as f64
        } else {
            0.0
        });
        curve.precision.push(tp as f64 / seen as f64);
        curve.confidence.push(conf);
    }
    curve
}

/// Highest precision among curve points with recall at least `r`.
fn interpolated_precision(curve: &PrCurve, r: f64) -> f64 {
    curve
        .recall
        .iter()
        .zip(&curve.precision)
        .filter(|(rec, _)| **rec >= r)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max)
}

pub fn average_precision(curve: &PrCurve, method: ApMethod) -> f64 {
    match method {
        ApMethod::AllPoint => {
            // running max from the right gives the interpolated precision at each point
            let n = curve.recall.len();
            let mut interp = vec![0.0; n];
            let mut m: f64 = 0.0;
            for i in (0..n).rev() {
                m = m.max(curve.precision[i]);
                interp[i] = m;
            }
            let mut prev = 0.0;
            let mut ap = 0.0;
            for i in 0..n {
                ap += (curve.recall[i] - prev) * interp[i];
                prev = curve.recall[i];
            }
            ap
        }
        ApMethod::ElevenPoint => {
            (0..=10)
                .map(|k| interpolated_precision(curve, k as f64 / 10.0))
                .sum::<f64>()
                / 11.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDetectionStats {
    pub class: DistressClass,
    pub n_gt: usize,
    /// Absent when the class has no ground truth.
    pub ap: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision or recall was 0/0 and reported as 0.
    pub undefined: bool,
}

/// Table-4-shaped detection metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalReport {
    pub per_class: Vec<ClassDetectionStats>,
    pub map: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean IoU of true positives at `report_conf`.
    pub ave_iou: f64,
    pub iou_threshold: f64,
    pub report_conf: f64,
    pub ap_method: ApMethod,
}

/// Per-class AP over the whole image set and P/R/F1/average TP IoU at `report_conf`.
pub fn detection_report(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    iou_threshold: f64,
    report_conf: f64,
    method: ApMethod,
) -> Result<DetectionEvalReport> {
    if dets.len() != gts.len() {
        return Err(Error::invalid(format!(
            "{} detection lists for {} ground-truth lists",
            dets.len(),
            gts.len()
        )));
    }
    let mut scored: Vec<Vec<(f64, bool)>> = vec![Vec::new(); NUM_CLASSES];
    let mut n_gt = [0usize; NUM_CLASSES];
    let mut at_conf = [Tally::default(); NUM_CLASSES];
    let mut tp_iou_sum = 0.0;
    for (d, g) in dets.iter().zip(gts) {
        let m = match_detections(d, g, iou_threshold);
        for gt in g {
            n_gt[gt.class.index()] += 1;
        }
        for (det, dm) in d.iter().zip(&m.detections) {
            let c = det.class.index();
            scored[c].push((det.score, dm.tp));
            if det.score >= report_conf {
                if dm.tp {
                    at_conf[c].tp += 1;
                    tp_iou_sum += dm.iou;
                } else {
                    at_conf[c].fp += 1;
                }
            }
        }
    }
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let mut aps = Vec::new();
    for class in DistressClass::ALL {
        let c = class.index();
        let t = Tally {
            fn_: n_gt[c] - at_conf[c].tp,
            ..at_conf[c]
        };
        let ap = (n_gt[c] > 0).then(|| average_precision(&pr_curve(&scored[c], n_gt[c]), method));
        aps.extend(ap);
        let precision = ratio(t.tp, t.tp + t.fp);
        let recall = ratio(t.tp, n_gt[c]);
        per_class.push(ClassDetectionStats {
            class,
            n_gt: n_gt[c],
            ap,
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
            precision,
            recall,
            f1: f1(precision, recall),
            undefined: t.tp + t.fp == 0 || n_gt[c] == 0,
        });
    }
    let tp: usize = per_class.iter().map(|c| c.tp).sum();
    let fp: usize = per_class.iter().map(|c| c.fp).sum();
    let total_gt: usize = n_gt.iter().sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, total_gt);
    Ok(DetectionEvalReport {
        per_class,
        map: if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        },
        precision,
        recall,
        f1: f1(precision, recall),
        ave_iou: if tp == 0 { 0.0 } else { tp_iou_sum / tp as f64 },
        iou_threshold,
        report_conf,
        ap_method: method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(class: DistressClass, score: f64, b: [f64; 4]) -> Detection {
        Detection {
            class,
            score,
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
        }
    }

    fn gt(class: DistressClass, b: [f64; 4]) -> GroundTruth {
        GroundTruth {
            class,
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
        }
    }

    const C: DistressClass = DistressClass::Delamination;

    #[test]
    fn exact_hit() {
        let m = match_detections(
            &[det(C, 0.9, [0.0, 0.0, 10.0, 10.0])],
            &[gt(C, [0.0, 0.0, 10.0, 10.0])],
            0.5,
        );
        assert!(m.detections[0].tp);
        assert_eq!(m.detections[0].iou, 1.0);
    }

    #[test]
    fn single_match_rule() {
        let dets = [
            det(C, 0.6, [0.0, 0.0, 10.0, 10.0]),
            det(C, 0.9, [0.0, 0.0, 10.0, 10.0]),
        ];
        let m = match_detections(&dets, &[gt(C, [0.0, 0.0, 10.0, 10.0])], 0.5);
        assert!(!m.detections[0].tp && m.detections[1].tp);
        assert_eq!(
            m.per_class[C.index()],
            Tally {
                tp: 1,
                fp: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn class_must_agree() {
        let m = match_detections(
            &[det(DistressClass::Crack, 0.9, [0.0, 0.0, 10.0, 10.0])],
            &[gt(C, [0.0, 0.0, 10.0, 10.0])],
            0.5,
        );
        assert!(!m.detections[0].tp);
        assert_eq!(m.per_class[C.index()].fn_, 1);
    }

    #[test]
    fn hand_pr_enumeration() {
        let curve = pr_curve(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        let ap = average_precision(&curve, ApMethod::AllPoint);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        let perfect = pr_curve(&[(0.9, true), (0.8, true)], 2);
        assert_eq!(average_precision(&perfect, ApMethod::AllPoint), 1.0);
        assert_eq!(average_precision(&perfect, ApMethod::ElevenPoint), 1.0);
    }

    #[test]
    fn rank_invariance() {
        let s = [
            (0.9f64, true),
            (0.5, false),
            (0.45, true),
            (0.2, false),
            (0.1, true),
        ];
        let t: Vec<(f64, bool)> = s.iter().map(|&(c, tp)| (c.powi(3) + 2.0, tp)).collect();
        for m in [ApMethod::AllPoint, ApMethod::ElevenPoint] {
            assert_eq!(
                average_precision(&pr_curve(&s, 4), m),
                average_precision(&pr_curve(&t, 4), m)
            );
        }
    }

    #[test]
    fn report_arithmetic() {
        let g = vec![
            gt(C, [0.0, 0.0, 10.0, 10.0]),
            gt(C, [20.0, 20.0, 30.0, 30.0]),
        ];
        let d = vec![
            det(C, 0.9, [0.0, 0.0, 10.0, 10.0]),
            det(C, 0.8, [50.0, 50.0, 60.0, 60.0]),
            det(C, 0.7, [20.0, 20.0, 30.0, 30.0]),
        ];
        let r = detection_report(&[d], &[g], 0.5, 0.25, ApMethod::AllPoint).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.8).abs() < 1e-12);
        assert_eq!(r.ave_iou, 1.0);
        assert!((r.map - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.per_class.iter().filter(|c| c.ap.is_some()).count(), 1);
    }

    #[test]
    fn no_detections_is_zero() {
        let g = vec![gt(C, [0.0, 0.0, 10.0, 10.0])];
        let r = detection_report(&[vec![]], &[g], 0.5, 0.25, ApMethod::AllPoint).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.map), (0.0, 0.0, 0.0, 0.0));
        assert!(r.per_class[C.index()].undefined);
    }

    #[test]
    fn perfect_detector() {
        let g = vec![
            gt(C, [0.0, 0.0, 10.0, 10.0]),
            gt(DistressClass::Crack, [5.0, 5.0, 9.0, 30.0]),
        ];
        let d: Vec<Detection> = g
            .iter()
            .map(|g| det(g.class, 0.99, g.bbox.as_array()))
            .collect();
        let r = detection_report(&[d], &[g], 0.5, 0.25, ApMethod::AllPoint).unwrap();
        assert_eq!((r.map, r.f1, r.ave_iou), (1.0, 1.0, 1.0));
    }
}
