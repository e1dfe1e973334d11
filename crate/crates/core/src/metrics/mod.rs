//! Detection matching, PR curves and AP, and segmentation confusion metrics.

mod detection;
mod segmentation;

pub use detection::{
    average_precision, detection_report, match_detections, pr_curve, ApMethod, ClassDetectionStats,
    DetectionEvalReport, DetectionMatch, GroundTruth, MatchResult, PrCurve, Tally,
};
pub use segmentation::{
    seg_confusion, seg_report, ConfusionMatrix, Ratio, SegClassStats, SegEvalReport,
};
