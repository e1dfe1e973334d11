//! YOLO-style one-stage detector: anchors, target assignment, CIoU loss,
//! decoding, DIoU-NMS, a compact network, training and inference.

mod anchors;
mod config;
mod decode;
mod dual;
mod infer;
mod iou;
mod loss;
mod network;
mod nms;
mod targets;
mod train;

pub use anchors::{kmeans_anchors, mean_anchor_distance, AnchorSet};
pub use config::{cosine_lr, DetectorConfig};
pub use decode::{
    decode_predictions, slot_box, Detection, RawPrediction, ScaleOutput, OUTPUTS_PER_ANCHOR,
};
pub use dual::{Dual, Real};
pub use infer::{infer_detector, Detector};
pub use iou::{box_iou, iou_generic, shape_iou, IouVariant};
pub use loss::{bce_logit, detection_loss, smooth_label, LossParams, LossTerms};
pub use network::DetectorNet;
pub use nms::{detection_order, diou_nms};
pub use targets::{
    assign_targets, cell_offset, decode_target, encode_box, ScaleTargets, Target, TargetGrids,
};
pub use train::{
    evaluate_prepared, prepare_input, prepare_records, train_detector, train_detector_on,
    DetectorLogRow, DetectorTrainSummary, PreparedImage, BEST_DIR, LAST_DIR, TRAIN_LOG_FILE,
};
