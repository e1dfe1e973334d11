//! DeepLabv3-style semantic segmentation: atrous encoder, ASPP, weighted cross-entropy.

mod aspp;
mod config;
mod early_stop;
mod loss;
mod network;
mod predict;
mod train;

pub use aspp::{build_aspp, effective_kernel, Aspp, AsppConfig};
pub use config::SegmenterConfig;
pub use early_stop::{early_stop_epoch, EarlyStopping, StopDecision};
pub use loss::{
    class_weights_from_counts, class_weights_from_frequency, softmax_probs, train_pixel_counts,
    weighted_ce_logits, weighted_ce_logits_parts, weighted_cross_entropy, ProbMap,
};
pub use network::SegmenterNet;
pub use predict::{predict_mask, MaskPrediction, Segmenter};
pub use train::{
    prepare_mask_records, prepare_seg_input, train_segmenter, train_segmenter_on, validation_loss,
    PreparedMask, SegmenterLogRow, SegmenterTrainSummary, BEST_DIR, LAST_DIR, TRAIN_LOG_FILE,
};
