//! Taxonomy, annotation formats, manifests, splitting, statistics and the
//! synthetic data generator.

mod classes;
mod manifest;
mod split;
mod stats;
pub mod synth;

pub use classes::{
    ClassEntry, ClassTable, DistressClass, BACKGROUND, NUM_CLASSES, NUM_MASK_CLASSES,
};
pub use manifest::{
    ingest_manifest, parse_box_line, read_box_file, write_box_file, BoxAnnotation, DatasetManifest,
    ImageRecord, Split, BOX_EPS, IMAGES_DIR, LABELS_DIR, MANIFEST_FILE, MASKS_DIR,
};
pub use split::stratified_split;
pub use stats::{class_stats, ClassStats, SplitCounts};
pub use synth::{generate_synthetic, synthesize, synthesize_indexed, SynthConfig, SyntheticSample};
