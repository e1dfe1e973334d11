//! Pavement distress survey toolkit: dataset handling, contrast enhancement and
//! augmentation, a grid/anchor one-stage detector, an atrous-pyramid segmenter,
//! and the evaluation metrics that score both.

#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod preprocess;
pub mod raster;
pub mod segmenter;

pub use error::{Error, Result};
