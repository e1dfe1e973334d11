//! Minimal CPU convolutional network toolkit: layers with explicit backward
//! passes, an Adam optimiser and a flat weight-blob format.

mod act;
mod block;
mod conv;
mod gemm;
mod norm;
mod optim;
mod param;
mod resample;
mod tensor;

use std::fs;
use std::path::Path;

pub use act::{mish, mish_grad, sigmoid, softplus, Activation};
pub use block::ConvBlock;
pub use conv::Conv2d;
pub use gemm::gemm;
pub use norm::BatchNorm2d;
pub use optim::Adam;
pub use param::{Module, Param};
pub use resample::{
    global_avg_pool, global_avg_pool_backward, upsample_bilinear, upsample_bilinear_backward,
    upsample_nearest2, upsample_nearest2_backward,
};
pub use tensor::{concat_channels, split_channels, Tensor};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Stacks equally sized images into an NCHW batch scaled to `[0, 1]`.
/// Single-channel images are replicated to `channels`.
pub fn images_to_tensor(images: &[&Raster], channels: usize) -> Tensor {
    let (w, h) = (images[0].width, images[0].height);
    let plane = w * h;
    let mut t = Tensor::zeros(images.len(), channels, h, w);
    for (i, img) in images.iter().enumerate() {
        assert_eq!(
            (img.width, img.height),
            (w, h),
            "batch images must share a size"
        );
        let dst = t.sample_mut(i);
        for c in 0..channels {
            let src_c = if img.channels == 1 {
                0
            } else {
                c.min(img.channels - 1)
            };
            let out = &mut dst[c * plane..(c + 1) * plane];
            for (p, v) in out.iter_mut().enumerate() {
                *v = img.data[p * img.channels + src_c] as f32 / 255.0;
            }
        }
    }
    t
}

const BLOB_MAGIC: &[u8; 8] = b"PVSCNW01";

/// Writes a module's parameters and buffers as little-endian f32 after a small header.
pub fn save_weights(model: &mut dyn Module, path: &Path) -> Result<()> {
    let state = model.state_vec();
    let mut bytes = Vec::with_capacity(16 + state.len() * 4);
    bytes.extend_from_slice(BLOB_MAGIC);
    bytes.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for v in state {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(model: &mut dyn Module, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != BLOB_MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a weight blob",
            path.display()
        )));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::Checkpoint(format!(
            "{} is truncated",
            path.display()
        )));
    }
    let state: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !model.load_state_vec(&state) {
        return Err(Error::Checkpoint(format!(
            "{} holds {} values but the configured network needs a different count",
            path.display(),
            n
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
