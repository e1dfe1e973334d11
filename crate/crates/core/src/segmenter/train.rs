use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SegmenterConfig;
use super::early_stop::EarlyStopping;
use super::loss::{class_weights_from_counts, weighted_ce_logits_parts};
use super::network::SegmenterNet;
use crate::checkpoint::save_checkpoint;
use crate::dataset::{DatasetManifest, ImageRecord, Split, NUM_MASK_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{images_to_tensor, Adam, Tensor};
use crate::parallel::map_indexed;
use crate::preprocess::{apply_params, augment_rng, clahe, AugmentParams};
use crate::raster::Raster;

pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const BEST_DIR: &str = "best";
pub const LAST_DIR: &str = "last";

/// Image and label mask resized to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedMask {
    pub id: String,
    pub image: Raster,
    pub mask: Raster,
}

/// Resize to the input size, then optional CLAHE.
pub fn prepare_seg_input(image: &Raster, config: &SegmenterConfig) -> Result<Raster> {
    let resized = image.resize_bilinear(config.input_width, config.input_height);
    match &config.clahe {
        Some(p) => clahe(&resized, p),
        None => Ok(resized),
    }
}

pub fn prepare_mask_records(
    manifest: &DatasetManifest,
    records: &[&ImageRecord],
    config: &SegmenterConfig,
) -> Result<Vec<PreparedMask>> {
    map_indexed(records.len(), |i| {
        let r = records[i];
        let mask = manifest
            .load_mask(r)?
            .ok_or_else(|| Error::invalid(format!("image {} has no mask", r.id)))?;
        Ok(PreparedMask {
            id: r.id.clone(),
            image: prepare_seg_input(&manifest.load_image(r)?, config)?,
            mask: mask.resize_nearest(config.input_width, config.input_height),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct SegmenterTrainSummary {
    pub log: Vec<SegmenterLogRow>,
    /// Config echo written to the checkpoints, class weights filled in.
    pub config: SegmenterConfig,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    pub out: PathBuf,
}

fn label_counts(masks: &[PreparedMask]) -> Vec<u64> {
    let mut counts = vec![0u64; NUM_MASK_CLASSES];
    for m in masks {
        for &v in &m.mask.data {
            if (v as usize) < NUM_MASK_CLASSES {
                counts[v as usize] += 1;
            }
        }
    }
    counts
}

fn augmented(
    p: &PreparedMask,
    config: &SegmenterConfig,
    epoch: u64,
    index: usize,
) -> (Raster, Raster) {
    let mut rng = augment_rng(config.seed ^ config.augmentation.seed, epoch, index);
    let params = if config.augment {
        config.augmentation.sample(&mut rng)
    } else {
        AugmentParams::identity()
    };
    let (img, _, mask) = apply_params(&params, &p.image, &[], Some(&p.mask));
    let mask = mask.unwrap();
    match config.crop {
        Some((cw, ch)) if (cw, ch) != (img.width, img.height) => {
            let x0 = rng.random_range(0..=img.width - cw);
            let y0 = rng.random_range(0..=img.height - ch);
            (crop(&img, x0, y0, cw, ch), crop(&mask, x0, y0, cw, ch))
        }
        _ => (img, mask),
    }
}

fn crop(r: &Raster, x0: usize, y0: usize, w: usize, h: usize) -> Raster {
    let c = r.channels;
    let mut data = Vec::with_capacity(w * h * c);
    for y in y0..y0 + h {
        let start = r.index(x0, y);
        data.extend_from_slice(&r.data[start..start + w * c]);
    }
    Raster::from_vec(w, h, c, data).unwrap()
}

/// Weighted loss parts over a batch; fills `grad` (same layout as `logits`) when given.
fn batch_loss(
    logits: &Tensor,
    masks: &[&Raster],
    weights: &[f64],
    mut grad: Option<&mut Tensor>,
) -> Result<(f64, f64)> {
    let (mut num, mut den) = (0.0, 0.0);
    let mut g = vec![0.0; logits.sample_len()];
    for (i, m) in masks.iter().enumerate() {
        let l: Vec<f64> = logits.sample(i).iter().map(|&v| v as f64).collect();
        let (a, b) =
            weighted_ce_logits_parts(&l, &m.data, weights, grad.is_some().then_some(&mut g[..]))?;
        num += a;
        den += b;
        if let Some(gt) = grad.as_deref_mut() {
            for (o, v) in gt.sample_mut(i).iter_mut().zip(&g) {
                *o = *v as f32;
            }
        }
    }
    Ok((num, den))
}

/// Weighted cross-entropy of the network on prepared images.
pub fn validation_loss(net: &SegmenterNet, val: &[PreparedMask], weights: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for chunk in val.chunks(4) {
        let images: Vec<&Raster> = chunk.iter().map(|p| &p.image).collect();
        let x = images_to_tensor(&images, 3);
        let logits = net.forward(&x, x.h, x.w)?;
        let masks: Vec<&Raster> = chunk.iter().map(|p| &p.mask).collect();
        let (a, b) = batch_loss(&logits, &masks, weights, None)?;
        num += a;
        den += b;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Trains on the train split's masks and early-stops on the val split.
pub fn train_segmenter(
    manifest: &DatasetManifest,
    config: &SegmenterConfig,
    out: &Path,
) -> Result<SegmenterTrainSummary> {
    config.validate()?;
    let mut train: Vec<&ImageRecord> = manifest.split(Split::Train).collect();
    let mut val: Vec<&ImageRecord> = manifest.split(Split::Val).collect();
    if train.is_empty() {
        return Err(Error::invalid(
            "the train split is empty; run `dataset split` first",
        ));
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    val.sort_by(|a, b| a.id.cmp(&b.id));
    let train = prepare_mask_records(manifest, &train, config)?;
    let val = prepare_mask_records(manifest, &val, config)?;
    train_segmenter_on(&train, &val, config, out)
}

/// Training loop over already prepared images.
pub fn train_segmenter_on(
    train: &[PreparedMask],
    val: &[PreparedMask],
    config: &SegmenterConfig,
    out: &Path,
) -> Result<SegmenterTrainSummary> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let weights = match &config.class_weights {
        Some(w) => w.clone(),
        None => class_weights_from_counts(&label_counts(train), config.class_weight_power)?,
    };
    info!("class weights: {weights:?}");
    let config = SegmenterConfig {
        class_weights: Some(weights.clone()),
        ..config.clone()
    };
    if val.is_empty() {
        warn!("no validation images; early stopping follows the training loss");
    }
    let mut net = SegmenterNet::new(&config)?;
    let mut adam = Adam::new(config.lr, config.weight_decay);
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);

    let log_path = out.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_file = BufWriter::new(file);
    writeln!(log_file, "epoch,train_loss,val_loss,lr").map_err(|e| Error::io(&log_path, e))?;

    let mut log = Vec::new();
    let mut stopped_early = false;
    let mut saved_best = false;
    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut num, mut den) = (0.0, 0.0);
        for picks in order.chunks(config.batch) {
            let batch = map_indexed(picks.len(), |j| {
                augmented(&train[picks[j]], &config, epoch as u64, picks[j])
            });
            let images: Vec<&Raster> = batch.iter().map(|b| &b.0).collect();
            let masks: Vec<&Raster> = batch.iter().map(|b| &b.1).collect();
            let x = images_to_tensor(&images, 3);
            let logits = net.forward_train(&x)?;
            let mut grad = Tensor::zeros(logits.n, logits.c, logits.h, logits.w);
            let (a, b) = batch_loss(&logits, &masks, &weights, Some(&mut grad))?;
            if !a.is_finite() {
                let ids: Vec<&str> = picks.iter().map(|&i| train[i].id.as_str()).collect();
                return Err(Error::NonFinite(format!(
                    "epoch {}: loss on images {:?}",
                    epoch + 1,
                    ids
                )));
            }
            if b > 0.0 {
                net.backward(&grad);
                adam.step(&mut net, (1.0 / b) as f32);
            }
            num += a;
            den += b;
        }
        let train_loss = if den > 0.0 { num / den } else { 0.0 };
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(validation_loss(&net, val, &weights)?)
        };
        let row = SegmenterLogRow {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            lr: config.lr,
        };
        let vl = row.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            log_file,
            "{},{},{},{}",
            row.epoch, row.train_loss, vl, row.lr
        )
        .map_err(|e| Error::io(&log_path, e))?;
        info!(
            "epoch {}: train loss {:.4}, val loss {vl}",
            row.epoch, train_loss
        );
        log.push(row);
        let decision = stopper.update(val_loss.unwrap_or(train_loss));
        if decision.improved {
            save_checkpoint(&out.join(BEST_DIR), &mut net, &config)?;
            saved_best = true;
        }
        if decision.stop {
            info!("early stop after epoch {}", epoch + 1);
            stopped_early = true;
            break;
        }
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    save_checkpoint(&out.join(LAST_DIR), &mut net, &config)?;
    if !saved_best {
        save_checkpoint(&out.join(BEST_DIR), &mut net, &config)?;
    }
    Ok(SegmenterTrainSummary {
        log,
        config,
        best_epoch: stopper.best_epoch,
        best_loss: stopper.best,
        stopped_early,
        out: out.to_path_buf(),
    })
}
