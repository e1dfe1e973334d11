use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anchors::{kmeans_anchors, AnchorSet};
use super::config::{cosine_lr, DetectorConfig};
use super::decode::RawPrediction;
use super::infer::Detector;
use super::loss::{detection_loss, LossParams, LossTerms};
use super::network::DetectorNet;
use super::targets::assign_targets;
use crate::checkpoint::save_checkpoint;
use crate::dataset::{BoxAnnotation, DatasetManifest, ImageRecord, Split};
use crate::error::{Error, Result};
use crate::metrics::{detection_report, ApMethod, DetectionEvalReport, GroundTruth};
use crate::nn::{images_to_tensor, Adam};
use crate::parallel::map_indexed;
use crate::preprocess::{apply_params, augment_rng, clahe, AugmentParams};
use crate::raster::Raster;

pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const BEST_DIR: &str = "best";
pub const LAST_DIR: &str = "last";

/// An image resized to the network input (and contrast-enhanced when configured).
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedImage {
    pub id: String,
    pub image: Raster,
    pub boxes: Vec<BoxAnnotation>,
}

/// Resize to the square input, then optional CLAHE.
pub fn prepare_input(image: &Raster, config: &DetectorConfig) -> Result<Raster> {
    let resized = image.resize_bilinear(config.input_size, config.input_size);
    match &config.clahe {
        Some(p) => clahe(&resized, p),
        None => Ok(resized),
    }
}

pub fn prepare_records(
    manifest: &DatasetManifest,
    records: &[&ImageRecord],
    config: &DetectorConfig,
) -> Result<Vec<PreparedImage>> {
    map_indexed(records.len(), |i| {
        let r = records[i];
        Ok(PreparedImage {
            id: r.id.clone(),
            image: prepare_input(&manifest.load_image(r)?, config)?,
            boxes: r.boxes.clone(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorLogRow {
    pub iteration: usize,
    pub loss: f64,
    #[serde(rename = "box")]
    pub box_term: f64,
    #[serde(rename = "obj")]
    pub obj_term: f64,
    #[serde(rename = "cls")]
    pub cls_term: f64,
    pub lr: f64,
    #[serde(rename = "val_mAP")]
    pub val_map: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DetectorTrainSummary {
    pub log: Vec<DetectorLogRow>,
    /// Config echo written to the checkpoints, anchors filled in.
    pub config: DetectorConfig,
    pub best_map: Option<f64>,
    pub best_iteration: usize,
    pub out: PathBuf,
}

impl DetectorTrainSummary {
    pub fn initial_loss(&self) -> f64 {
        self.log.first().map_or(f64::NAN, |r| r.loss)
    }

    /// Mean loss over the last ten iterations.
    pub fn final_loss(&self) -> f64 {
        let k = self.log.len().min(10);
        self.log[self.log.len() - k..]
            .iter()
            .map(|r| r.loss)
            .sum::<f64>()
            / k as f64
    }
}

fn fit_anchors(train: &[PreparedImage], config: &DetectorConfig) -> Result<AnchorSet> {
    if let Some(a) = &config.anchors {
        return Ok(a.clone());
    }
    let s = config.input_size as f64;
    let shapes: Vec<(f64, f64)> = train
        .iter()
        .flat_map(|p| p.boxes.iter().map(|b| (b.w * s, b.h * s)))
        .collect();
    let k = config.num_anchors();
    match kmeans_anchors(&shapes, k, config.anchor_kmeans_iterations, config.seed) {
        Ok(a) => AnchorSet::from_sorted(&a, &config.strides),
        Err(e) => {
            warn!("anchor clustering failed ({e}); using default anchors");
            Ok(config.anchor_set())
        }
    }
}

/// Deterministic epoch-wise shuffled stream of training indices.
struct Sampler {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            n,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        self.order = (0..self.n).collect();
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    fn next(&mut self) -> (usize, u64) {
        if self.pos == self.n {
            self.epoch += 1;
            self.reshuffle();
        }
        self.pos += 1;
        (self.order[self.pos - 1], self.epoch)
    }
}

fn augmented(
    p: &PreparedImage,
    config: &DetectorConfig,
    epoch: u64,
    index: usize,
) -> (Raster, Vec<BoxAnnotation>) {
    let params = if config.augment {
        let mut rng = augment_rng(config.seed ^ config.augmentation.seed, epoch, index);
        config.augmentation.sample(&mut rng)
    } else {
        AugmentParams::identity()
    };
    let (img, boxes, _) = apply_params(&params, &p.image, &p.boxes, None);
    (img, boxes)
}

/// Validation metrics of a network on prepared images, boxes in input pixels.
pub fn evaluate_prepared(
    detector: &Detector,
    val: &[PreparedImage],
    iou_threshold: f64,
) -> Result<DetectionEvalReport> {
    let s = detector.config.input_size;
    let mut dets = Vec::with_capacity(val.len());
    for chunk in val.chunks(8) {
        let images: Vec<&Raster> = chunk.iter().map(|p| &p.image).collect();
        dets.extend(detector.detect_prepared(
            &images,
            detector.config.eval_conf_threshold,
            detector.config.nms_threshold,
        )?);
    }
    let gts: Vec<Vec<GroundTruth>> = val
        .iter()
        .map(|p| GroundTruth::from_annotations(&p.boxes, s, s))
        .collect();
    detection_report(
        &dets,
        &gts,
        iou_threshold,
        detector.config.conf_threshold,
        ApMethod::AllPoint,
    )
}

/// Trains on the manifest's train split and validates on its val split.
pub fn train_detector(
    manifest: &DatasetManifest,
    config: &DetectorConfig,
    out: &Path,
) -> Result<DetectorTrainSummary> {
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
    let train = prepare_records(manifest, &train, config)?;
    let val = prepare_records(manifest, &val, config)?;
    train_detector_on(&train, &val, config, out)
}

/// Training loop over already prepared images.
pub fn train_detector_on(
    train: &[PreparedImage],
    val: &[PreparedImage],
    config: &DetectorConfig,
    out: &Path,
) -> Result<DetectorTrainSummary> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (train, val, augment) = match config.overfit_images {
        Some(n) => {
            let n = n.min(train.len());
            info!("overfit mode on {n} images");
            (&train[..n], &train[..n], false)
        }
        None => (train, val, config.augment),
    };
    let anchors = fit_anchors(train, config)?;
    let config = DetectorConfig {
        anchors: Some(anchors.clone()),
        augment,
        ..config.clone()
    };
    info!("anchors: {:?}", anchors.anchors);
    let mut net = DetectorNet::new(&config)?;
    let loss_params = LossParams::from(&config);
    let mut adam = Adam::new(config.lr_max, config.weight_decay);
    let mut sampler = Sampler::new(train.len(), config.seed);
    let evaluate = config.eval_interval > 0 && !val.is_empty();

    let log_path = out.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_file = BufWriter::new(file);
    let header = if evaluate {
        "iteration,loss,box,obj,cls,lr,val_mAP"
    } else {
        "iteration,loss,box,obj,cls,lr"
    };
    writeln!(log_file, "{header}").map_err(|e| Error::io(&log_path, e))?;

    let total = config.max_iterations;
    let mb = config.micro_batch();
    let inv_batch = 1.0 / config.batch as f64;
    let mut log = Vec::with_capacity(total);
    let mut best: Option<(f64, usize)> = None;
    let mut conflicts = 0;

    for t in 0..total {
        let lr = cosine_lr(t, total, config.lr_max, config.lr_min);
        adam.lr = lr;
        let mut terms = LossTerms::default();
        for _ in 0..config.subdivisions {
            let picks: Vec<(usize, u64)> = (0..mb).map(|_| sampler.next()).collect();
            let batch = map_indexed(picks.len(), |j| {
                let (idx, epoch) = picks[j];
                augmented(&train[idx], &config, epoch, idx)
            });
            let images: Vec<&Raster> = batch.iter().map(|b| &b.0).collect();
            let x = images_to_tensor(&images, 3);
            let heads = net.forward_train(&x)?;
            let raws = RawPrediction::from_tensors(&heads, &config.strides)?;
            let mut grads = Vec::with_capacity(raws.len());
            for (raw, (_, boxes)) in raws.iter().zip(&batch) {
                let targets = assign_targets(boxes, &anchors, config.input_size, config.assign_iou);
                conflicts += targets.conflicts;
                let (l, mut g) = detection_loss(raw, &targets, &anchors, &loss_params);
                for s in &mut g.scales {
                    s.data.iter_mut().for_each(|v| *v *= inv_batch);
                }
                terms += l.scaled(inv_batch);
                grads.push(g);
            }
            if !terms.is_finite() {
                let ids: Vec<&str> = picks.iter().map(|&(i, _)| train[i].id.as_str()).collect();
                return Err(Error::NonFinite(format!(
                    "iteration {}: loss {:?} on images {:?}",
                    t + 1,
                    terms,
                    ids
                )));
            }
            net.backward(&RawPrediction::to_tensors(&grads));
        }
        adam.step(&mut net, 1.0);

        let iteration = t + 1;
        let mut row = DetectorLogRow {
            iteration,
            loss: terms.total,
            box_term: terms.box_term,
            obj_term: terms.obj_term,
            cls_term: terms.cls_term,
            lr,
            val_map: None,
        };
        if evaluate && (iteration % config.eval_interval == 0 || iteration == total) {
            let detector = Detector::new(net.clone(), config.clone())?;
            let report = evaluate_prepared(&detector, val, 0.5)?;
            row.val_map = Some(report.map);
            info!(
                "iteration {iteration}: loss {:.4}, val mAP {:.4}",
                terms.total, report.map
            );
            if best.is_none_or(|(m, _)| report.map > m) {
                best = Some((report.map, iteration));
                save_checkpoint(&out.join(BEST_DIR), &mut net, &config)?;
            }
        } else if iteration % 50 == 0 {
            info!("iteration {iteration}: loss {:.4}", terms.total);
        }
        let map_cell = row.val_map.map(|m| format!(",{m}")).unwrap_or_else(|| {
            if evaluate {
                ",".into()
            } else {
                String::new()
            }
        });
        writeln!(
            log_file,
            "{},{},{},{},{},{}{}",
            row.iteration, row.loss, row.box_term, row.obj_term, row.cls_term, row.lr, map_cell
        )
        .map_err(|e| Error::io(&log_path, e))?;
        log.push(row);
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    if conflicts > 0 {
        warn!("{conflicts} anchor slot(s) over training were claimed by several boxes; the larger box was kept");
    }
    save_checkpoint(&out.join(LAST_DIR), &mut net, &config)?;
    if best.is_none() {
        save_checkpoint(&out.join(BEST_DIR), &mut net, &config)?;
    }
    Ok(DetectorTrainSummary {
        log,
        config,
        best_map: best.map(|b| b.0),
        best_iteration: best.map_or(total, |b| b.1),
        out: out.to_path_buf(),
    })
}
