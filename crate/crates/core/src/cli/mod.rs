//! Command-line front end: subcommands, experiment configs, overlays and reports.

mod config;
mod overlay;
mod report;

pub use config::{parse_flat, EvalParams, ExperimentConfig, PreprocessMode, Task};
pub use overlay::{render_detection_overlay, render_mask_overlay, OverlayStyle};
pub use report::{
    emit_detection_report, emit_detector_curves, emit_segmentation_report, emit_segmenter_curves,
    load_detection_report, load_segmentation_report, DetectionReportSet, SegmentationReportSet,
    DETECTION_REPORT, LOSS_CURVE_FILE, MAP_CURVE_FILE, SEGMENTATION_REPORT,
};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::checkpoint::{read_json, write_json, CONFIG_FILE};
use crate::dataset::{
    class_stats, generate_synthetic, ingest_manifest, stratified_split, DatasetManifest,
    ImageRecord, Split, SynthConfig, MANIFEST_FILE, NUM_MASK_CLASSES,
};
use crate::detector::{train_detector, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::metrics::{detection_report, seg_report, ApMethod, ConfusionMatrix, GroundTruth};
use crate::parallel::map_indexed;
use crate::preprocess::{clahe, ClaheMode};
use crate::raster::Raster;
use crate::segmenter::{train_segmenter, Segmenter, SegmenterConfig};

#[derive(Parser, Debug)]
#[command(
    name = "pavescan",
    version,
    about = "Pavement distress detection and segmentation"
)]
pub struct Cli {
    /// Experiment config (flat `key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` config overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dataset management.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// CLAHE-process an image or a directory of images.
    Preprocess(PreprocessArgs),
    /// Train a model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Evaluate a checkpoint.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run a checkpoint on images and write predictions and overlays.
    Infer(InferArgs),
    /// Merge saved report JSON files into one multi-column report.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Build `manifest.jsonl` from `images/`, `labels/` and `masks/`.
    Ingest {
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Per-class image/annotation counts per split.
    Stats {
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Stratified train/val split.
    Split {
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        /// Discard an existing assignment first.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 250)]
        count: usize,
        #[arg(long, default_value_t = 192)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        /// Also split with this validation fraction.
        #[arg(long)]
        val_fraction: Option<f64>,
    },
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub clip_limit: Option<f64>,
    /// Tile grid `ROWSxCOLS`.
    #[arg(long)]
    pub tiles: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct RunPaths {
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preprocess: Option<PreprocessMode>,
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    Detect(RunPaths),
    Segment(RunPaths),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalPreprocess {
    None,
    Clahe,
    /// Both, as Original and Processed columns.
    Both,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint for the Processed column (defaults to `--checkpoint`).
    #[arg(long)]
    pub processed_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preprocess: Option<EvalPreprocess>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub report_conf: Option<f64>,
    #[arg(long)]
    pub ap_method: Option<String>,
    /// Directory of predicted label-mask PNGs (segment only).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth label-mask PNGs (segment only).
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    Detect(EvalArgs),
    Segment(EvalArgs),
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Inferred from the checkpoint config when omitted.
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long)]
    pub conf: Option<f64>,
    #[arg(long)]
    pub nms: Option<f64>,
    #[arg(long)]
    pub no_overlay: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report JSON for the Original column.
    #[arg(long)]
    pub original: PathBuf,
    /// Report JSON for the Processed column.
    #[arg(long)]
    pub processed: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit code:
/// 0 success, 1 validation error, 2 runtime failure.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut pairs = match &cli.config {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_flat(&text, p)?
        }
        None => Vec::new(),
    };
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    let config = ExperimentConfig::from_pairs(&pairs)?;
    config.validate()?;
    Ok(config)
}

fn apply_paths(config: &mut ExperimentConfig, root: &Option<PathBuf>, out: &Option<PathBuf>) {
    if let Some(r) = root {
        config.data_root = Some(r.clone());
    }
    if let Some(o) = out {
        config.out_dir = Some(o.clone());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    match &cli.command {
        Command::Train(TrainCommand::Detect(p)) | Command::Train(TrainCommand::Segment(p)) => {
            apply_paths(&mut config, &p.root, &p.out);
            if let Some(m) = p.preprocess {
                config.preprocess = m;
            }
            config.task = match cli.command {
                Command::Train(TrainCommand::Detect(_)) => Task::Detect,
                _ => Task::Segment,
            };
        }
        Command::Eval(EvalCommand::Detect(a)) | Command::Eval(EvalCommand::Segment(a)) => {
            apply_paths(&mut config, &a.root, &a.out);
        }
        Command::Dataset(DatasetCommand::Ingest { root })
        | Command::Dataset(DatasetCommand::Stats { root, .. })
        | Command::Dataset(DatasetCommand::Split { root, .. }) => {
            apply_paths(&mut config, root, &None)
        }
        _ => {}
    }
    if cli.dump_config {
        print!("{}", config.to_flat()?);
        return Ok(());
    }
    match cli.command {
        Command::Dataset(d) => run_dataset(d, &config),
        Command::Preprocess(a) => run_preprocess(a, &config),
        Command::Train(TrainCommand::Detect(_)) => run_train_detect(&config),
        Command::Train(TrainCommand::Segment(_)) => run_train_segment(&config),
        Command::Eval(EvalCommand::Detect(a)) => run_eval_detect(a, &config),
        Command::Eval(EvalCommand::Segment(a)) => run_eval_segment(a, &config),
        Command::Infer(a) => run_infer(a),
        Command::Report(a) => run_report(a),
    }
}

fn manifest_path(root: &Path) -> PathBuf {
    root.join(MANIFEST_FILE)
}

/// The manifest under `root`, ingested on the fly when `manifest.jsonl` is absent.
pub fn open_manifest(root: &Path) -> Result<DatasetManifest> {
    let p = manifest_path(root);
    if p.is_file() {
        DatasetManifest::load_jsonl(&p)
    } else if root.is_dir() {
        ingest_manifest(root)
    } else {
        Err(Error::MissingFile(root.to_path_buf()))
    }
}

fn run_dataset(cmd: DatasetCommand, config: &ExperimentConfig) -> Result<()> {
    match cmd {
        DatasetCommand::Ingest { .. } => {
            let root = config.data_root()?;
            let m = ingest_manifest(root)?;
            m.save_jsonl(&manifest_path(root))?;
            println!(
                "ingested {} images into {}",
                m.records.len(),
                manifest_path(root).display()
            );
        }
        DatasetCommand::Stats { json, .. } => {
            let m = open_manifest(config.data_root()?)?;
            let stats = class_stats(&m);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{stats}");
            }
        }
        DatasetCommand::Split {
            val_fraction,
            force,
            ..
        } => {
            let root = config.data_root()?;
            let mut m = open_manifest(root)?;
            if force {
                m.records
                    .iter_mut()
                    .for_each(|r| r.split = Split::Unassigned);
            }
            let m = stratified_split(&m, val_fraction, config.seed)?;
            m.save_jsonl(&manifest_path(root))?;
            print!("{}", class_stats(&m));
        }
        DatasetCommand::Synth {
            out,
            count,
            width,
            height,
            val_fraction,
        } => {
            let cfg = SynthConfig {
                n_images: count,
                width,
                height,
                seed: config.seed,
                ..Default::default()
            };
            let mut m = generate_synthetic(&cfg, &out)?;
            if let Some(f) = val_fraction {
                m = stratified_split(&m, f, config.seed)?;
                m.save_jsonl(&manifest_path(&out))?;
            }
            println!(
                "wrote {} synthetic images to {}",
                m.records.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn image_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::MissingFile(input.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_preprocess(a: PreprocessArgs, config: &ExperimentConfig) -> Result<()> {
    let mut params = config.clahe;
    if let Some(c) = a.clip_limit {
        params.clip_limit = c;
    }
    if let Some(t) = &a.tiles {
        let parsed = t
            .split_once(['x', 'X'])
            .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)));
        params.tiles =
            parsed.ok_or_else(|| Error::Config(format!("--tiles expects ROWSxCOLS, got `{t}`")))?;
    }
    if let Some(m) = &a.mode {
        params.mode = m.parse::<ClaheMode>()?;
    }
    params.validate()?;
    let files = image_files(&a.input)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let results = map_indexed(files.len(), |i| -> Result<()> {
        let img = Raster::load(&files[i])?;
        clahe(&img, &params)?.save_png(&a.out.join(format!("{}.png", stem(&files[i]))))
    });
    results.into_iter().collect::<Result<Vec<_>>>()?;
    println!(
        "processed {} image(s) into {}",
        files.len(),
        a.out.display()
    );
    Ok(())
}

fn run_train_detect(config: &ExperimentConfig) -> Result<()> {
    let manifest = open_manifest(config.data_root()?)?;
    let out = config.out_dir()?;
    let summary = train_detector(&manifest, &config.detector_config(), out)?;
    emit_detector_curves(&summary.log, out)?;
    write_text_file(&out.join("experiment.cfg"), &config.to_flat()?)?;
    println!(
        "trained {} iterations; loss {:.4} -> {:.4}; best val mAP {} at iteration {}",
        summary.log.len(),
        summary.initial_loss(),
        summary.final_loss(),
        summary.best_map.map_or("-".into(), |m| format!("{m:.4}")),
        summary.best_iteration
    );
    Ok(())
}

fn run_train_segment(config: &ExperimentConfig) -> Result<()> {
    let manifest = open_manifest(config.data_root()?)?;
    let out = config.out_dir()?;
    let summary = train_segmenter(&manifest, &config.segmenter_config(), out)?;
    emit_segmenter_curves(&summary.log, out)?;
    write_text_file(&out.join("experiment.cfg"), &config.to_flat()?)?;
    println!(
        "trained {} epochs{}; best val loss {:.4} at epoch {}",
        summary.log.len(),
        if summary.stopped_early {
            " (early stop)"
        } else {
            ""
        },
        summary.best_loss,
        summary.best_epoch
    );
    Ok(())
}

fn write_text_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn eval_records(manifest: &DatasetManifest, split: Split, all: bool) -> Vec<&ImageRecord> {
    let mut records: Vec<&ImageRecord> = if all {
        manifest.records.iter().collect()
    } else {
        manifest.split(split).collect()
    };
    records.sort_by(|a, b| a.id.cmp(&b.id));
    records
}

fn split_choice(arg: Option<SplitArg>, config: &ExperimentConfig) -> (Split, bool) {
    match arg {
        Some(SplitArg::Train) => (Split::Train, false),
        Some(SplitArg::Val) => (Split::Val, false),
        Some(SplitArg::All) => (Split::Unassigned, true),
        None => (config.eval.split, false),
    }
}

fn columns(choice: Option<EvalPreprocess>, default: PreprocessMode) -> Vec<PreprocessMode> {
    match choice {
        Some(EvalPreprocess::None) => vec![PreprocessMode::None],
        Some(EvalPreprocess::Clahe) => vec![PreprocessMode::Clahe],
        Some(EvalPreprocess::Both) => vec![PreprocessMode::None, PreprocessMode::Clahe],
        None => vec![default],
    }
}

fn checkpoint_for(a: &EvalArgs, mode: PreprocessMode) -> Result<&Path> {
    let base = a
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    Ok(match (mode, &a.processed_checkpoint) {
        (PreprocessMode::Clahe, Some(p)) => p,
        _ => base,
    })
}

fn run_eval_detect(a: EvalArgs, config: &ExperimentConfig) -> Result<()> {
    let manifest = open_manifest(config.data_root()?)?;
    let (split, all) = split_choice(a.split, config);
    let records = eval_records(&manifest, split, all);
    if records.is_empty() {
        return Err(Error::invalid("no images to evaluate in the chosen split"));
    }
    let iou = a.iou_threshold.unwrap_or(config.eval.iou_threshold);
    let method: ApMethod = match &a.ap_method {
        Some(m) => m.parse()?,
        None => config.eval.ap_method,
    };
    let images = map_indexed(records.len(), |i| manifest.load_image(records[i]));
    let images: Vec<Raster> = images.into_iter().collect::<Result<_>>()?;
    let gts: Vec<Vec<GroundTruth>> = records
        .iter()
        .map(|r| GroundTruth::from_annotations(&r.boxes, r.width, r.height))
        .collect();
    let mut set = DetectionReportSet {
        columns: Vec::new(),
    };
    for mode in columns(a.preprocess, config.preprocess) {
        let mut det = Detector::load(checkpoint_for(&a, mode)?)?;
        det.config.clahe = config.clahe_for(mode);
        let conf = det.config.eval_conf_threshold;
        let nms = det.config.nms_threshold;
        let report_conf = a
            .report_conf
            .or(config.eval.report_conf)
            .unwrap_or(det.config.conf_threshold);
        let dets = map_indexed(images.len(), |i| det.detect(&images[i], conf, nms));
        let dets: Vec<_> = dets.into_iter().collect::<Result<_>>()?;
        let report = detection_report(&dets, &gts, iou, report_conf, method)?;
        info!("{}: mAP {:.4}", mode.column(), report.map);
        set.columns.push((mode.column().to_string(), report));
    }
    print!("{}", set.to_markdown());
    if let Some(out) = &config.out_dir {
        emit_detection_report(&set, out)?;
    }
    Ok(())
}

fn mask_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no mask images in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn run_eval_segment(a: EvalArgs, config: &ExperimentConfig) -> Result<()> {
    let set = match (&a.pred, &a.gt) {
        (Some(pred), Some(gt)) => {
            let gt_files = mask_files(gt)?;
            let parts = map_indexed(gt_files.len(), |i| -> Result<ConfusionMatrix> {
                let name = gt_files[i].file_name().unwrap_or_default();
                let p = pred.join(name);
                if !p.is_file() {
                    return Err(Error::MissingFile(p));
                }
                let mut cm = ConfusionMatrix::new(NUM_MASK_CLASSES);
                cm.accumulate(&Raster::load(&p)?, &Raster::load(&gt_files[i])?)?;
                Ok(cm)
            });
            let mut total = ConfusionMatrix::new(NUM_MASK_CLASSES);
            for p in parts {
                total.merge(&p?);
            }
            SegmentationReportSet {
                columns: vec![("Prediction".into(), seg_report(&total)?)],
            }
        }
        (None, None) => {
            let manifest = open_manifest(config.data_root()?)?;
            let (split, all) = split_choice(a.split, config);
            let records = eval_records(&manifest, split, all);
            let records: Vec<&ImageRecord> = records
                .into_iter()
                .filter(|r| r.mask_path.is_some())
                .collect();
            if records.is_empty() {
                return Err(Error::invalid(
                    "no masked images to evaluate in the chosen split",
                ));
            }
            let mut set = SegmentationReportSet {
                columns: Vec::new(),
            };
            for mode in columns(a.preprocess, config.preprocess) {
                let mut seg = Segmenter::load(checkpoint_for(&a, mode)?)?;
                seg.config.clahe = config.clahe_for(mode);
                set.columns.push((
                    mode.column().to_string(),
                    seg.evaluate(&manifest, &records)?,
                ));
            }
            set
        }
        _ => return Err(Error::Config("--pred and --gt go together".into())),
    };
    print!("{}", set.to_markdown());
    for (name, r) in &set.columns {
        println!("{name}: mIoU {:.4}, mean Dice {:.4}", r.miou, r.mean_dice);
    }
    if let Some(out) = &config.out_dir {
        emit_segmentation_report(&set, out)?;
    }
    Ok(())
}

fn checkpoint_task(dir: &Path) -> Result<Task> {
    let v: serde_json::Value = read_json(&dir.join(CONFIG_FILE))?;
    if serde_json::from_value::<DetectorConfig>(v.clone()).is_ok() {
        Ok(Task::Detect)
    } else if serde_json::from_value::<SegmenterConfig>(v).is_ok() {
        Ok(Task::Segment)
    } else {
        Err(Error::Checkpoint(format!(
            "{} holds neither a detector nor a segmenter",
            dir.display()
        )))
    }
}

fn run_infer(a: InferArgs) -> Result<()> {
    let task = match a.task {
        Some(t) => t,
        None => checkpoint_task(&a.checkpoint)?,
    };
    let files = image_files(&a.input)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let style = OverlayStyle::default();
    match task {
        Task::Detect => {
            let det = Detector::load(&a.checkpoint)?;
            let conf = a.conf.unwrap_or(det.config.conf_threshold);
            let nms = a.nms.unwrap_or(det.config.nms_threshold);
            for f in &files {
                let img = Raster::load(f)?;
                let dets = det.detect(&img, conf, nms)?;
                write_json(&a.out.join(format!("{}_detections.json", stem(f))), &dets)?;
                if !a.no_overlay {
                    render_detection_overlay(&img, &dets, &style)
                        .save_png(&a.out.join(format!("{}_overlay.png", stem(f))))?;
                }
                println!("{}: {} detection(s)", f.display(), dets.len());
            }
        }
        Task::Segment => {
            let seg = Segmenter::load(&a.checkpoint)?;
            for f in &files {
                let img = Raster::load(f)?;
                let pred = seg.predict(&img)?;
                pred.mask
                    .save_png(&a.out.join(format!("{}_mask.png", stem(f))))?;
                if !a.no_overlay {
                    render_mask_overlay(&img, &pred.mask, &style)?
                        .save_png(&a.out.join(format!("{}_overlay.png", stem(f))))?;
                }
                println!("{}: segmented", f.display());
            }
        }
    }
    Ok(())
}

fn run_report(a: ReportArgs) -> Result<()> {
    let v: serde_json::Value = read_json(&a.original)?;
    let is_detection = serde_json::from_value::<DetectionReportSet>(v).is_ok();
    let paths: Vec<&PathBuf> = std::iter::once(&a.original)
        .chain(a.processed.as_ref())
        .collect();
    let names = ["Original", "Processed"];
    if is_detection {
        let mut set = DetectionReportSet {
            columns: Vec::new(),
        };
        for (p, n) in paths.iter().zip(names) {
            let r = load_detection_report(p)?;
            let (_, rep) = r
                .columns
                .into_iter()
                .next()
                .ok_or_else(|| Error::invalid("empty report"))?;
            set.columns.push((n.to_string(), rep));
        }
        print!("{}", set.to_markdown());
        emit_detection_report(&set, &a.out)?;
    } else {
        let mut set = SegmentationReportSet {
            columns: Vec::new(),
        };
        for (p, n) in paths.iter().zip(names) {
            let r = load_segmentation_report(p)?;
            let (_, rep) = r
                .columns
                .into_iter()
                .next()
                .ok_or_else(|| Error::invalid("empty report"))?;
            set.columns.push((n.to_string(), rep));
        }
        print!("{}", set.to_markdown());
        emit_segmentation_report(&set, &a.out)?;
    }
    Ok(())
}
