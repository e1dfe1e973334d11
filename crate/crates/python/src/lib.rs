//! Python bindings: geometry, datasets, CLAHE, training, inference and metrics.
//! Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use pavescan::cli::{self, ExperimentConfig};
use pavescan::dataset::{
    class_stats, generate_synthetic, stratified_split, DistressClass, SynthConfig,
};
use pavescan::detector::{box_iou, diou_nms, Detection, IouVariant};
use pavescan::geometry::BBox;
use pavescan::metrics::{detection_report, seg_confusion, seg_report, ApMethod, GroundTruth};
use pavescan::preprocess::{clahe, ClaheParams};
use pavescan::raster::Raster;
use pavescan::Error;

fn err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn bbox(b: [f64; 4]) -> PyResult<BBox> {
    let b = BBox::new(b[0], b[1], b[2], b[3]);
    if !b.is_valid() {
        return Err(PyValueError::new_err(format!("invalid box {b:?}")));
    }
    Ok(b)
}

fn class(name: &str) -> PyResult<DistressClass> {
    DistressClass::from_name(name).map_err(err)
}

/// IoU, DIoU or CIoU of two `[x1, y1, x2, y2]` boxes.
#[pyfunction]
#[pyo3(signature = (a, b, variant = "iou"))]
fn iou(a: [f64; 4], b: [f64; 4], variant: &str) -> PyResult<f64> {
    let v = match variant {
        "iou" => IouVariant::Iou,
        "diou" => IouVariant::Diou,
        "ciou" => IouVariant::Ciou,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown IoU variant `{variant}`"
            )))
        }
    };
    box_iou(&bbox(a)?, &bbox(b)?, v).map_err(err)
}

fn detections(items: Vec<(String, f64, [f64; 4])>) -> PyResult<Vec<Detection>> {
    items
        .into_iter()
        .map(|(c, score, b)| {
            Ok(Detection {
                class: class(&c)?,
                score,
                bbox: bbox(b)?,
            })
        })
        .collect()
}

/// DIoU-NMS over `(class, score, box)` tuples; returns the kept detections as dicts.
#[pyfunction]
#[pyo3(signature = (dets, threshold = 0.45))]
fn nms<'py>(
    py: Python<'py>,
    dets: Vec<(String, f64, [f64; 4])>,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &diou_nms(&detections(dets)?, threshold))
}

/// Writes a synthetic dataset; optionally splits it. Returns the image count.
#[pyfunction]
#[pyo3(signature = (out, count = 250, width = 192, height = 128, seed = 0, val_fraction = None))]
fn synthesize_dataset(
    out: PathBuf,
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
    val_fraction: Option<f64>,
) -> PyResult<usize> {
    let cfg = SynthConfig {
        n_images: count,
        width,
        height,
        seed,
        ..Default::default()
    };
    let mut m = generate_synthetic(&cfg, &out).map_err(err)?;
    if let Some(f) = val_fraction {
        m = stratified_split(&m, f, seed).map_err(err)?;
        m.save_jsonl(&out.join(pavescan::dataset::MANIFEST_FILE))
            .map_err(err)?;
    }
    Ok(m.records.len())
}

/// Per-class image/annotation counts of the dataset under `root`.
#[pyfunction]
fn dataset_stats<'py>(py: Python<'py>, root: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let m = cli::open_manifest(&root).map_err(err)?;
    to_py(py, &class_stats(&m))
}

/// CLAHE-processes `input` into `output` (PNG).
#[pyfunction]
#[pyo3(signature = (input, output, clip_limit = 2.0, tiles = (8, 8)))]
fn clahe_file(
    input: PathBuf,
    output: PathBuf,
    clip_limit: f64,
    tiles: (usize, usize),
) -> PyResult<()> {
    let params = ClaheParams {
        clip_limit,
        tiles,
        ..Default::default()
    };
    params.validate().map_err(err)?;
    let img = Raster::load(&input).map_err(err)?;
    clahe(&img, &params)
        .and_then(|r| r.save_png(&output))
        .map_err(err)
}

/// Parses flat `key = value` config text and returns the full effective config.
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let c = ExperimentConfig::from_text(text, std::path::Path::new("<python>")).map_err(err)?;
    c.validate().map_err(err)?;
    to_py(py, &c)
}

/// Runs the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| cli::run_cli(std::iter::once("pavescan".to_string()).chain(args)))
}

/// Table-4-shaped detection metrics.
///
/// `dets[i]` are `(class, score, box)` and `gts[i]` are `(class, box)` for image `i`.
#[pyfunction]
#[pyo3(signature = (dets, gts, iou_threshold = 0.5, report_conf = 0.25, ap_method = "all_point"))]
fn evaluate_detections<'py>(
    py: Python<'py>,
    dets: Vec<Vec<(String, f64, [f64; 4])>>,
    gts: Vec<Vec<(String, [f64; 4])>>,
    iou_threshold: f64,
    report_conf: f64,
    ap_method: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let dets: Vec<Vec<Detection>> = dets.into_iter().map(detections).collect::<PyResult<_>>()?;
    let gts: Vec<Vec<GroundTruth>> = gts
        .into_iter()
        .map(|img| {
            img.into_iter()
                .map(|(c, b)| {
                    Ok(GroundTruth {
                        class: class(&c)?,
                        bbox: bbox(b)?,
                    })
                })
                .collect::<PyResult<_>>()
        })
        .collect::<PyResult<_>>()?;
    let method: ApMethod = ap_method.parse().map_err(err)?;
    to_py(
        py,
        &detection_report(&dets, &gts, iou_threshold, report_conf, method).map_err(err)?,
    )
}

/// Segmentation metrics of two label masks given as row-major bytes.
#[pyfunction]
fn evaluate_masks<'py>(
    py: Python<'py>,
    pred: Vec<u8>,
    gt: Vec<u8>,
    width: usize,
    height: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = Raster::from_vec(width, height, 1, pred).map_err(err)?;
    let g = Raster::from_vec(width, height, 1, gt).map_err(err)?;
    let cm = seg_confusion(&p, &g, pavescan::dataset::NUM_MASK_CLASSES).map_err(err)?;
    to_py(py, &seg_report(&cm).map_err(err)?)
}

/// A trained detector checkpoint.
#[pyclass]
struct Detector {
    inner: pavescan::detector::Detector,
}

#[pymethods]
impl Detector {
    #[staticmethod]
    fn load(checkpoint: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pavescan::detector::Detector::load(&checkpoint).map_err(err)?,
        })
    }

    /// Detections on an image file, boxes in its pixels.
    #[pyo3(signature = (image, conf = None, nms = None))]
    fn detect<'py>(
        &self,
        py: Python<'py>,
        image: PathBuf,
        conf: Option<f64>,
        nms: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let img = Raster::load(&image).map_err(err)?;
        let c = conf.unwrap_or(self.inner.config.conf_threshold);
        let n = nms.unwrap_or(self.inner.config.nms_threshold);
        let dets = py.detach(|| self.inner.detect(&img, c, n)).map_err(err)?;
        to_py(py, &dets)
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.config.input_size
    }
}

/// A trained segmenter checkpoint.
#[pyclass]
struct Segmenter {
    inner: pavescan::segmenter::Segmenter,
}

#[pymethods]
impl Segmenter {
    #[staticmethod]
    fn load(checkpoint: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pavescan::segmenter::Segmenter::load(&checkpoint).map_err(err)?,
        })
    }

    /// Label mask of an image file as `(width, height, bytes)`; written as PNG when `out` is given.
    #[pyo3(signature = (image, out = None))]
    fn predict(
        &self,
        py: Python<'_>,
        image: PathBuf,
        out: Option<PathBuf>,
    ) -> PyResult<(usize, usize, Vec<u8>)> {
        let img = Raster::load(&image).map_err(err)?;
        let pred = py.detach(|| self.inner.predict(&img)).map_err(err)?;
        if let Some(p) = out {
            pred.mask.save_png(&p).map_err(err)?;
        }
        Ok((pred.mask.width, pred.mask.height, pred.mask.data))
    }
}

#[pymodule]
pub fn pavescan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(clahe_file, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_detections, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_masks, m)?)?;
    m.add_class::<Detector>()?;
    m.add_class::<Segmenter>()?;
    m.add("CLASSES", DistressClass::ALL.map(|c| c.name()).to_vec())?;
    Ok(())
}
