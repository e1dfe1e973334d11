use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::Split;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::metrics::ApMethod;
use crate::preprocess::ClaheParams;
use crate::segmenter::SegmenterConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Detect,
    Segment,
}

/// Contrast preprocessing applied before the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PreprocessMode {
    #[default]
    None,
    Clahe,
}

impl PreprocessMode {
    /// Report column heading.
    pub fn column(self) -> &'static str {
        match self {
            PreprocessMode::None => "Original",
            PreprocessMode::Clahe => "Processed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub iou_threshold: f64,
    /// Confidence for P/R/F1; the detector's `conf_threshold` when absent.
    pub report_conf: Option<f64>,
    pub ap_method: ApMethod,
    pub split: Split,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            report_conf: None,
            ap_method: ApMethod::AllPoint,
            split: Split::Val,
        }
    }
}

/// Everything a run needs. `preprocess`/`clahe` and `seed` override the matching
/// fields of the task configs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_root: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub task: Task,
    pub preprocess: PreprocessMode,
    pub clahe: ClaheParams,
    pub detect: DetectorConfig,
    pub segment: SegmenterConfig,
    pub eval: EvalParams,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn clahe_for(&self, mode: PreprocessMode) -> Option<ClaheParams> {
        (mode == PreprocessMode::Clahe).then_some(self.clahe)
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            clahe: self.clahe_for(self.preprocess),
            seed: self.seed,
            ..self.detect.clone()
        }
    }

    pub fn segmenter_config(&self) -> SegmenterConfig {
        SegmenterConfig {
            clahe: self.clahe_for(self.preprocess),
            seed: self.seed,
            ..self.segment.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.clahe.validate()?;
        self.detector_config().validate()?;
        self.segmenter_config().validate()?;
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold <= 1.0) {
            return Err(Error::Config(
                "eval.iou_threshold must lie in (0, 1]".into(),
            ));
        }
        if let Some(c) = self.eval.report_conf {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config("eval.report_conf must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn data_root(&self) -> Result<&Path> {
        self.data_root
            .as_deref()
            .ok_or_else(|| Error::Config("no data root; pass --root or set data_root".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory; pass --out or set out_dir".into()))
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted key. Keys are checked against `defaults`; below an absent
/// optional section serde does the checking.
fn set_path(root: &mut Value, defaults: &Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut node = root;
    let mut reference = Some(defaults);
    for (i, part) in parts.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        let Some(obj) = node.as_object_mut() else {
            return Err(Error::Config(format!(
                "unknown key `{key}`: `{}` is not a section",
                parts[..i].join(".")
            )));
        };
        reference = match reference {
            Some(Value::Object(o)) => match o.get(*part) {
                Some(child) => Some(child),
                None => return Err(Error::Config(format!("unknown key `{key}`"))),
            },
            _ => None,
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

/// Flat `key = value` pairs from config text; `#` starts a comment.
pub fn parse_flat(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

// `#` inside a quoted string is kept
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

impl ExperimentConfig {
    /// Defaults with `pairs` applied in order; later keys win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let defaults = serde_json::to_value(Self::default())?;
        let mut tree = defaults.clone();
        for (k, v) in pairs {
            set_path(&mut tree, &defaults, k, parse_value(v))?;
        }
        serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        Self::from_pairs(&parse_flat(text, origin)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    /// The config as flat `key = value` lines, re-readable by [`from_text`](Self::from_text).
    pub fn to_flat(&self) -> Result<String> {
        let mut out = String::new();
        flatten(&serde_json::to_value(self)?, "", &mut out);
        Ok(out)
    }
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(o) if !o.is_empty() => {
            for (k, child) in o {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(child, &key, out);
            }
        }
        _ => {
            let _ = writeln!(out, "{prefix} = {v}");
        }
    }
}
