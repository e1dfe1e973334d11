use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::classes::{ClassTable, DistressClass, NUM_MASK_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::{image_dimensions, Raster};

/// Slack allowed on box extents before clamping kicks in.
pub const BOX_EPS: f64 = 1e-6;

pub const IMAGES_DIR: &str = "images";
pub const LABELS_DIR: &str = "labels";
pub const MASKS_DIR: &str = "masks";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// A labelled box with center and size normalized to the image dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxAnnotation {
    pub class: DistressClass,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxAnnotation {
    /// Validates size and shifts the center so the box lies inside `[0,1]²`.
    pub fn new_clamped(class: DistressClass, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && w <= 1.0 + BOX_EPS && h > 0.0 && h <= 1.0 + BOX_EPS) {
            return Err(Error::invalid(format!(
                "box size ({w}, {h}) outside (0, 1]"
            )));
        }
        if ![cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite box center"));
        }
        let w = w.min(1.0);
        let h = h.min(1.0);
        Ok(Self {
            class,
            cx: clamp_center(cx, w),
            cy: clamp_center(cy, h),
            w,
            h,
        })
    }

    pub fn from_pixels(
        class: DistressClass,
        b: &BBox,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let (cx, cy) = b.center();
        Self::new_clamped(
            class,
            cx / width as f64,
            cy / height as f64,
            b.width() / width as f64,
            b.height() / height as f64,
        )
    }

    pub fn to_pixels(&self, width: usize, height: usize) -> BBox {
        let (w, h) = (width as f64, height as f64);
        BBox::from_center(self.cx * w, self.cy * h, self.w * w, self.h * h)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.class.id(),
            self.cx,
            self.cy,
            self.w,
            self.h
        )
    }
}

fn clamp_center(c: f64, extent: f64) -> f64 {
    let half = extent / 2.0;
    if c - half < -BOX_EPS {
        half
    } else if c + half > 1.0 + BOX_EPS {
        1.0 - half
    } else {
        c
    }
}

/// Parses one `class_id cx cy w h` line.
pub fn parse_box_line(line: &str) -> Result<BoxAnnotation> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::invalid(format!(
            "expected 5 fields `class_id cx cy w h`, found {}",
            fields.len()
        )));
    }
    let id: u8 = fields[0]
        .parse()
        .map_err(|_| Error::invalid(format!("bad class id `{}`", fields[0])))?;
    let class = DistressClass::from_id(id)?;
    let mut v = [0.0; 4];
    for (slot, f) in v.iter_mut().zip(&fields[1..]) {
        *slot = f
            .parse()
            .map_err(|_| Error::invalid(format!("bad number `{f}`")))?;
    }
    BoxAnnotation::new_clamped(class, v[0], v[1], v[2], v[3])
}

pub fn read_box_file(path: &Path) -> Result<Vec<BoxAnnotation>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut boxes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let b = parse_box_line(trimmed).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: match e {
                Error::Invalid(m) => m,
                other => other.to_string(),
            },
        })?;
        boxes.push(b);
    }
    Ok(boxes)
}

pub fn write_box_file(path: &Path, boxes: &[BoxAnnotation]) -> Result<()> {
    let mut text = String::new();
    for b in boxes {
        text.push_str(&b.to_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    #[default]
    Unassigned,
}

/// One survey image and its annotations. Paths are relative to the manifest root.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BoxAnnotation>,
    pub mask_path: Option<PathBuf>,
    pub split: Split,
}

impl ImageRecord {
    /// The class of the most frequent annotation; ties go to the lowest id.
    pub fn modal_class(&self) -> Option<DistressClass> {
        let mut counts = [0usize; 5];
        for b in &self.boxes {
            counts[b.class.index()] += 1;
        }
        let best = counts.iter().copied().max().unwrap_or(0);
        if best == 0 {
            return None;
        }
        counts
            .iter()
            .position(|&c| c == best)
            .map(DistressClass::from_index)
    }
}

/// Serialized form of a record: one JSON object per manifest line.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    image: PathBuf,
    width: usize,
    height: usize,
    boxes: Vec<[f64; 5]>,
    mask: Option<PathBuf>,
    split: Split,
}

impl From<&ImageRecord> for RecordLine {
    fn from(r: &ImageRecord) -> Self {
        Self {
            id: r.id.clone(),
            image: r.image_path.clone(),
            width: r.width,
            height: r.height,
            boxes: r
                .boxes
                .iter()
                .map(|b| [b.class.id() as f64, b.cx, b.cy, b.w, b.h])
                .collect(),
            mask: r.mask_path.clone(),
            split: r.split,
        }
    }
}

impl TryFrom<RecordLine> for ImageRecord {
    type Error = Error;

    fn try_from(l: RecordLine) -> Result<Self> {
        let boxes = l
            .boxes
            .iter()
            .map(|b| {
                if b[0].fract() != 0.0 || !(0.0..=255.0).contains(&b[0]) {
                    return Err(Error::invalid(format!("bad class id {}", b[0])));
                }
                let class = DistressClass::from_id(b[0] as u8)?;
                BoxAnnotation::new_clamped(class, b[1], b[2], b[3], b[4])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: l.id,
            image_path: l.image,
            width: l.width,
            height: l.height,
            boxes,
            mask_path: l.mask,
            split: l.split,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ImageRecord>,
    pub classes: ClassTable,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ImageRecord>) -> Self {
        Self {
            root: root.into(),
            records,
            classes: ClassTable::default(),
            seed: 0,
        }
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Checks id uniqueness, file existence and mask consistency.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Record {
                    record: r.id.clone(),
                    message: "duplicate record id".into(),
                });
            }
            let img = self.resolve(&r.image_path);
            if !img.is_file() {
                return Err(Error::MissingFile(img));
            }
            if let Some(m) = &r.mask_path {
                let mask_path = self.resolve(m);
                if !mask_path.is_file() {
                    return Err(Error::MissingFile(mask_path));
                }
                let mask = Raster::load(&mask_path)?;
                check_mask(r, &mask)?;
            }
        }
        Ok(())
    }

    pub fn load_image(&self, record: &ImageRecord) -> Result<Raster> {
        Raster::load(&self.resolve(&record.image_path))
    }

    pub fn load_mask(&self, record: &ImageRecord) -> Result<Option<Raster>> {
        match &record.mask_path {
            None => Ok(None),
            Some(m) => {
                let mask = Raster::load(&self.resolve(m))?;
                check_mask(record, &mask)?;
                Ok(Some(mask))
            }
        }
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, &RecordLine::from(r))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest written by [`save_jsonl`](Self::save_jsonl); the root is the file's directory.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let rl: RecordLine =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            records.push(ImageRecord::try_from(rl).map_err(|e| parse_err(e.to_string()))?);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(root, records))
    }

    /// Writes per-image box files and `manifest.jsonl` under the manifest root.
    pub fn write_annotations(&self) -> Result<()> {
        let labels = self.root.join(LABELS_DIR);
        fs::create_dir_all(&labels).map_err(|e| Error::io(&labels, e))?;
        for r in &self.records {
            write_box_file(&labels.join(format!("{}.txt", r.id)), &r.boxes)?;
        }
        self.save_jsonl(&self.root.join(MANIFEST_FILE))
    }
}

fn check_mask(record: &ImageRecord, mask: &Raster) -> Result<()> {
    if mask.width != record.width || mask.height != record.height {
        return Err(Error::Record {
            record: record.id.clone(),
            message: format!(
                "mask is {}x{} but image is {}x{}",
                mask.width, mask.height, record.width, record.height
            ),
        });
    }
    if mask.channels != 1 {
        return Err(Error::Record {
            record: record.id.clone(),
            message: "mask must be a single-channel indexed image".into(),
        });
    }
    if let Some(v) = mask.data.iter().find(|&&v| v as usize >= NUM_MASK_CLASSES) {
        return Err(Error::Record {
            record: record.id.clone(),
            message: format!("mask value {v} outside 0..5"),
        });
    }
    Ok(())
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg" | "bmp")
    )
}

/// Builds a manifest from `root/images`, `root/labels/<id>.txt` and optional
/// `root/masks/<id>.png`. A `manifest.jsonl` in the root, if present, supplies
/// split assignments for matching ids.
pub fn ingest_manifest(root: &Path) -> Result<DatasetManifest> {
    let images_dir = root.join(IMAGES_DIR);
    let entries = fs::read_dir(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut image_files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    image_files.sort();

    let prior_splits = match root.join(MANIFEST_FILE) {
        p if p.is_file() => Some(DatasetManifest::load_jsonl(&p)?),
        _ => None,
    };

    let mut records = Vec::with_capacity(image_files.len());
    for img in image_files {
        let id = img
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("non-UTF-8 file name {}", img.display())))?
            .to_string();
        let (width, height) = image_dimensions(&img)?;
        let label_path = root.join(LABELS_DIR).join(format!("{id}.txt"));
        let boxes = if label_path.is_file() {
            read_box_file(&label_path)?
        } else {
            Vec::new()
        };
        let mask_rel = Path::new(MASKS_DIR).join(format!("{id}.png"));
        let mask_path = root.join(&mask_rel).is_file().then_some(mask_rel);
        let split = prior_splits
            .as_ref()
            .and_then(|m| m.records.iter().find(|r| r.id == id))
            .map(|r| r.split)
            .unwrap_or_default();
        let rel_image = img.strip_prefix(root).unwrap_or(&img).to_path_buf();
        records.push(ImageRecord {
            id,
            image_path: rel_image,
            width,
            height,
            boxes,
            mask_path,
            split,
        });
    }
    let manifest = DatasetManifest::new(root, records);
    manifest.validate()?;
    Ok(manifest)
}
