use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_json, write_json};
use crate::dataset::{ClassTable, DistressClass};
use crate::detector::DetectorLogRow;
use crate::error::{Error, Result};
use crate::metrics::{DetectionEvalReport, SegEvalReport};
use crate::segmenter::SegmenterLogRow;

type SummaryFn = fn(&DetectionEvalReport) -> f64;

pub const DETECTION_REPORT: &str = "detection_report";
pub const SEGMENTATION_REPORT: &str = "segmentation_report";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const MAP_CURVE_FILE: &str = "map_curve.csv";

/// One report per column (e.g. Original, Processed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReportSet {
    pub columns: Vec<(String, DetectionEvalReport)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReportSet {
    pub columns: Vec<(String, SegEvalReport)>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!(
        "| {} |\n|{}\n",
        header.join(" | "),
        "---|".repeat(header.len())
    );
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",") + "\n";
    for r in rows {
        s += &(r.join(",") + "\n");
    }
    s
}

impl DetectionReportSet {
    /// Rows of the main table: per-class AP, then mAP, F1-score, ave IoU.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["Distress".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        let mut rows: Vec<Vec<String>> = DistressClass::ALL
            .iter()
            .map(|c| {
                let mut r = vec![c.display_name().to_string()];
                r.extend(
                    self.columns
                        .iter()
                        .map(|(_, rep)| cell(rep.per_class[c.index()].ap)),
                );
                r
            })
            .collect();
        let summary: [(&str, SummaryFn); 3] = [
            ("mAP", |r| r.map),
            ("F1-score", |r| r.f1),
            ("ave IoU", |r| r.ave_iou),
        ];
        for (name, f) in summary {
            let mut r = vec![name.to_string()];
            r.extend(self.columns.iter().map(|(_, rep)| cell(Some(f(rep)))));
            rows.push(r);
        }
        (header, rows)
    }

    fn detail_rows(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = [
            "Column",
            "Distress",
            "GT",
            "TP",
            "FP",
            "FN",
            "Precision",
            "Recall",
            "F1",
        ]
        .map(String::from)
        .to_vec();
        let mut rows = Vec::new();
        for (name, rep) in &self.columns {
            for s in &rep.per_class {
                rows.push(vec![
                    name.clone(),
                    s.class.display_name().to_string(),
                    s.n_gt.to_string(),
                    s.tp.to_string(),
                    s.fp.to_string(),
                    s.fn_.to_string(),
                    cell(Some(s.precision)),
                    cell(Some(s.recall)),
                    cell(Some(s.f1)),
                ]);
            }
        }
        (header, rows)
    }

    pub fn to_markdown(&self) -> String {
        let (h, r) = self.table();
        let (dh, dr) = self.detail_rows();
        let mut s = markdown(&h, &r);
        if let Some((_, first)) = self.columns.first() {
            let _ = writeln!(
                s,
                "\nIoU threshold {}, report confidence {}, AP method {}.\n",
                first.iou_threshold, first.report_conf, first.ap_method
            );
        }
        s + &markdown(&dh, &dr)
    }
}

impl SegmentationReportSet {
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let names = ClassTable::default();
        let mut header = vec!["Class".to_string()];
        for (n, _) in &self.columns {
            header.push(format!("{n} IoU"));
            header.push(format!("{n} Dice"));
        }
        let mut rows = Vec::new();
        for label in 0..crate::dataset::NUM_MASK_CLASSES {
            let mut r = vec![names.mask_label_name(label as u8).to_string()];
            for (_, rep) in &self.columns {
                let s = &rep.per_class[label];
                let present = s.gt_pixels > 0;
                r.push(cell(present.then(|| s.iou.value())));
                r.push(cell(present.then(|| s.dice.value())));
            }
            rows.push(r);
        }
        let mut miou = vec!["mean".to_string()];
        let mut acc = vec!["pixel accuracy".to_string()];
        for (_, rep) in &self.columns {
            miou.push(cell(Some(rep.miou)));
            miou.push(cell(Some(rep.mean_dice)));
            acc.push(cell(Some(rep.pixel_accuracy)));
            acc.push(String::new());
        }
        rows.push(miou);
        rows.push(acc);
        (header, rows)
    }

    pub fn to_markdown(&self) -> String {
        let (h, r) = self.table();
        let mut s = markdown(&h, &r);
        for (name, rep) in &self.columns {
            let _ = writeln!(s, "\nConfusion matrix ({name}), rows = ground truth:\n");
            let mut header = vec!["GT \\ Pred".to_string()];
            header.extend((0..rep.confusion.n).map(|c| c.to_string()));
            let rows: Vec<Vec<String>> = rep
                .confusion
                .rows()
                .iter()
                .enumerate()
                .map(|(g, row)| {
                    std::iter::once(g.to_string())
                        .chain(row.iter().map(u64::to_string))
                        .collect()
                })
                .collect();
            s += &markdown(&header, &rows);
        }
        s
    }
}

/// Writes `detection_report.{csv,md,json}`; returns the paths.
pub fn emit_detection_report(set: &DetectionReportSet, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let (h, r) = set.table();
    let paths = ["csv", "md", "json"].map(|e| out.join(format!("{DETECTION_REPORT}.{e}")));
    write_text(&paths[0], &csv(&h, &r))?;
    write_text(&paths[1], &set.to_markdown())?;
    write_json(&paths[2], set)?;
    Ok(paths.to_vec())
}

pub fn emit_segmentation_report(set: &SegmentationReportSet, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let (h, r) = set.table();
    let paths = ["csv", "md", "json"].map(|e| out.join(format!("{SEGMENTATION_REPORT}.{e}")));
    write_text(&paths[0], &csv(&h, &r))?;
    write_text(&paths[1], &set.to_markdown())?;
    write_json(&paths[2], set)?;
    Ok(paths.to_vec())
}

pub fn load_detection_report(path: &Path) -> Result<DetectionReportSet> {
    read_json(path)
}

pub fn load_segmentation_report(path: &Path) -> Result<SegmentationReportSet> {
    read_json(path)
}

/// `loss_curve.csv` (one row per iteration) and `map_curve.csv` (evaluated iterations).
pub fn emit_detector_curves(log: &[DetectorLogRow], out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut loss = String::from("iteration,loss,box,obj,cls,lr\n");
    let mut map = String::from("iteration,val_mAP\n");
    for r in log {
        let _ = writeln!(
            loss,
            "{},{},{},{},{},{}",
            r.iteration, r.loss, r.box_term, r.obj_term, r.cls_term, r.lr
        );
        if let Some(m) = r.val_map {
            let _ = writeln!(map, "{},{}", r.iteration, m);
        }
    }
    let paths = vec![out.join(LOSS_CURVE_FILE), out.join(MAP_CURVE_FILE)];
    write_text(&paths[0], &loss)?;
    write_text(&paths[1], &map)?;
    Ok(paths)
}

pub fn emit_segmenter_curves(log: &[SegmenterLogRow], out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let mut loss = String::from("epoch,train_loss,val_loss,lr\n");
    for r in log {
        let vl = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(loss, "{},{},{},{}", r.epoch, r.train_loss, vl, r.lr);
    }
    let path = out.join(LOSS_CURVE_FILE);
    write_text(&path, &loss)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Detection;
    use crate::geometry::BBox;
    use crate::metrics::{detection_report, seg_confusion, seg_report, ApMethod, GroundTruth};
    use crate::raster::Raster;

    fn det_report(score: f64) -> DetectionEvalReport {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let dets = vec![vec![Detection {
            class: DistressClass::Crack,
            score,
            bbox: b,
        }]];
        let gts = vec![vec![
            GroundTruth {
                class: DistressClass::Crack,
                bbox: b,
            },
            GroundTruth {
                class: DistressClass::Scaling,
                bbox: BBox::new(20.0, 20.0, 30.0, 30.0),
            },
        ]];
        detection_report(&dets, &gts, 0.5, 0.25, ApMethod::AllPoint).unwrap()
    }

    #[test]
    fn detection_table_layout_and_round_trip() {
        let set = DetectionReportSet {
            columns: vec![
                ("Original".into(), det_report(0.9)),
                ("Processed".into(), det_report(0.1)),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_detection_report(&set, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Distress,Original,Processed");
        assert_eq!(lines.len(), 1 + 5 + 3);
        assert!(lines[1].starts_with("Alligator Crack,-,-"));
        assert_eq!(lines[4], "Crack,1.0000,1.0000");
        assert!(lines[6].starts_with("mAP,"));
        assert!(lines[7].starts_with("F1-score,0.6667,0.0000"));
        assert!(lines[8].starts_with("ave IoU,"));
        assert_eq!(load_detection_report(&paths[2]).unwrap(), set);
    }

    #[test]
    fn segmentation_round_trip() {
        let gt = Raster::from_vec(2, 2, 1, vec![0, 1, 0, 1]).unwrap();
        let pred = Raster::from_vec(2, 2, 1, vec![0, 1, 1, 1]).unwrap();
        let rep = seg_report(&seg_confusion(&pred, &gt, 6).unwrap()).unwrap();
        let set = SegmentationReportSet {
            columns: vec![("Processed".into(), rep)],
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_segmentation_report(&set, dir.path()).unwrap();
        assert_eq!(load_segmentation_report(&paths[2]).unwrap(), set);
        let csv = fs::read_to_string(&paths[0]).unwrap();
        assert!(csv.contains("Background,0.5000,0.6667"));
        assert!(csv.contains("mean,0.5833,"));
    }

    #[test]
    fn curve_rows_match_log() {
        let log: Vec<SegmenterLogRow> = (1..=7)
            .map(|e| SegmenterLogRow {
                epoch: e,
                train_loss: 1.0 / e as f64,
                val_loss: Some(0.5),
                lr: 5e-4,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = emit_segmenter_curves(&log, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap().lines().count(), 8);
    }
}
