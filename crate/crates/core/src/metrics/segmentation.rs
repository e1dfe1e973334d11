use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Square confusion matrix, rows = ground truth, columns = prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n + pred]
    }

    /// Adds one image's pixels.
    pub fn accumulate(&mut self, pred: &Raster, gt: &Raster) -> Result<()> {
        if (pred.width, pred.height) != (gt.width, gt.height)
            || pred.channels != 1
            || gt.channels != 1
        {
            return Err(Error::invalid(format!(
                "mask shapes differ: prediction {}x{}x{}, ground truth {}x{}x{}",
                pred.width, pred.height, pred.channels, gt.width, gt.height, gt.channels
            )));
        }
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            let (p, g) = (p as usize, g as usize);
            if p >= self.n || g >= self.n {
                return Err(Error::invalid(format!(
                    "mask label {} outside 0..{}",
                    p.max(g),
                    self.n
                )));
            }
            self.counts[g * self.n + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n, "confusion sizes");
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|g| self.get(g, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(|r| r.to_vec()).collect()
    }
}

pub fn seg_confusion(pred: &Raster, gt: &Raster, n_classes: usize) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(n_classes);
    m.accumulate(pred, gt)?;
    Ok(m)
}

/// An exact non-negative fraction; `0/0` reads as 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegClassStats {
    pub label: u8,
    pub gt_pixels: u64,
    pub pred_pixels: u64,
    pub iou: Ratio,
    pub dice: Ratio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegEvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<SegClassStats>,
    /// Mean over classes present in the ground truth.
    pub miou: f64,
    pub mean_dice: f64,
    pub pixel_accuracy: f64,
}

pub fn seg_report(confusion: &ConfusionMatrix) -> Result<SegEvalReport> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let mut per_class = Vec::with_capacity(confusion.n);
    let (mut iou_sum, mut dice_sum, mut present) = (0.0, 0.0, 0usize);
    for c in 0..confusion.n {
        let d = confusion.get(c, c);
        let row = confusion.row_sum(c);
        let col = confusion.col_sum(c);
        let iou = Ratio {
            num: d,
            den: row + col - d,
        };
        let dice = Ratio {
            num: 2 * d,
            den: row + col,
        };
        if row > 0 {
            iou_sum += iou.value();
            dice_sum += dice.value();
            present += 1;
        }
        per_class.push(SegClassStats {
            label: c as u8,
            gt_pixels: row,
            pred_pixels: col,
            iou,
            dice,
        });
    }
    Ok(SegEvalReport {
        confusion: confusion.clone(),
        per_class,
        miou: iou_sum / present as f64,
        mean_dice: dice_sum / present as f64,
        pixel_accuracy: confusion.trace() as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, v: &[u8]) -> Raster {
        Raster::from_vec(w, h, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn two_by_two_case() {
        let m = seg_confusion(&mask(2, 2, &[0, 1, 1, 1]), &mask(2, 2, &[0, 1, 0, 1]), 2).unwrap();
        assert_eq!(m.rows(), vec![vec![1, 1], vec![0, 2]]);
        let r = seg_report(&m).unwrap();
        assert_eq!(r.per_class[0].iou.value(), 0.5);
        assert!((r.per_class[1].iou.value() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.miou - 0.583_333_333_333_333_3).abs() < 1e-12);
        assert!((r.per_class[0].dice.value() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].dice.value(), 0.8);
    }

    #[test]
    fn identity_is_diagonal() {
        let g = mask(3, 2, &[0, 5, 5, 2, 2, 2]);
        let m = seg_confusion(&g, &g, 6).unwrap();
        assert_eq!(m.trace(), 6);
        assert_eq!((m.get(0, 0), m.get(5, 5), m.get(2, 2)), (1, 2, 3));
        let r = seg_report(&m).unwrap();
        assert_eq!((r.miou, r.mean_dice, r.pixel_accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn errors() {
        assert!(seg_confusion(&mask(2, 1, &[0, 1]), &mask(1, 2, &[0, 1]), 6).is_err());
        assert!(seg_confusion(&mask(1, 1, &[7]), &mask(1, 1, &[0]), 6).is_err());
        assert!(seg_report(&ConfusionMatrix::new(6)).is_err());
    }
}
