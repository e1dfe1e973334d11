use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::iou::shape_iou;
use crate::error::{Error, Result};

/// Anchor shapes `(w, h)` in input pixels, grouped per detection scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub anchors: Vec<Vec<(f64, f64)>>,
    pub strides: Vec<usize>,
}

impl AnchorSet {
    /// Splits area-sorted anchors evenly over the strides, smallest anchors on the finest scale.
    pub fn from_sorted(anchors: &[(f64, f64)], strides: &[usize]) -> Result<Self> {
        if strides.is_empty() || !anchors.len().is_multiple_of(strides.len()) {
            return Err(Error::Config(format!(
                "{} anchors cannot be split evenly over {} scales",
                anchors.len(),
                strides.len()
            )));
        }
        let per = anchors.len() / strides.len();
        let set = Self {
            anchors: anchors.chunks(per).map(|c| c.to_vec()).collect(),
            strides: strides.to_vec(),
        };
        set.validate()?;
        Ok(set)
    }

    /// The YOLOv4 COCO anchors at a 416 input, rescaled to `input_size`.
    pub fn yolo_default(input_size: usize) -> Self {
        const BASE: [(f64, f64); 9] = [
            (12.0, 16.0),
            (19.0, 36.0),
            (40.0, 28.0),
            (36.0, 75.0),
            (76.0, 55.0),
            (72.0, 146.0),
            (142.0, 110.0),
            (192.0, 243.0),
            (459.0, 401.0),
        ];
        let s = input_size as f64 / 416.0;
        let scaled: Vec<_> = BASE.iter().map(|&(w, h)| (w * s, h * s)).collect();
        Self::from_sorted(&scaled, &[8, 16, 32]).expect("static anchors are well formed")
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() != self.strides.len() {
            return Err(Error::Config(
                "anchor groups and strides differ in count".into(),
            ));
        }
        if self.anchors.iter().any(|g| g.is_empty()) {
            return Err(Error::Config(
                "every scale needs at least one anchor".into(),
            ));
        }
        if self.strides.contains(&0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        let flat = self.flat();
        if flat
            .iter()
            .any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()))
        {
            return Err(Error::Config("anchor sizes must be positive".into()));
        }
        if flat.windows(2).any(|p| p[0].0 * p[0].1 > p[1].0 * p[1].1) {
            return Err(Error::Config("anchors must be sorted by area".into()));
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<(f64, f64)> {
        self.anchors.iter().flatten().copied().collect()
    }

    pub fn num_scales(&self) -> usize {
        self.strides.len()
    }

    pub fn per_scale(&self, scale: usize) -> usize {
        self.anchors[scale].len()
    }
}

/// Mean `1 - shape IoU` from each box to its nearest centroid.
pub fn mean_anchor_distance(boxes: &[(f64, f64)], anchors: &[(f64, f64)]) -> f64 {
    let total: f64 = boxes
        .iter()
        .map(|&b| {
            anchors
                .iter()
                .map(|&a| 1.0 - shape_iou(b, a))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / boxes.len() as f64
}

fn nearest(b: (f64, f64), centroids: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = 1.0 - shape_iou(b, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means over box shapes with distance `1 - IoU` of origin-centered boxes.
///
/// Seeds with k-means++ under the same distance. Result is sorted by area ascending.
pub fn kmeans_anchors(
    boxes: &[(f64, f64)],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if boxes.is_empty() {
        return Err(Error::invalid("anchor clustering needs at least one box"));
    }
    if boxes.iter().any(|&(w, h)| !(w > 0.0 && h > 0.0)) {
        return Err(Error::invalid("box shapes must be positive"));
    }
    let mut distinct: Vec<(f64, f64)> = boxes.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return Err(Error::invalid(format!(
            "cannot fit {k} anchors to {} distinct box shapes",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![distinct[rng.random_range(0..distinct.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = distinct
            .iter()
            .map(|&b| {
                let m = centroids
                    .iter()
                    .map(|&c| 1.0 - shape_iou(b, c))
                    .fold(f64::INFINITY, f64::min);
                m * m
            })
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total <= 0.0 {
            distinct
                .iter()
                .position(|b| !centroids.contains(b))
                .unwrap()
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut pick = d.len() - 1;
            for (i, &di) in d.iter().enumerate() {
                if r < di {
                    pick = i;
                    break;
                }
                r -= di;
            }
            pick
        };
        centroids.push(distinct[next]);
    }

    let mut assign = vec![usize::MAX; boxes.len()];
    for _ in 0..iterations.max(1) {
        let mut changed = false;
        for (i, &b) in boxes.iter().enumerate() {
            let c = nearest(b, &centroids);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &b) in boxes.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += b.0;
            s.1 += b.1;
            s.2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(sums) {
            // empty clusters keep their previous centroid
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
    }
    centroids.sort_by(|a, b| {
        (a.0 * a.1)
            .partial_cmp(&(b.0 * b.1))
            .unwrap()
            .then(a.partial_cmp(b).unwrap())
    });
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shape() {
        let boxes = vec![(10.0, 10.0); 20];
        assert_eq!(
            kmeans_anchors(&boxes, 1, 10, 0).unwrap(),
            vec![(10.0, 10.0)]
        );
    }

    #[test]
    fn separated_clusters() {
        let mut boxes = vec![(10.0, 10.0); 50];
        boxes.extend(vec![(40.0, 20.0); 50]);
        for seed in 0..5 {
            assert_eq!(
                kmeans_anchors(&boxes, 2, 20, seed).unwrap(),
                vec![(10.0, 10.0), (40.0, 20.0)]
            );
        }
    }

    #[test]
    fn errors() {
        assert!(kmeans_anchors(&[], 1, 10, 0).is_err());
        assert!(kmeans_anchors(&[(1.0, 1.0), (1.0, 1.0)], 2, 10, 0).is_err());
    }

    #[test]
    fn beats_worst_random_restart() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let boxes: Vec<(f64, f64)> = (0..20)
            .map(|_| (rng.random_range(4.0..120.0), rng.random_range(4.0..120.0)))
            .collect();
        let ours = mean_anchor_distance(&boxes, &kmeans_anchors(&boxes, 3, 100, 1).unwrap());
        // oracle: plain Lloyd from 100 random 3-subsets
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let mut c: Vec<(f64, f64)> = (0..3)
                .map(|_| boxes[rng.random_range(0..boxes.len())])
                .collect();
            for _ in 0..50 {
                let mut acc = [(0.0, 0.0, 0.0); 3];
                for &b in &boxes {
                    let j = (0..3)
                        .min_by(|&x, &y| {
                            shape_iou(b, c[y]).partial_cmp(&shape_iou(b, c[x])).unwrap()
                        })
                        .unwrap();
                    acc[j].0 += b.0;
                    acc[j].1 += b.1;
                    acc[j].2 += 1.0;
                }
                for j in 0..3 {
                    if acc[j].2 > 0.0 {
                        c[j] = (acc[j].0 / acc[j].2, acc[j].1 / acc[j].2);
                    }
                }
            }
            worst = worst.max(mean_anchor_distance(&boxes, &c));
        }
        assert!(ours <= worst + 1e-12, "{ours} > {worst}");
    }

    #[test]
    fn default_set_is_valid() {
        let a = AnchorSet::yolo_default(416);
        assert_eq!(a.anchors.len(), 3);
        assert_eq!(a.anchors[0][0], (12.0, 16.0));
        a.validate().unwrap();
    }

    #[test]
    fn unsorted_rejected() {
        let a = AnchorSet {
            anchors: vec![vec![(10.0, 10.0), (2.0, 2.0)]],
            strides: vec![8],
        };
        assert!(a.validate().is_err());
    }
}
