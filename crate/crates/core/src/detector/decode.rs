use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use crate::dataset::{DistressClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nn::{sigmoid, Tensor};

/// Values predicted per anchor: box offsets, objectness, class logits.
pub const OUTPUTS_PER_ANCHOR: usize = 5 + NUM_CLASSES;

/// Raw head output of one image at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleOutput {
    pub stride: usize,
    pub grid: usize,
    pub num_anchors: usize,
    /// Channel-major: `((a * OUTPUTS_PER_ANCHOR + k) * grid + gy) * grid + gx`.
    pub data: Vec<f64>,
}

impl ScaleOutput {
    pub fn zeros(stride: usize, grid: usize, num_anchors: usize) -> Self {
        Self {
            stride,
            grid,
            num_anchors,
            data: vec![0.0; num_anchors * OUTPUTS_PER_ANCHOR * grid * grid],
        }
    }

    pub fn index(&self, a: usize, k: usize, gy: usize, gx: usize) -> usize {
        ((a * OUTPUTS_PER_ANCHOR + k) * self.grid + gy) * self.grid + gx
    }

    pub fn get(&self, a: usize, k: usize, gy: usize, gx: usize) -> f64 {
        self.data[self.index(a, k, gy, gx)]
    }
}

/// Unbounded head outputs `(tx, ty, tw, th, t_obj, t_class..)` for every scale of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPrediction {
    pub scales: Vec<ScaleOutput>,
}

impl RawPrediction {
    pub fn zeros_like(&self) -> Self {
        Self {
            scales: self
                .scales
                .iter()
                .map(|s| ScaleOutput::zeros(s.stride, s.grid, s.num_anchors))
                .collect(),
        }
    }

    /// Splits batched head tensors (one per scale) into per-image predictions.
    pub fn from_tensors(heads: &[Tensor], strides: &[usize]) -> Result<Vec<Self>> {
        if heads.len() != strides.len() || heads.is_empty() {
            return Err(Error::invalid("one head tensor per stride expected"));
        }
        let n = heads[0].n;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut scales = Vec::with_capacity(heads.len());
            for (t, &stride) in heads.iter().zip(strides) {
                if t.h != t.w || t.c % OUTPUTS_PER_ANCHOR != 0 || t.n != n {
                    return Err(Error::invalid(format!(
                        "head tensor shape {:?} is inconsistent",
                        t.shape()
                    )));
                }
                scales.push(ScaleOutput {
                    stride,
                    grid: t.h,
                    num_anchors: t.c / OUTPUTS_PER_ANCHOR,
                    data: t.sample(i).iter().map(|&v| v as f64).collect(),
                });
            }
            out.push(Self { scales });
        }
        Ok(out)
    }

    /// Packs per-image gradients back into batched tensors.
    pub fn to_tensors(batch: &[Self]) -> Vec<Tensor> {
        let first = &batch[0];
        first
            .scales
            .iter()
            .enumerate()
            .map(|(si, s)| {
                let c = s.num_anchors * OUTPUTS_PER_ANCHOR;
                let mut data = Vec::with_capacity(batch.len() * c * s.grid * s.grid);
                for p in batch {
                    data.extend(p.scales[si].data.iter().map(|&v| v as f32));
                }
                Tensor::from_vec(batch.len(), c, s.grid, s.grid, data)
            })
            .collect()
    }
}

/// A scored, class-labelled box in absolute pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "DetectionRecord", try_from = "DetectionRecord")]
pub struct Detection {
    pub class: DistressClass,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    class: String,
    score: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        Self {
            class: d.class.name().to_string(),
            score: d.score,
            bbox: d.bbox.as_array(),
        }
    }
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = Error;
    fn try_from(r: DetectionRecord) -> Result<Self> {
        let [x1, y1, x2, y2] = r.bbox;
        Ok(Self {
            class: DistressClass::from_name(&r.class)?,
            score: r.score,
            bbox: BBox::new(x1, y1, x2, y2),
        })
    }
}

/// Decoded box of one slot as `(x1, y1, x2, y2)` in input pixels.
pub fn slot_box(s: &ScaleOutput, anchor: (f64, f64), a: usize, gy: usize, gx: usize) -> BBox {
    let st = s.stride as f64;
    let bx = (sigmoid(s.get(a, 0, gy, gx)) + gx as f64) * st;
    let by = (sigmoid(s.get(a, 1, gy, gx)) + gy as f64) * st;
    let bw = anchor.0 * s.get(a, 2, gy, gx).exp();
    let bh = anchor.1 * s.get(a, 3, gy, gx).exp();
    BBox::from_center(bx, by, bw, bh)
}

/// Emits every `(slot, class)` whose `sigmoid(obj) * sigmoid(cls)` reaches `conf_threshold`.
pub fn decode_predictions(
    raw: &RawPrediction,
    anchors: &AnchorSet,
    conf_threshold: f64,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for (si, s) in raw.scales.iter().enumerate() {
        for a in 0..s.num_anchors {
            let anchor = anchors.anchors[si][a];
            for gy in 0..s.grid {
                for gx in 0..s.grid {
                    let obj = sigmoid(s.get(a, 4, gy, gx));
                    if obj < conf_threshold {
                        continue;
                    }
                    let mut bbox = None;
                    for (c, class) in DistressClass::ALL.iter().enumerate() {
                        let score = obj * sigmoid(s.get(a, 5 + c, gy, gx));
                        if score < conf_threshold || score <= 0.0 {
                            continue;
                        }
                        let b = *bbox.get_or_insert_with(|| slot_box(s, anchor, a, gy, gx));
                        if b.is_valid() {
                            out.push(Detection {
                                class: *class,
                                score,
                                bbox: b,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_cell(stride: usize) -> RawPrediction {
        RawPrediction {
            scales: vec![ScaleOutput::zeros(stride, 1, 1)],
        }
    }

    #[test]
    fn zero_logits_decode_to_anchor_at_cell_center() {
        let raw = one_cell(32);
        let anchors = AnchorSet::from_sorted(&[(32.0, 64.0)], &[32]).unwrap();
        let dets = decode_predictions(&raw, &anchors, 0.25);
        assert_eq!(dets.len(), NUM_CLASSES);
        for d in dets {
            assert_eq!(d.score, 0.25);
            assert_eq!(d.bbox, BBox::new(0.0, -16.0, 32.0, 48.0));
            assert_eq!(d.bbox.center(), (16.0, 16.0));
        }
        assert!(decode_predictions(&raw, &anchors, 0.26).is_empty());
    }

    #[test]
    fn suppressed_objectness_emits_nothing() {
        let mut raw = one_cell(32);
        raw.scales[0].data[4] = -1e4;
        let anchors = AnchorSet::from_sorted(&[(32.0, 64.0)], &[32]).unwrap();
        assert!(decode_predictions(&raw, &anchors, 1e-9).is_empty());
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let anchors = AnchorSet::from_sorted(
            &[(5.0, 7.0), (9.0, 6.0), (20.0, 30.0), (40.0, 35.0)],
            &[8, 16],
        )
        .unwrap();
        let mut raw = RawPrediction {
            scales: vec![ScaleOutput::zeros(8, 4, 2), ScaleOutput::zeros(16, 2, 2)],
        };
        for s in &mut raw.scales {
            s.data
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-3.0..3.0));
        }
        let got = decode_predictions(&raw, &anchors, 0.2);

        // naive oracle straight from the formulas, flat channel walk
        let mut want = Vec::new();
        for (si, s) in raw.scales.iter().enumerate() {
            let g = s.grid;
            let plane = g * g;
            for a in 0..2 {
                for cell in 0..plane {
                    let (gy, gx) = (cell / g, cell % g);
                    let v = |k: usize| s.data[(a * 10 + k) * plane + cell];
                    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
                    let (aw, ah) = anchors.anchors[si][a];
                    let cx = (sig(v(0)) + gx as f64) * s.stride as f64;
                    let cy = (sig(v(1)) + gy as f64) * s.stride as f64;
                    let w = aw * v(2).exp();
                    let h = ah * v(3).exp();
                    for c in 0..NUM_CLASSES {
                        let score = sig(v(4)) * sig(v(5 + c));
                        if score >= 0.2 {
                            want.push((
                                c,
                                score,
                                [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0],
                            ));
                        }
                    }
                }
            }
        }
        assert_eq!(got.len(), want.len());
        for (d, (c, score, b)) in got.iter().zip(&want) {
            assert_eq!(d.class.index(), *c);
            assert!((d.score - score).abs() < 1e-12);
            for (x, y) in d.bbox.as_array().iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection {
            class: DistressClass::Crack,
            score: 0.5,
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"class":"Crack","score":0.5,"box":[1.0,2.0,3.0,4.0]}"#
        );
        assert_eq!(serde_json::from_str::<Detection>(&s).unwrap(), d);
    }

    #[test]
    fn tensor_round_trip() {
        let raw = RawPrediction {
            scales: vec![ScaleOutput {
                stride: 8,
                grid: 2,
                num_anchors: 1,
                data: (0..40).map(|v| v as f64).collect(),
            }],
        };
        let t = RawPrediction::to_tensors(&[raw.clone(), raw.clone()]);
        let back = RawPrediction::from_tensors(&t, &[8]).unwrap();
        assert_eq!(back, vec![raw.clone(), raw]);
    }
}
