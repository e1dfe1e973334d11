use log::warn;

use crate::dataset::{DatasetManifest, Split, NUM_MASK_CLASSES};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Per-pixel class probabilities, `height x width x classes`, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl ProbMap {
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Per-pixel argmax; ties go to the lower class id.
    pub fn argmax(&self) -> Raster {
        let mut out = Raster::new(self.width, self.height, 1);
        for (i, v) in out.data.iter_mut().enumerate() {
            let p = self.pixel(i);
            let mut best = 0;
            for c in 1..self.classes {
                if p[c] > p[best] {
                    best = c;
                }
            }
            *v = best as u8;
        }
        out
    }
}

/// Normalized inverse pixel frequency from per-class pixel counts, raised to `power`
/// (1 is plain inverse frequency, 0 uniform). Weights of present classes average 1.
///
/// Classes with no pixels get the largest weight among present classes.
pub fn class_weights_from_counts(counts: &[u64], power: f64) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid(
            "no labelled pixels to derive class weights from",
        ));
    }
    let inv: Vec<Option<f64>> = counts
        .iter()
        .map(|&n| (n > 0).then(|| (total as f64 / n as f64).powf(power)))
        .collect();
    let present: Vec<f64> = inv.iter().flatten().copied().collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    let max = present.iter().copied().fold(0.0, f64::max) / mean;
    let missing: Vec<usize> = (0..counts.len()).filter(|&c| inv[c].is_none()).collect();
    if !missing.is_empty() {
        warn!("classes {missing:?} have no pixels; giving them the largest weight");
    }
    Ok(inv.iter().map(|w| w.map_or(max, |v| v / mean)).collect())
}

/// Pixel counts per mask label over the train split.
pub fn train_pixel_counts(manifest: &DatasetManifest) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; NUM_MASK_CLASSES];
    let mut any = false;
    for r in manifest.split(Split::Train) {
        let Some(mask) = manifest.load_mask(r)? else {
            continue;
        };
        any = true;
        for (c, n) in mask.histogram().iter().enumerate().take(NUM_MASK_CLASSES) {
            counts[c] += n;
        }
    }
    if !any {
        return Err(Error::invalid("the train split has no masks"));
    }
    Ok(counts)
}

pub fn class_weights_from_frequency(manifest: &DatasetManifest, power: f64) -> Result<Vec<f64>> {
    class_weights_from_counts(&train_pixel_counts(manifest)?, power)
}

fn check_label(label: u8, classes: usize) -> Result<usize> {
    let l = label as usize;
    if l >= classes {
        return Err(Error::invalid(format!(
            "label {label} outside 0..{}",
            classes - 1
        )));
    }
    Ok(l)
}

/// Weighted mean of `-ln p[label]` with weight `w[label]` per pixel.
pub fn weighted_cross_entropy(probs: &ProbMap, labels: &Raster, weights: &[f64]) -> Result<f64> {
    if (labels.width, labels.height) != (probs.width, probs.height) || labels.channels != 1 {
        return Err(Error::invalid(
            "label mask and probability map differ in shape",
        ));
    }
    if weights.len() != probs.classes {
        return Err(Error::invalid("one weight per class expected"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &y) in labels.data.iter().enumerate() {
        let y = check_label(y, probs.classes)?;
        let w = weights[y];
        num += w * -probs.pixel(i)[y].ln();
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Weighted cross-entropy of softmax over channel-major logits (`classes x pixels`),
/// summed into `(numerator, denominator)` so batches can be reduced before dividing.
/// `grad`, when given, receives `w[y] * (softmax - onehot)` per logit (not yet divided).
pub fn weighted_ce_logits_parts(
    logits: &[f64],
    labels: &[u8],
    weights: &[f64],
    mut grad: Option<&mut [f64]>,
) -> Result<(f64, f64)> {
    let classes = weights.len();
    let n = labels.len();
    if logits.len() != classes * n {
        return Err(Error::invalid(
            "logit count does not match labels x classes",
        ));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut z = vec![0.0; classes];
    for (p, &y) in labels.iter().enumerate() {
        let y = check_label(y, classes)?;
        for c in 0..classes {
            z[c] = logits[c * n + p];
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        let w = weights[y];
        num += w * (lse - z[y]);
        den += w;
        if let Some(g) = grad.as_deref_mut() {
            for c in 0..classes {
                let s = (z[c] - lse).exp();
                g[c * n + p] = w * (s - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((num, den))
}

/// Weighted cross-entropy on logits and its gradient.
pub fn weighted_ce_logits(
    logits: &[f64],
    labels: &[u8],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let (num, den) = weighted_ce_logits_parts(logits, labels, weights, Some(&mut grad))?;
    if den <= 0.0 {
        return Ok((0.0, vec![0.0; logits.len()]));
    }
    grad.iter_mut().for_each(|g| *g /= den);
    Ok((num / den, grad))
}

/// Channel-major softmax of `classes x pixels` logits into a pixel-major probability map.
pub fn softmax_probs(logits: &[f64], width: usize, height: usize, classes: usize) -> ProbMap {
    let n = width * height;
    let mut data = vec![0.0; n * classes];
    for p in 0..n {
        let m = (0..classes)
            .map(|c| logits[c * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..classes {
            let e = (logits[c * n + p] - m).exp();
            data[p * classes + c] = e;
            sum += e;
        }
        data[p * classes..(p + 1) * classes]
            .iter_mut()
            .for_each(|v| *v /= sum);
    }
    ProbMap {
        width,
        height,
        classes,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_frequencies_give_unit_weights() {
        assert_eq!(
            class_weights_from_counts(&[5; 6], 1.0).unwrap(),
            vec![1.0; 6]
        );
    }

    #[test]
    fn two_class_weights() {
        let w = class_weights_from_counts(&[75, 25], 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn weights_average_to_one_and_permute() {
        let counts = [900, 13, 40, 7, 1, 39];
        let w = class_weights_from_counts(&counts, 1.0).unwrap();
        assert!((w.iter().sum::<f64>() / 6.0 - 1.0).abs() < 1e-12);
        let perm = [3, 0, 5, 1, 4, 2];
        let pc: Vec<u64> = perm.iter().map(|&i| counts[i]).collect();
        let pw = class_weights_from_counts(&pc, 1.0).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!((pw[j] - w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn power_interpolates_to_uniform() {
        let counts = [75, 25];
        assert_eq!(
            class_weights_from_counts(&counts, 0.0).unwrap(),
            vec![1.0, 1.0]
        );
        let w = class_weights_from_counts(&counts, 0.5).unwrap();
        let (a, b) = ((100f64 / 75.0).sqrt(), 2.0);
        let m = (a + b) / 2.0;
        assert!((w[0] - a / m).abs() < 1e-12 && (w[1] - b / m).abs() < 1e-12);
    }

    #[test]
    fn missing_class_gets_max_weight() {
        let w = class_weights_from_counts(&[10, 30, 0], 1.0).unwrap();
        assert_eq!(w[2], w[0].max(w[1]));
    }

    fn pm(probs: &[[f64; 2]]) -> ProbMap {
        ProbMap {
            width: probs.len(),
            height: 1,
            classes: 2,
            data: probs.iter().flatten().copied().collect(),
        }
    }

    #[test]
    fn two_pixel_case() {
        let labels = Raster::from_vec(2, 1, 1, vec![0, 1]).unwrap();
        let l =
            weighted_cross_entropy(&pm(&[[0.5, 0.5], [0.25, 0.75]]), &labels, &[1.0, 3.0]).unwrap();
        let want = (2f64.ln() + 3.0 * (4.0f64 / 3.0).ln()) / 4.0;
        assert!((l - want).abs() < 1e-12);
        assert!((l - 0.38906).abs() < 5e-5);
    }

    #[test]
    fn perfect_prediction_is_zero_and_unit_weights_are_mean() {
        let labels = Raster::from_vec(2, 1, 1, vec![1, 0]).unwrap();
        assert_eq!(
            weighted_cross_entropy(&pm(&[[0.0, 1.0], [1.0, 0.0]]), &labels, &[2.0, 5.0]).unwrap(),
            0.0
        );
        let p = pm(&[[0.3, 0.7], [0.6, 0.4]]);
        let l = weighted_cross_entropy(&p, &labels, &[1.0, 1.0]).unwrap();
        assert!((l - (-(0.7f64.ln()) - 0.6f64.ln()) / 2.0).abs() < 1e-12);
        let bad = Raster::from_vec(2, 1, 1, vec![1, 6]).unwrap();
        assert!(weighted_cross_entropy(&p, &bad, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn logits_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 9;
            let logits: Vec<f64> = (0..6 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let weights: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..3.0)).collect();
            let (_, grad) = weighted_ce_logits(&logits, &labels, &weights).unwrap();
            let h = 1e-6;
            for i in 0..logits.len() {
                let mut p = logits.clone();
                p[i] += h;
                let mut m = logits.clone();
                m[i] -= h;
                let fd = (weighted_ce_logits(&p, &labels, &weights).unwrap().0
                    - weighted_ce_logits(&m, &labels, &weights).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(rel <= 1e-4, "seed {seed} i {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn softmax_agrees_with_prob_loss() {
        let logits = vec![0.2, -1.0, 3.0, 0.5, 0.0, 0.1];
        let probs = softmax_probs(&logits, 3, 1, 2);
        for p in 0..3 {
            assert!((probs.pixel(p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let labels = Raster::from_vec(3, 1, 1, vec![1, 0, 1]).unwrap();
        let a = weighted_cross_entropy(&probs, &labels, &[0.5, 2.0]).unwrap();
        let b = weighted_ce_logits(&logits, &labels.data, &[0.5, 2.0])
            .unwrap()
            .0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_prefer_lower_id() {
        let p = pm(&[[0.5, 0.5], [0.2, 0.8]]);
        assert_eq!(p.argmax().data, vec![0, 1]);
    }
}
