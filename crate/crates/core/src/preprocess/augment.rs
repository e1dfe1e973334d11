//! Shift/scale/rotate, horizontal flip and brightness/contrast augmentation
//! applied consistently to an image, its boxes and its label mask.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BoxAnnotation;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::Raster;

/// Boxes whose visible area falls below this fraction of their transformed area are dropped.
pub const MIN_VISIBLE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    /// Maximum translation as a fraction of width/height.
    pub shift_limit: f64,
    /// Scale is drawn from `[1 - scale_limit, 1 + scale_limit]`.
    pub scale_limit: f64,
    /// Maximum rotation in degrees.
    pub rotate_limit: f64,
    pub hflip_prob: f64,
    /// Additive brightness as a fraction of 255.
    pub brightness_limit: f64,
    /// Contrast gain is drawn from `[1 - contrast_limit, 1 + contrast_limit]`.
    pub contrast_limit: f64,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            shift_limit: 0.0625,
            scale_limit: 0.1,
            rotate_limit: 0.5,
            hflip_prob: 0.5,
            brightness_limit: 0.2,
            contrast_limit: 0.2,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self {
            shift_limit: 0.0,
            scale_limit: 0.0,
            rotate_limit: 0.0,
            hflip_prob: 0.0,
            brightness_limit: 0.0,
            contrast_limit: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let limits = [
            self.shift_limit,
            self.scale_limit,
            self.rotate_limit,
            self.brightness_limit,
            self.contrast_limit,
        ];
        if limits.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "augmentation limits must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config("hflip_prob must lie in [0, 1]".into()));
        }
        if self.scale_limit >= 1.0 || self.contrast_limit >= 1.0 {
            return Err(Error::Config(
                "scale_limit and contrast_limit must be < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> AugmentParams {
        let mut sym = |limit: f64| {
            if limit > 0.0 {
                rng.random_range(-limit..=limit)
            } else {
                0.0
            }
        };
        let shift = (sym(self.shift_limit), sym(self.shift_limit));
        let scale = 1.0 + sym(self.scale_limit);
        let angle_deg = sym(self.rotate_limit);
        let brightness = sym(self.brightness_limit);
        let contrast = 1.0 + sym(self.contrast_limit);
        let hflip = self.hflip_prob > 0.0 && rng.random_bool(self.hflip_prob);
        AugmentParams {
            shift,
            scale,
            angle_deg,
            hflip,
            brightness,
            contrast,
        }
    }
}

/// Random stream for one image in one epoch; independent of worker count.
pub fn augment_rng(seed: u64, epoch: u64, image_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(image_index as u64);
    rng
}

/// One concrete draw of augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub shift: (f64, f64),
    pub scale: f64,
    pub angle_deg: f64,
    pub hflip: bool,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            shift: (0.0, 0.0),
            scale: 1.0,
            angle_deg: 0.0,
            hflip: false,
            brightness: 0.0,
            contrast: 1.0,
        }
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.shift == (0.0, 0.0) && self.scale == 1.0 && self.angle_deg == 0.0 && !self.hflip
    }

    pub fn is_photometric_identity(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 1.0
    }

    /// The affine map from source to output pixel coordinates for a `width`x`height` image.
    pub fn affine(&self, width: usize, height: usize) -> Affine {
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = (w / 2.0, h / 2.0);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let k = self.scale;
        // flip: x -> w - x, folded into the linear part
        let f = if self.hflip { -1.0 } else { 1.0 };
        let flip_off = if self.hflip { w } else { 0.0 };
        let m = [k * c * f, -k * s, k * s * f, k * c];
        let (tx, ty) = (self.shift.0 * w, self.shift.1 * h);
        // p' = C + M_rot (F(p) - C) + t
        let px = flip_off - cx;
        let py = -cy;
        let bx = cx + k * c * px - k * s * py + tx;
        let by = cy + k * s * px + k * c * py + ty;
        Affine { m, b: [bx, by] }
    }
}

/// `p' = m·p + b` in continuous pixel coordinates (pixel centers at `i + 0.5`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub m: [f64; 4],
    pub b: [f64; 2],
}

impl Affine {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0] * x + self.m[1] * y + self.b[0],
            self.m[2] * x + self.m[3] * y + self.b[1],
        )
    }

    pub fn inverse(&self) -> Affine {
        let [a, b, c, d] = self.m;
        let det = a * d - b * c;
        let m = [d / det, -b / det, -c / det, a / det];
        let bx = -(m[0] * self.b[0] + m[1] * self.b[1]);
        let by = -(m[2] * self.b[0] + m[3] * self.b[1]);
        Affine { m, b: [bx, by] }
    }
}

fn warp(src: &Raster, inv: &Affine, bilinear: bool) -> Raster {
    let (w, h) = (src.width, src.height);
    let mut out = Raster::new(w, h, src.channels);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            if fx < -0.5 || fy < -0.5 || fx > w as f64 - 0.5 || fy > h as f64 - 0.5 {
                continue;
            }
            let dst = out.index(x, y);
            if bilinear {
                let fx = fx.clamp(0.0, (w - 1) as f64);
                let fy = fy.clamp(0.0, (h - 1) as f64);
                let x0 = fx.floor() as usize;
                let y0 = fy.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
                for c in 0..src.channels {
                    let a = src.get(x0, y0, c) as f64;
                    let b = src.get(x1, y0, c) as f64;
                    let d = src.get(x0, y1, c) as f64;
                    let e = src.get(x1, y1, c) as f64;
                    let top = a + (b - a) * tx;
                    let bot = d + (e - d) * tx;
                    out.data[dst + c] = (top + (bot - top) * ty).round().clamp(0.0, 255.0) as u8;
                }
            } else {
                let xi = (sx.floor() as isize).clamp(0, w as isize - 1) as usize;
                let yi = (sy.floor() as isize).clamp(0, h as isize - 1) as usize;
                let s = src.index(xi, yi);
                out.data[dst..dst + src.channels].copy_from_slice(&src.data[s..s + src.channels]);
            }
        }
    }
    out
}

/// Transforms a pixel box by its four corners and returns the clamped axis-aligned
/// hull, or `None` when too little of it stays visible.
pub fn transform_box(b: &BBox, affine: &Affine, width: usize, height: usize) -> Option<BBox> {
    let corners =
        [(b.x1, b.y1), (b.x2, b.y1), (b.x1, b.y2), (b.x2, b.y2)].map(|(x, y)| affine.apply(x, y));
    let xs = corners.map(|p| p.0);
    let ys = corners.map(|p| p.1);
    let hull = BBox::new(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let clamped = hull.clamp(width as f64, height as f64);
    if !clamped.is_valid() || clamped.area() < MIN_VISIBLE_FRACTION * hull.area() {
        return None;
    }
    Some(clamped)
}

fn photometric(image: &mut Raster, p: &AugmentParams) {
    let beta = p.brightness * 255.0;
    for v in image.data.iter_mut() {
        *v = (p.contrast * *v as f64 + beta).round().clamp(0.0, 255.0) as u8;
    }
}

/// Applies an already-drawn set of parameters.
pub fn apply_params(
    params: &AugmentParams,
    image: &Raster,
    boxes: &[BoxAnnotation],
    mask: Option<&Raster>,
) -> (Raster, Vec<BoxAnnotation>, Option<Raster>) {
    let (w, h) = (image.width, image.height);
    let (mut img, boxes, mask) = if params.is_geometric_identity() {
        (image.clone(), boxes.to_vec(), mask.cloned())
    } else {
        let affine = params.affine(w, h);
        let inv = affine.inverse();
        let img = warp(image, &inv, true);
        let mask = mask.map(|m| warp(m, &inv, false));
        let boxes = boxes
            .iter()
            .filter_map(|b| {
                let t = transform_box(&b.to_pixels(w, h), &affine, w, h)?;
                BoxAnnotation::from_pixels(b.class, &t, w, h).ok()
            })
            .collect();
        (img, boxes, mask)
    };
    if !params.is_photometric_identity() {
        photometric(&mut img, params);
    }
    (img, boxes, mask)
}

/// Draws parameters from `spec` and applies them. An empty box list in the
/// result means every box left the frame; callers decide whether to redraw.
pub fn apply_augmentation(
    image: &Raster,
    boxes: &[BoxAnnotation],
    mask: Option<&Raster>,
    spec: &AugmentationSpec,
    draw: &mut ChaCha8Rng,
) -> (Raster, Vec<BoxAnnotation>, Option<Raster>) {
    let params = spec.sample(draw);
    apply_params(&params, image, boxes, mask)
}
