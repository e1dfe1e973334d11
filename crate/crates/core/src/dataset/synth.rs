//! Procedural pavement images with pixel-exact boxes and masks.
//!
//! Each image is a gray asphalt texture carrying one to a few non-overlapping
//! distress instances. Every instance's box is the tight bounding box of its
//! mask pixels, so detection and segmentation labels agree exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::classes::{DistressClass, NUM_CLASSES};
use super::manifest::{
    BoxAnnotation, DatasetManifest, ImageRecord, Split, IMAGES_DIR, LABELS_DIR, MASKS_DIR,
};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_images: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Relative sampling weight per class, in taxonomy order.
    pub class_mix: [f64; NUM_CLASSES],
    pub min_instances: usize,
    pub max_instances: usize,
    /// Instances keep this fraction of each image dimension clear at the borders.
    pub edge_margin: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 1,
            width: 600,
            height: 400,
            seed: 0,
            class_mix: [1.0; NUM_CLASSES],
            min_instances: 1,
            max_instances: 3,
            edge_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub class: DistressClass,
    /// Tight pixel box of `pixels`, with exclusive right/bottom edges.
    pub bbox: BBox,
    /// Row-major indices of this instance's mask pixels.
    pub pixels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub image: Raster,
    pub mask: Raster,
    pub instances: Vec<SyntheticInstance>,
}

impl SyntheticSample {
    pub fn boxes(&self) -> Vec<BoxAnnotation> {
        self.instances
            .iter()
            .map(|inst| {
                BoxAnnotation::from_pixels(
                    inst.class,
                    &inst.bbox,
                    self.image.width,
                    self.image.height,
                )
                .expect("instance boxes lie inside the image")
            })
            .collect()
    }

    /// Binary mask of a single instance.
    pub fn instance_mask(&self, i: usize) -> Raster {
        let mut m = Raster::new(self.mask.width, self.mask.height, 1);
        for &p in &self.instances[i].pixels {
            m.data[p] = 1;
        }
        m
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Rect {
    fn overlaps(&self, o: &Rect, pad: f64) -> bool {
        self.x < o.x + o.w + pad
            && o.x < self.x + self.w + pad
            && self.y < o.y + o.h + pad
            && o.y < self.y + self.h + pad
    }

    fn pixel_range(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let x0 = self.x.floor().max(0.0) as usize;
        let y0 = self.y.floor().max(0.0) as usize;
        let x1 = ((self.x + self.w).ceil() as usize).min(width);
        let y1 = ((self.y + self.h).ceil() as usize).min(height);
        (x0, y0, x1, y1)
    }
}

/// Float RGB canvas used while compositing.
struct Canvas {
    width: usize,
    height: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn darken(&mut self, i: usize, factor: f64) {
        for c in &mut self.px[i] {
            *c *= factor;
        }
    }

    fn set_gray(&mut self, i: usize, v: f64) {
        self.px[i] = [v, v, v];
    }

    fn to_raster(&self) -> Raster {
        let data = self
            .px
            .iter()
            .flat_map(|p| p.map(|v| v.round().clamp(0.0, 255.0) as u8))
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Smooth value noise in [-1, 1] on a lattice of `cell` pixels.
fn value_noise(width: usize, height: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let fy = y as f64 / cell;
        let iy = fy as usize;
        let ty = smooth(fy - iy as f64);
        for x in 0..width {
            let fx = x as f64 / cell;
            let ix = fx as usize;
            let tx = smooth(fx - ix as f64);
            let a = lattice[iy * gw + ix];
            let b = lattice[iy * gw + ix + 1];
            let c = lattice[(iy + 1) * gw + ix];
            let d = lattice[(iy + 1) * gw + ix + 1];
            out[y * width + x] = lerp(lerp(a, b, tx), lerp(c, d, tx), ty);
        }
    }
    out
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn asphalt(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Canvas {
    let base = rng.random_range(105.0..145.0);
    let tint: [f64; 3] = [
        rng.random_range(-6.0..6.0),
        rng.random_range(-6.0..6.0),
        rng.random_range(-6.0..6.0),
    ];
    let coarse = value_noise(width, height, 24.0, rng);
    let fine = value_noise(width, height, 6.0, rng);
    let px = (0..width * height)
        .map(|i| {
            let g = base + 10.0 * coarse[i] + 6.0 * fine[i] + rng.random_range(-8.0..8.0);
            [g + tint[0], g + tint[1], g + tint[2]]
        })
        .collect();
    Canvas { width, height, px }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Radially jittered closed polygon inscribed in `r`.
fn blob_polygon(
    r: &Rect,
    vertices: usize,
    harmonics: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let mut coeffs = Vec::new();
    if harmonics {
        for k in 2..=4 {
            coeffs.push((
                k as f64,
                rng.random_range(0.0..0.12),
                rng.random_range(0.0..std::f64::consts::TAU),
            ));
        }
    }
    let raw: Vec<(f64, f64)> = (0..vertices)
        .map(|i| {
            let th = i as f64 / vertices as f64 * std::f64::consts::TAU;
            let mut rad = 1.0 + rng.random_range(-0.08..0.08);
            for &(k, a, ph) in &coeffs {
                rad += a * (k * th + ph).cos();
            }
            (rad * th.cos(), rad * th.sin())
        })
        .collect();
    let max_x = raw.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let max_y = raw.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let (cx, cy) = (r.x + r.w / 2.0, r.y + r.h / 2.0);
    raw.into_iter()
        .map(|(x, y)| (cx + x / max_x * r.w / 2.0, cy + y / max_y * r.h / 2.0))
        .collect()
}

type Segment = ((f64, f64), (f64, f64));

/// Darkens pixels near a set of segments with anti-aliased coverage; returns the
/// pixels whose coverage reaches one half.
fn stroke(
    canvas: &mut Canvas,
    segments: &[Segment],
    width_px: f64,
    strength: f64,
    region: &Rect,
) -> Vec<usize> {
    let (x0, y0, x1, y1) = region.pixel_range(canvas.width, canvas.height);
    let mut covered = Vec::new();
    let half = width_px / 2.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = segments
                .iter()
                .map(|&(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            let cov = (half + 0.5 - d).clamp(0.0, 1.0);
            if cov > 0.0 {
                let i = y * canvas.width + x;
                canvas.darken(i, 1.0 - strength * cov);
                if d <= half {
                    covered.push(i);
                }
            }
        }
    }
    covered
}

fn render_crack(canvas: &mut Canvas, r: &Rect, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let width_px = rng.random_range(2.0..=4.0);
    let pad = width_px / 2.0 + 1.0;
    let inner = Rect {
        x: r.x + pad,
        y: r.y + pad,
        w: r.w - 2.0 * pad,
        h: r.h - 2.0 * pad,
    };
    let flip = rng.random_bool(0.5);
    let n = rng.random_range(4..=8);
    let mut pts = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let jitter = if k == 0 || k == n {
            0.0
        } else {
            rng.random_range(-0.15..0.15)
        };
        let u = (t + jitter).clamp(0.0, 1.0);
        let v = (t - jitter).clamp(0.0, 1.0);
        let x = inner.x + u * inner.w;
        let y = if flip {
            inner.y + (1.0 - v) * inner.h
        } else {
            inner.y + v * inner.h
        };
        pts.push((x, y));
    }
    let segments: Vec<_> = pts.windows(2).map(|w| (w[0], w[1])).collect();
    let strength = rng.random_range(0.6..0.8);
    stroke(canvas, &segments, width_px, strength, r)
}

fn render_alligator(canvas: &mut Canvas, r: &Rect, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let poly = blob_polygon(r, rng.random_range(10..=14), false, rng);
    let spacing = (0.14 * r.w.min(r.h)).clamp(7.0, 20.0);
    let nx = (r.w / spacing).ceil() as usize + 1;
    let ny = (r.h / spacing).ceil() as usize + 1;
    let grid: Vec<(f64, f64)> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            (
                r.x + i as f64 * spacing + rng.random_range(-0.3..0.3) * spacing,
                r.y + j as f64 * spacing + rng.random_range(-0.3..0.3) * spacing,
            )
        })
        .collect();
    let mut segments = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let a = grid[j * nx + i];
            let nbrs = [
                (i + 1 < nx).then(|| grid[j * nx + i + 1]),
                (j + 1 < ny).then(|| grid[(j + 1) * nx + i]),
            ];
            for b in nbrs.into_iter().flatten() {
                if point_in_polygon(a, &poly) && point_in_polygon(b, &poly) {
                    segments.push((a, b));
                }
            }
        }
    }
    for k in 0..poly.len() {
        segments.push((poly[k], poly[(k + 1) % poly.len()]));
    }

    // region pixels are the polygon interior; the mesh and outline are drawn on top
    let (x0, y0, x1, y1) = r.pixel_range(canvas.width, canvas.height);
    let mut region = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            if point_in_polygon((x as f64 + 0.5, y as f64 + 0.5), &poly) {
                let i = y * canvas.width + x;
                canvas.darken(i, 0.92);
                region.push(i);
            }
        }
    }
    let width_px = rng.random_range(1.2..2.2);
    stroke(canvas, &segments, width_px, 0.65, r);
    region
}

fn render_bowl(canvas: &mut Canvas, r: &Rect, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (cx, cy) = (r.x + r.w / 2.0, r.y + r.h / 2.0);
    let (a, b) = (r.w / 2.0, r.h / 2.0);
    let depth = rng.random_range(0.45..0.65);
    let (x0, y0, x1, y1) = r.pixel_range(canvas.width, canvas.height);
    let mut pixels = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            let r2 = dx * dx + dy * dy;
            if r2 <= 1.0 {
                let i = y * canvas.width + x;
                canvas.darken(i, 1.0 - depth * (0.3 + 0.7 * (1.0 - r2)));
                pixels.push(i);
            }
        }
    }
    pixels
}

fn render_delamination(canvas: &mut Canvas, r: &Rect, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let poly = blob_polygon(r, 24, true, rng);
    let level = rng.random_range(55.0..80.0);
    let (x0, y0, x1, y1) = r.pixel_range(canvas.width, canvas.height);
    let mut pixels = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            if point_in_polygon((x as f64 + 0.5, y as f64 + 0.5), &poly) {
                let i = y * canvas.width + x;
                canvas.set_gray(i, level + rng.random_range(-6.0..6.0));
                pixels.push(i);
            }
        }
    }
    pixels
}

fn render_scaling(canvas: &mut Canvas, r: &Rect, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (cx, cy) = (r.x + r.w / 2.0, r.y + r.h / 2.0);
    let (a, b) = (r.w / 2.0, r.h / 2.0);
    let base = rng.random_range(120.0..150.0);
    let (x0, y0, x1, y1) = r.pixel_range(canvas.width, canvas.height);
    let mut pixels = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            // superellipse: a rounded rectangle
            if dx.powi(4) + dy.powi(4) <= 1.0 {
                let i = y * canvas.width + x;
                let v = if rng.random_bool(0.1) {
                    rng.random_range(190.0..230.0)
                } else {
                    base + rng.random_range(-55.0..55.0)
                };
                canvas.set_gray(i, v);
                pixels.push(i);
            }
        }
    }
    pixels
}

fn sample_size(class: DistressClass, width: f64, height: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let s = width.min(height);
    let mut range = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match class {
        DistressClass::Crack => (range(0.15 * s, 0.5 * s), range(0.15 * s, 0.5 * s)),
        DistressClass::AlligatorCrack => (range(0.22 * s, 0.4 * s), range(0.22 * s, 0.4 * s)),
        DistressClass::BowlDepression => (range(0.15 * s, 0.3 * s), range(0.15 * s, 0.3 * s)),
        DistressClass::Delamination => (range(0.15 * s, 0.35 * s), range(0.15 * s, 0.35 * s)),
        DistressClass::Scaling => (
            range(0.3 * width, 0.45 * width),
            range(0.3 * height, 0.45 * height),
        ),
    }
}

fn pick_class(mix: &[f64; NUM_CLASSES], rng: &mut ChaCha8Rng) -> DistressClass {
    let total: f64 = mix.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in mix.iter().enumerate() {
        if u < w {
            return DistressClass::from_index(i);
        }
        u -= w;
    }
    DistressClass::from_index(NUM_CLASSES - 1)
}

/// Renders one image from an explicit random stream.
pub fn synthesize(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> SyntheticSample {
    let (width, height) = (cfg.width, cfg.height);
    let (wf, hf) = (width as f64, height as f64);
    let mut canvas = asphalt(width, height, rng);

    let n = rng.random_range(cfg.min_instances..=cfg.max_instances.max(cfg.min_instances));
    let mut classes: Vec<DistressClass> = (0..n).map(|_| pick_class(&cfg.class_mix, rng)).collect();
    // large regions first so smaller instances fill the gaps
    classes.sort_by_key(|c| std::cmp::Reverse(*c == DistressClass::Scaling));

    let (mx, my) = (cfg.edge_margin * wf, cfg.edge_margin * hf);
    let mut placed: Vec<(DistressClass, Rect)> = Vec::new();
    for class in classes {
        for _ in 0..40 {
            let (w, h) = sample_size(class, wf, hf, rng);
            let (w, h) = (w.min(wf - 2.0 * mx - 1.0), h.min(hf - 2.0 * my - 1.0));
            if w < 4.0 || h < 4.0 {
                break;
            }
            let rect = Rect {
                x: rng.random_range(mx..=(wf - mx - w)),
                y: rng.random_range(my..=(hf - my - h)),
                w,
                h,
            };
            if placed.iter().all(|(_, o)| !rect.overlaps(o, 4.0)) {
                placed.push((class, rect));
                break;
            }
        }
    }

    let mut mask = Raster::new(width, height, 1);
    let mut instances = Vec::new();
    for (class, rect) in placed {
        let pixels = match class {
            DistressClass::Crack => render_crack(&mut canvas, &rect, rng),
            DistressClass::AlligatorCrack => render_alligator(&mut canvas, &rect, rng),
            DistressClass::BowlDepression => render_bowl(&mut canvas, &rect, rng),
            DistressClass::Delamination => render_delamination(&mut canvas, &rect, rng),
            DistressClass::Scaling => render_scaling(&mut canvas, &rect, rng),
        };
        if pixels.is_empty() {
            continue;
        }
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
        for &p in &pixels {
            let (x, y) = (p % width, p / width);
            mask.data[p] = class.id();
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x + 1);
            y2 = y2.max(y + 1);
        }
        instances.push(SyntheticInstance {
            class,
            bbox: BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64),
            pixels,
        });
    }

    SyntheticSample {
        image: canvas.to_raster(),
        mask,
        instances,
    }
}

/// Image `index` of the dataset described by `cfg`; each index has its own stream.
pub fn synthesize_indexed(cfg: &SynthConfig, index: usize) -> SyntheticSample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    synthesize(cfg, &mut rng)
}

/// Writes `images/`, `labels/`, `masks/` and `manifest.jsonl` under `out`.
pub fn generate_synthetic(cfg: &SynthConfig, out: &Path) -> Result<DatasetManifest> {
    if cfg.n_images == 0 {
        return Err(Error::invalid("n_images must be at least 1"));
    }
    if cfg.width < 16 || cfg.height < 16 {
        return Err(Error::invalid("synthetic images must be at least 16x16"));
    }
    if cfg.class_mix.iter().any(|w| *w < 0.0) || cfg.class_mix.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid(
            "class mix needs nonnegative weights with a positive sum",
        ));
    }
    for d in [IMAGES_DIR, LABELS_DIR, MASKS_DIR] {
        let p = out.join(d);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let digits = cfg.n_images.to_string().len().max(4);
    let mut records = Vec::with_capacity(cfg.n_images);
    for i in 0..cfg.n_images {
        let sample = synthesize_indexed(cfg, i);
        let id = format!("synth_{i:0digits$}");
        let image_rel = PathBuf::from(IMAGES_DIR).join(format!("{id}.png"));
        let mask_rel = PathBuf::from(MASKS_DIR).join(format!("{id}.png"));
        sample.image.save_png(&out.join(&image_rel))?;
        sample.mask.save_png(&out.join(&mask_rel))?;
        records.push(ImageRecord {
            id,
            image_path: image_rel,
            width: cfg.width,
            height: cfg.height,
            boxes: sample.boxes(),
            mask_path: Some(mask_rel),
            split: Split::Unassigned,
        });
    }
    let mut manifest = DatasetManifest::new(out, records);
    manifest.seed = cfg.seed;
    manifest.write_annotations()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            width: 160,
            height: 120,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        let cfg = SynthConfig { seed: 7, ..small() };
        let a = synthesize_indexed(&cfg, 0);
        let b = synthesize_indexed(&cfg, 0);
        assert_eq!(a.image, b.image);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.boxes(), b.boxes());
    }

    #[test]
    fn box_is_tight_bbox_of_mask() {
        let cfg = small();
        for i in 0..30 {
            let s = synthesize_indexed(&cfg, i);
            assert!(!s.instances.is_empty());
            for (k, inst) in s.instances.iter().enumerate() {
                let m = s.instance_mask(k);
                let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
                for y in 0..m.height {
                    for x in 0..m.width {
                        if m.get(x, y, 0) == 1 {
                            assert_eq!(s.mask.get(x, y, 0), inst.class.id());
                            x1 = x1.min(x);
                            y1 = y1.min(y);
                            x2 = x2.max(x + 1);
                            y2 = y2.max(y + 1);
                        }
                    }
                }
                assert_eq!(
                    inst.bbox,
                    BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)
                );
            }
        }
    }

    #[test]
    fn mask_histogram_matches_placed_classes() {
        let cfg = small();
        for i in 0..30 {
            let s = synthesize_indexed(&cfg, i);
            let hist = s.mask.histogram();
            for c in DistressClass::ALL {
                let placed = s.instances.iter().any(|inst| inst.class == c);
                assert_eq!(hist[c.id() as usize] > 0, placed, "image {i} class {c}");
            }
        }
    }
}
