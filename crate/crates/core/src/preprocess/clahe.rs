//! Contrast-limited adaptive histogram equalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClaheMode {
    /// Convert to luma and equalize; output is single-channel.
    #[default]
    Grayscale,
    /// Equalize luma and shift RGB by the luma change, keeping chroma.
    Luminance,
}

impl std::str::FromStr for ClaheMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" | "gray" => Ok(ClaheMode::Grayscale),
            "luminance" | "luma" => Ok(ClaheMode::Luminance),
            other => Err(Error::Config(format!("unknown CLAHE mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheParams {
    /// Bin cap as a multiple of the uniform bin height `tile_pixels / 256`.
    pub clip_limit: f64,
    /// Tile grid as (rows, cols).
    pub tiles: (usize, usize),
    pub mode: ClaheMode,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tiles: (8, 8),
            mode: ClaheMode::Grayscale,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_limit > 0.0 && self.clip_limit.is_finite()) {
            return Err(Error::Config(format!(
                "clip_limit must be positive, got {}",
                self.clip_limit
            )));
        }
        if self.tiles.0 == 0 || self.tiles.1 == 0 {
            return Err(Error::Config("tile grid must be at least 1x1".into()));
        }
        Ok(())
    }
}

/// Lookup table for one tile: clipped histogram, uniform redistribution, CDF.
pub fn tile_lut(pixels: impl Iterator<Item = u8>, clip_limit: f64) -> [u8; 256] {
    let mut hist = [0.0f64; 256];
    let mut n = 0usize;
    for v in pixels {
        hist[v as usize] += 1.0;
        n += 1;
    }
    let mut lut = [0u8; 256];
    if n == 0 {
        return lut;
    }
    let limit = clip_limit * n as f64 / 256.0;
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / 256.0;
    let mut cdf = 0.0;
    for (v, h) in hist.iter().enumerate() {
        cdf += h + share;
        lut[v] = (255.0 * cdf / n as f64).round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Tile boundaries along one axis: `edges[k]..edges[k+1]` is tile `k`.
fn tile_edges(len: usize, count: usize) -> Vec<usize> {
    (0..=count).map(|k| k * len / count).collect()
}

/// Interpolation partner tiles and the weight of the second one for each coordinate.
fn axis_weights(edges: &[usize]) -> Vec<(usize, usize, f64)> {
    let count = edges.len() - 1;
    let centers: Vec<f64> = (0..count)
        .map(|k| (edges[k] + edges[k + 1]) as f64 / 2.0 - 0.5)
        .collect();
    let len = edges[count];
    (0..len)
        .map(|p| {
            let p = p as f64;
            if p <= centers[0] {
                (0, 0, 0.0)
            } else if p >= centers[count - 1] {
                (count - 1, count - 1, 0.0)
            } else {
                let k = centers.iter().rposition(|&c| c <= p).unwrap();
                let t = (p - centers[k]) / (centers[k + 1] - centers[k]);
                (k, k + 1, t)
            }
        })
        .collect()
}

fn clahe_plane(plane: &Raster, clip_limit: f64, tiles: (usize, usize)) -> Raster {
    let (w, h) = (plane.width, plane.height);
    let (rows, cols) = tiles;
    let ys = tile_edges(h, rows);
    let xs = tile_edges(w, cols);
    let mut luts = Vec::with_capacity(rows * cols);
    for ty in 0..rows {
        for tx in 0..cols {
            let px = (ys[ty]..ys[ty + 1])
                .flat_map(|y| (xs[tx]..xs[tx + 1]).map(move |x| (x, y)))
                .map(|(x, y)| plane.data[y * w + x]);
            luts.push(tile_lut(px, clip_limit));
        }
    }
    let wy = axis_weights(&ys);
    let wx = axis_weights(&xs);
    let mut out = Raster::new(w, h, 1);
    for y in 0..h {
        let (r0, r1, fy) = wy[y];
        for x in 0..w {
            let (c0, c1, fx) = wx[x];
            let v = plane.data[y * w + x] as usize;
            let a = luts[r0 * cols + c0][v] as f64;
            let b = luts[r0 * cols + c1][v] as f64;
            let c = luts[r1 * cols + c0][v] as f64;
            let d = luts[r1 * cols + c1][v] as f64;
            let top = a * (1.0 - fx) + b * fx;
            let bot = c * (1.0 - fx) + d * fx;
            out.data[y * w + x] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn clahe(image: &Raster, params: &ClaheParams) -> Result<Raster> {
    params.validate()?;
    if image.is_empty() {
        return Err(Error::invalid("CLAHE input image is empty"));
    }
    let mut tiles = params.tiles;
    if tiles.0 > image.height || tiles.1 > image.width {
        log::warn!(
            "CLAHE tile grid {}x{} exceeds {}x{} image; using 1x1",
            tiles.0,
            tiles.1,
            image.width,
            image.height
        );
        tiles = (1, 1);
    }
    let luma = image.to_luma();
    let eq = clahe_plane(&luma, params.clip_limit, tiles);
    match (params.mode, image.channels) {
        (ClaheMode::Grayscale, _) | (_, 1) => Ok(eq),
        (ClaheMode::Luminance, _) => {
            let mut out = image.clone();
            for (i, px) in out.data.chunks_exact_mut(3).enumerate() {
                let delta = eq.data[i] as i32 - luma.data[i] as i32;
                for c in px.iter_mut() {
                    *c = (*c as i32 + delta).clamp(0, 255) as u8;
                }
            }
            Ok(out)
        }
    }
}
