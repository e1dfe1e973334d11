use serde::{Deserialize, Serialize};

use crate::dataset::{DistressClass, NUM_CLASSES};
use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayStyle {
    /// RGB per class, taxonomy order.
    pub colors: [[u8; 3]; NUM_CLASSES],
    /// Opacity of mask fills.
    pub alpha: f64,
    pub line_width: usize,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            colors: [
                [255, 0, 0],
                [0, 0, 255],
                [0, 255, 0],
                [255, 255, 0],
                [0, 255, 255],
            ],
            alpha: 0.5,
            line_width: 2,
        }
    }
}

impl OverlayStyle {
    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_CLASSES {
            if self.colors[i + 1..].contains(&self.colors[i]) {
                return Err(Error::Config("overlay colors must be distinct".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("overlay alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn color(&self, class: DistressClass) -> [u8; 3] {
        self.colors[class.index()]
    }
}

/// Alpha-blends class colors over the image; background pixels are untouched.
pub fn render_mask_overlay(image: &Raster, mask: &Raster, style: &OverlayStyle) -> Result<Raster> {
    if (image.width, image.height) != (mask.width, mask.height) || mask.channels != 1 {
        return Err(Error::invalid("mask and image differ in size"));
    }
    let mut out = image.to_rgb();
    let a = style.alpha;
    for (i, &label) in mask.data.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let class = DistressClass::from_id(label)?;
        let c = style.color(class);
        for k in 0..3 {
            let v = &mut out.data[i * 3 + k];
            *v = ((1.0 - a) * *v as f64 + a * c[k] as f64).round() as u8;
        }
    }
    Ok(out)
}

/// Box outlines with a "class score" tag above each box.
pub fn render_detection_overlay(
    image: &Raster,
    detections: &[Detection],
    style: &OverlayStyle,
) -> Raster {
    let mut out = image.to_rgb();
    for d in detections {
        let c = style.color(d.class);
        let (w, h) = (out.width as i64, out.height as i64);
        let x1 = (d.bbox.x1.floor() as i64).clamp(0, w - 1);
        let y1 = (d.bbox.y1.floor() as i64).clamp(0, h - 1);
        let x2 = (d.bbox.x2.ceil() as i64 - 1).clamp(0, w - 1);
        let y2 = (d.bbox.y2.ceil() as i64 - 1).clamp(0, h - 1);
        for t in 0..style.line_width as i64 {
            fill_rect(&mut out, x1, y1 + t, x2, y1 + t, c);
            fill_rect(&mut out, x1, y2 - t, x2, y2 - t, c);
            fill_rect(&mut out, x1 + t, y1, x1 + t, y2, c);
            fill_rect(&mut out, x2 - t, y1, x2 - t, y2, c);
        }
        let label = format!("{} {:.2}", d.class.name(), d.score);
        let (tw, th) = (text_width(&label) as i64 + 2, GLYPH_H as i64 + 2);
        let ty = if y1 >= th { y1 - th } else { y1 };
        fill_rect(&mut out, x1, ty, x1 + tw - 1, ty + th - 1, c);
        draw_text(&mut out, x1 + 1, ty + 1, &label, [0, 0, 0]);
    }
    out
}

fn fill_rect(img: &mut Raster, x1: i64, y1: i64, x2: i64, y2: i64, c: [u8; 3]) {
    let (w, h) = (img.width as i64, img.height as i64);
    for y in y1.max(0)..=y2.min(h - 1) {
        for x in x1.max(0)..=x2.min(w - 1) {
            let i = img.index(x as usize, y as usize);
            img.data[i..i + 3].copy_from_slice(&c);
        }
    }
}

const GLYPH_W: usize = 3;
const GLYPH_H: usize = 5;

// 3x5 bitmaps, rows top to bottom
fn glyph(c: char) -> &'static str {
    match c.to_ascii_uppercase() {
        '0' => "111101101101111",
        '1' => "010110010010111",
        '2' => "111001111100111",
        '3' => "111001111001111",
        '4' => "101101111001001",
        '5' => "111100111001111",
        '6' => "111100111101111",
        '7' => "111001001001001",
        '8' => "111101111101111",
        '9' => "111101111001111",
        'A' => "010101111101101",
        'B' => "110101110101110",
        'C' => "011100100100011",
        'D' => "110101101101110",
        'E' => "111100110100111",
        'F' => "111100110100100",
        'G' => "011100101101011",
        'H' => "101101111101101",
        'I' => "111010010010111",
        'J' => "001001001101010",
        'K' => "101101110101101",
        'L' => "100100100100111",
        'M' => "101111111101101",
        'N' => "110101101101101",
        'O' => "010101101101010",
        'P' => "110101110100100",
        'Q' => "010101101110011",
        'R' => "110101110101101",
        'S' => "011100010001110",
        'T' => "111010010010010",
        'U' => "101101101101111",
        'V' => "101101101101010",
        'W' => "101101111111101",
        'X' => "101101010101101",
        'Y' => "101101010010010",
        'Z' => "111001010100111",
        '.' => "000000000000010",
        _ => "000000000000000",
    }
}

fn text_width(s: &str) -> usize {
    s.chars().count() * (GLYPH_W + 1)
}

fn draw_text(img: &mut Raster, x0: i64, y0: i64, s: &str, c: [u8; 3]) {
    for (k, ch) in s.chars().enumerate() {
        let gx = x0 + (k * (GLYPH_W + 1)) as i64;
        for (bit, b) in glyph(ch).bytes().enumerate() {
            if b == b'1' {
                let (x, y) = (gx + (bit % GLYPH_W) as i64, y0 + (bit / GLYPH_W) as i64);
                fill_rect(img, x, y, x, y, c);
            }
        }
    }
}
