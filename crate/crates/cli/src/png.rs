use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Linear map from stored values to 8-bit gray: `min` is black and `max`
/// is white. A constant image maps to black.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub file: String,
    pub quantity: String,
    pub min: f64,
    pub max: f64,
}

pub fn min_max(values: &Array2<f64>) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn to_gray(values: &Array2<f64>, lo: f64, hi: f64) -> GrayImage {
    let (h, w) = values.dim();
    let span = hi - lo;
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = values[[y as usize, x as usize]];
        let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
        Luma([(t.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

/// Writes `values` as a min-max scaled PNG into `dir` and returns the view
/// record describing the scaling.
pub fn write_view(dir: &Path, file: &str, quantity: &str, values: &Array2<f64>) -> Result<View> {
    let (min, max) = min_max(values);
    to_gray(values, min, max).save(dir.join(file))?;
    Ok(View {
        file: file.to_string(),
        quantity: quantity.to_string(),
        min,
        max,
    })
}

fn line(img: &mut GrayImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), value: u8) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, Luma([value]));
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Plots `log10(data_error)` against sweep number. The returned view
/// records the plotted log range.
pub fn write_convergence(dir: &Path, file: &str, errors: &[f64]) -> Result<View> {
    const W: u32 = 480;
    const H: u32 = 320;
    const PAD: i64 = 20;
    let mut img = GrayImage::from_pixel(W, H, Luma([255]));
    let logs: Vec<f64> = errors.iter().map(|e| e.max(1e-300).log10()).collect();
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (pw, ph) = (W as i64 - 2 * PAD, H as i64 - 2 * PAD);
    line(&mut img, (PAD, PAD), (PAD, PAD + ph), 160);
    line(&mut img, (PAD, PAD + ph), (PAD + pw, PAD + ph), 160);
    let point = |k: usize, v: f64| {
        let tx = if logs.len() > 1 { k as f64 / (logs.len() - 1) as f64 } else { 0.5 };
        let ty = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        (PAD + (tx * pw as f64).round() as i64, PAD + ((1.0 - ty) * ph as f64).round() as i64)
    };
    for k in 1..logs.len() {
        line(&mut img, point(k - 1, logs[k - 1]), point(k, logs[k]), 0);
    }
    if logs.len() == 1 {
        let (x, y) = point(0, logs[0]);
        line(&mut img, (x - 2, y), (x + 2, y), 0);
    }
    img.save(dir.join(file))?;
    Ok(View {
        file: file.to_string(),
        quantity: "log10 data error".into(),
        min: if lo.is_finite() { lo } else { 0.0 },
        max: if hi.is_finite() { hi } else { 0.0 },
    })
}

/// Tiles min-max scaled images left to right, each nearest-resampled to
/// `tile` pixels square, separated by a white gutter.
pub fn write_panel(path: &Path, images: &[Array2<f64>], tile: u32) -> Result<Vec<(f64, f64)>> {
    const GUTTER: u32 = 4;
    let n = images.len().max(1) as u32;
    let mut img = GrayImage::from_pixel(n * tile + (n + 1) * GUTTER, tile + 2 * GUTTER, Luma([255]));
    let mut scales = Vec::with_capacity(images.len());
    for (k, values) in images.iter().enumerate() {
        let (lo, hi) = min_max(values);
        let gray = to_gray(values, lo, hi);
        let (h, w) = values.dim();
        let x0 = GUTTER + k as u32 * (tile + GUTTER);
        for y in 0..tile {
            for x in 0..tile {
                let sx = (x as usize * w / tile as usize) as u32;
                let sy = (y as usize * h / tile as usize) as u32;
                img.put_pixel(x0 + x, GUTTER + y, *gray.get_pixel(sx, sy));
            }
        }
        scales.push((lo, hi));
    }
    img.save(path)?;
    Ok(scales)
}
