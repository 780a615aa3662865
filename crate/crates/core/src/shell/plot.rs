//! Minimal PNG line charts for reward curves and output trajectories.
//! Axes box plus autoscaled polylines; no text rendering.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::ShellError;

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const MARGIN: u32 = 40;

pub const SERIES_COLORS: [[u8; 3]; 6] = [
    [214, 69, 65],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (x0 + t * (x1 - x0)).round() as i64;
        let y = (y0 + t * (y1 - y0)).round() as i64;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Renders each series as a polyline over a shared autoscaled axis box.
pub fn render_line_chart(path: &Path, series: &[Vec<f64>]) -> Result<(), ShellError> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([30, 30, 30]);
    let (left, right) = (MARGIN as f64, (WIDTH - MARGIN) as f64);
    let (top, bottom) = (MARGIN as f64, (HEIGHT - MARGIN) as f64);
    draw_line(&mut img, left, bottom, right, bottom, axis);
    draw_line(&mut img, left, top, left, bottom, axis);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_len = 0usize;
    for s in series {
        for &v in s {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        max_len = max_len.max(s.len());
    }
    if max_len >= 2 && lo.is_finite() {
        if hi == lo {
            hi = lo + 1.0;
        }
        for (idx, s) in series.iter().enumerate() {
            if s.len() < 2 {
                continue;
            }
            let color = Rgb(SERIES_COLORS[idx % SERIES_COLORS.len()]);
            let to_xy = |i: usize, v: f64| -> (f64, f64) {
                let x = left + (right - left) * i as f64 / (s.len() - 1) as f64;
                let y = bottom - (bottom - top) * (v - lo) / (hi - lo);
                (x, y)
            };
            for i in 1..s.len() {
                let (x0, y0) = to_xy(i - 1, s[i - 1]);
                let (x1, y1) = to_xy(i, s[i]);
                draw_line(&mut img, x0, y0, x1, y1, color);
            }
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    img.save(path).map_err(|e| ShellError::Invalid(format!("write plot: {e}")))?;
    Ok(())
}
