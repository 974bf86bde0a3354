//! Height-to-color mapping and PNG rendering.
//!
//! The map is piecewise linear over [-2, +2] m: blue (0,0,255) at -2 m,
//! white (255,255,255) at 0 m, red (255,0,0) at +2 m, clamped beyond, with
//! no-data cells in gray (128,128,128). Grid row 0 (nearest) renders at the
//! image bottom; a 12-px colorbar strip (+2 at top) is appended on the right
//! behind a 1-px black separator.

use heightlab_core::heightgrid::HeightMap;
use image::{Rgb, RgbImage};

pub const NODATA_GRAY: [u8; 3] = [128, 128, 128];
const BAR_WIDTH: u32 = 12;
const RANGE: f64 = 2.0;

pub fn height_color(h: f64) -> [u8; 3] {
    let t = (h / RANGE).clamp(-1.0, 1.0);
    let lerp = |a: u8, b: u8, f: f64| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    if t < 0.0 {
        let f = t + 1.0; // 0 at -2 m, 1 at 0 m
        [lerp(0, 255, f), lerp(0, 255, f), 255]
    } else {
        let f = t; // 0 at 0 m, 1 at +2 m
        [255, lerp(255, 0, f), lerp(255, 0, f)]
    }
}

pub fn render_heightmap_png(map: &HeightMap) -> RgbImage {
    let grid = map.grid();
    let rows = grid.rows as u32;
    let cols = grid.cols as u32;
    let width = cols + 1 + BAR_WIDTH;
    let mut img = RgbImage::new(width, rows);
    for r in 0..grid.rows {
        let v = rows - 1 - r as u32;
        for c in 0..grid.cols {
            let color = match map.get(r, c) {
                Some(h) => height_color(h),
                None => NODATA_GRAY,
            };
            img.put_pixel(c as u32, v, Rgb(color));
        }
    }
    for v in 0..rows {
        img.put_pixel(cols, v, Rgb([0, 0, 0]));
        // Colorbar: +RANGE at the top, -RANGE at the bottom.
        let h = if rows > 1 {
            RANGE - 2.0 * RANGE * v as f64 / (rows - 1) as f64
        } else {
            0.0
        };
        let color = height_color(h);
        for b in 0..BAR_WIDTH {
            img.put_pixel(cols + 1 + b, v, Rgb(color));
        }
    }
    img
}
