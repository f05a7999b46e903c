//! Grayscale raster helpers shared by every stage.
//!
//! All pixel grids in this crate are `ndarray::Array2<f32>` in row-major
//! (row = y) order with intensities in `[0, 1]`, where 0 is ink and 1 is
//! white background. Binarized masks invert that reading (foreground = ink);
//! see [`crate::types::BinaryImage`].

use ndarray::Array2;
use thiserror::Error;

/// Grayscale pixel grid, `(height, width)`, intensities in `[0, 1]`.
pub type Pixels = Array2<f32>;

/// Side length of the canonical signature canvas.
pub const CANVAS_SIZE: usize = 256;

/// Background intensity used when padding (white).
pub const BACKGROUND: f32 = 1.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Area-weighted resampling to an arbitrary target size.
///
/// Each output pixel is the exact box integral of the source over its
/// pre-image rectangle, so downsampling averages full coverage and
/// upsampling replicates with fractional edge weights. Deterministic and
/// value-preserving: an identity-size resample copies pixels exactly.
pub fn resample_area(src: &Pixels, out_h: usize, out_w: usize) -> Pixels {
    let (in_h, in_w) = src.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0);
    if in_h == out_h && in_w == out_w {
        return src.clone();
    }
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    let mut out = Array2::<f32>::zeros((out_h, out_w));
    for oy in 0..out_h {
        let y0 = oy as f64 * sy;
        let y1 = (oy + 1) as f64 * sy;
        let iy0 = y0.floor() as usize;
        let iy1 = (y1.ceil() as usize).min(in_h);
        for ox in 0..out_w {
            let x0 = ox as f64 * sx;
            let x1 = (ox + 1) as f64 * sx;
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(in_w);
            let mut acc = 0.0f64;
            let mut area = 0.0f64;
            for iy in iy0..iy1 {
                let wy = overlap(y0, y1, iy as f64, (iy + 1) as f64);
                if wy <= 0.0 {
                    continue;
                }
                for ix in ix0..ix1 {
                    let wx = overlap(x0, x1, ix as f64, (ix + 1) as f64);
                    if wx <= 0.0 {
                        continue;
                    }
                    acc += f64::from(src[(iy, ix)]) * wy * wx;
                    area += wy * wx;
                }
            }
            out[(oy, ox)] = (acc / area) as f32;
        }
    }
    out
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Normalize an arbitrary-size crop onto the 256x256 canonical canvas.
///
/// The crop is scaled so its longer side equals [`CANVAS_SIZE`] (aspect ratio
/// preserved), centered, and padded with white. Idempotent on its own
/// outputs and never maps intensities outside `[0, 1]`.
pub fn normalize_to_canvas(crop: &Pixels) -> Result<Pixels, RasterError> {
    let (h, w) = crop.dim();
    if h == 0 || w == 0 {
        return Err(RasterError::InvalidInput("empty crop".into()));
    }
    let (out_h, out_w) = if h >= w {
        let ow = ((w as f64 * CANVAS_SIZE as f64 / h as f64).round() as usize).max(1);
        (CANVAS_SIZE, ow.min(CANVAS_SIZE))
    } else {
        let oh = ((h as f64 * CANVAS_SIZE as f64 / w as f64).round() as usize).max(1);
        (oh.min(CANVAS_SIZE), CANVAS_SIZE)
    };
    let scaled = resample_area(crop, out_h, out_w);
    let mut canvas = Array2::<f32>::from_elem((CANVAS_SIZE, CANVAS_SIZE), BACKGROUND);
    let y0 = (CANVAS_SIZE - out_h) / 2;
    let x0 = (CANVAS_SIZE - out_w) / 2;
    for y in 0..out_h {
        for x in 0..out_w {
            canvas[(y0 + y, x0 + x)] = scaled[(y, x)].clamp(0.0, 1.0);
        }
    }
    Ok(canvas)
}

/// Rotate around the image center by `degrees`, sampling bilinearly.
/// Pixels that map outside the source are filled with `fill`.
pub fn rotate(src: &Pixels, degrees: f32, fill: f32) -> Pixels {
    let (h, w) = src.dim();
    let cy = (h as f32 - 1.0) / 2.0;
    let cx = (w as f32 - 1.0) / 2.0;
    let rad = degrees.to_radians();
    let (s, c) = rad.sin_cos();
    let mut out = Array2::<f32>::from_elem((h, w), fill);
    for oy in 0..h {
        for ox in 0..w {
            // inverse mapping: output coord rotated back into source space
            let dy = oy as f32 - cy;
            let dx = ox as f32 - cx;
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            out[(oy, ox)] = sample_bilinear(src, sy, sx).unwrap_or(fill);
        }
    }
    out
}

/// Bilinear sample at fractional coordinates; `None` outside the grid.
pub fn sample_bilinear(src: &Pixels, y: f32, x: f32) -> Option<f32> {
    let (h, w) = src.dim();
    if y < 0.0 || x < 0.0 || y > (h - 1) as f32 || x > (w - 1) as f32 {
        return None;
    }
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f32;
    let fx = x - x0 as f32;
    let top = src[(y0, x0)] * (1.0 - fx) + src[(y0, x1)] * fx;
    let bot = src[(y1, x0)] * (1.0 - fx) + src[(y1, x1)] * fx;
    Some(top * (1.0 - fy) + bot * fy)
}

/// True if every intensity lies in `[0, 1]` and is finite.
pub fn in_unit_range(px: &Pixels) -> bool {
    px.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
}
