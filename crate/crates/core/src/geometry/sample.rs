//! Bilinear image sampling with coordinate derivatives.

use crate::geometry::Image;

/// Result of sampling an image at a continuous coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: [f64; 3],
    /// ∂value/∂x per channel.
    pub dx: [f64; 3],
    /// ∂value/∂y per channel.
    pub dy: [f64; 3],
    /// False when any of the four taps would fall outside the image; the value is then taken
    /// from the clamped coordinate.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy)]
struct Taps {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
}

#[inline]
fn axis_taps(c: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let c = c.clamp(0.0, (n - 1) as f64);
    // The last sample line belongs to the cell on its left so both taps stay inside.
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, i0 + 1, c - i0 as f64)
}

#[inline]
fn taps(img: &Image, x: f64, y: f64) -> Taps {
    let (x0, x1, fx) = axis_taps(x, img.width());
    let (y0, y1, fy) = axis_taps(y, img.height());
    Taps { x0, x1, y0, y1, fx, fy }
}

/// True when all four bilinear taps of `(x, y)` lie inside a `width`×`height` grid.
#[inline]
pub fn in_bounds(width: usize, height: usize, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width as f64 - 1.0) && y <= (height as f64 - 1.0)
}

/// Samples `img` at `(x, y)` with clamp-to-edge behavior and reports validity.
pub fn bilinear(img: &Image, x: f64, y: f64) -> Sample {
    let valid = x.is_finite() && y.is_finite() && in_bounds(img.width(), img.height(), x, y);
    let (x, y) = if x.is_finite() && y.is_finite() { (x, y) } else { (0.0, 0.0) };
    let t = taps(img, x, y);
    let p00 = img.pixel(t.x0, t.y0);
    let p10 = img.pixel(t.x1, t.y0);
    let p01 = img.pixel(t.x0, t.y1);
    let p11 = img.pixel(t.x1, t.y1);
    let mut value = [0.0; 3];
    let mut dx = [0.0; 3];
    let mut dy = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] + t.fx * (p10[c] - p00[c]);
        let bottom = p01[c] + t.fx * (p11[c] - p01[c]);
        value[c] = top + t.fy * (bottom - top);
        if t.x1 != t.x0 {
            dx[c] = (1.0 - t.fy) * (p10[c] - p00[c]) + t.fy * (p11[c] - p01[c]);
        }
        if t.y1 != t.y0 {
            dy[c] = bottom - top;
        }
    }
    Sample { value, dx, dy, valid }
}
