//! Windowed SSIM with reflection padding, and its adjoint with respect to the second image.
//!
//! Local statistics use a uniform `window`×`window` box. Borders are padded by reflection
//! (index `-1` reads pixel `1`, index `n` reads pixel `n - 2`), so the same pixel may appear
//! twice in a border window; the adjoint accounts for that multiplicity.

use crate::error::{Error, Result};
use crate::geometry::Image;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

pub(crate) fn check_window(window: usize, width: usize, height: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::param(format!("SSIM window must be odd and >= 3 (got {window})")));
    }
    let r = window / 2;
    if width <= r || height <= r {
        return Err(Error::param(format!(
            "image {width}x{height} too small for a {window}x{window} reflected window"
        )));
    }
    Ok(())
}

pub(crate) fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::param(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Linear indices of the window around `(x, y)`, reflection applied (length `window²`).
pub(crate) fn window_indices(x: usize, y: usize, w: usize, h: usize, window: usize, out: &mut Vec<usize>) {
    let r = (window / 2) as i64;
    out.clear();
    for dy in -r..=r {
        let yy = reflect(y as i64 + dy, h);
        for dx in -r..=r {
            let xx = reflect(x as i64 + dx, w);
            out.push(yy * w + xx);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    mu_a: f64,
    mu_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

#[inline]
fn stats(a: &[f64], b: &[f64], idx: &[usize], c: usize) -> Stats {
    let n = idx.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &k in idx {
        let (va, vb) = (a[k * 3 + c], b[k * 3 + c]);
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
    }
    let mu_a = sa / n;
    let mu_b = sb / n;
    Stats {
        mu_a,
        mu_b,
        var_a: saa / n - mu_a * mu_a,
        var_b: sbb / n - mu_b * mu_b,
        cov: sab / n - mu_a * mu_b,
    }
}

#[inline]
fn ssim_of(s: &Stats) -> f64 {
    let n1 = 2.0 * s.mu_a * s.mu_b + C1;
    let n2 = 2.0 * s.cov + C2;
    let d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + C1;
    let d2 = s.var_a + s.var_b + C2;
    n1 * n2 / (d1 * d2)
}

/// Per-pixel SSIM of `a` and `b`, averaged over the three channels.
pub fn ssim(a: &Image, b: &Image, window: usize) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    check_window(window, w, h)?;
    let (da, db) = (a.data(), b.data());
    let mut idx = Vec::with_capacity(window * window);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            window_indices(x, y, w, h, window, &mut idx);
            let mut acc = 0.0;
            for c in 0..3 {
                acc += ssim_of(&stats(da, db, &idx, c));
            }
            out[y * w + x] = acc / 3.0;
        }
    }
    Ok(out)
}

/// Given `upstream[p] = ∂L/∂SSIM(p)`, returns `∂L/∂b` (interleaved like the image data).
pub fn ssim_backward(a: &Image, b: &Image, window: usize, upstream: &[f64]) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    check_window(window, w, h)?;
    if upstream.len() != w * h {
        return Err(Error::param("upstream gradient has the wrong length"));
    }
    let (da, db) = (a.data(), b.data());
    let mut idx = Vec::with_capacity(window * window);
    let mut grad = vec![0.0; w * h * 3];
    let n = (window * window) as f64;
    for y in 0..h {
        for x in 0..w {
            let g = upstream[y * w + x];
            if g == 0.0 {
                continue;
            }
            window_indices(x, y, w, h, window, &mut idx);
            for c in 0..3 {
                let s = stats(da, db, &idx, c);
                let n1 = 2.0 * s.mu_a * s.mu_b + C1;
                let n2 = 2.0 * s.cov + C2;
                let d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + C1;
                let d2 = s.var_a + s.var_b + C2;
                let val = n1 * n2 / (d1 * d2);
                let d_mu_b = 2.0 * s.mu_a * n2 / (d1 * d2) - val * 2.0 * s.mu_b / d1;
                let d_var_b = -val / d2;
                let d_cov = 2.0 * n1 / (d1 * d2);
                let scale = g / 3.0 / n;
                for &k in &idx {
                    let (va, vb) = (da[k * 3 + c], db[k * 3 + c]);
                    grad[k * 3 + c] += scale
                        * (d_mu_b + d_var_b * 2.0 * (vb - s.mu_b) + d_cov * (va - s.mu_a));
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| {
            [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
        })
        .unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let a = noise(12, 9, 3);
        for v in ssim(&a, &a, 3).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_images_closed_form() {
        let (ma, mb) = (0.2, 0.7);
        let a = Image::filled(8, 8, [ma; 3]).unwrap();
        let b = Image::filled(8, 8, [mb; 3]).unwrap();
        let expected = (2.0 * ma * mb + C1) * C2 / ((ma * ma + mb * mb + C1) * C2);
        for v in ssim(&a, &b, 3).unwrap() {
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        let m = ssim(&noise(64, 64, 1), &noise(64, 64, 2), 3).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!(mean.abs() < 0.1, "mean SSIM {mean}");
        assert!(m.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }

    #[test]
    fn shape_and_window_errors() {
        let a = noise(6, 6, 0);
        assert!(ssim(&a, &noise(6, 5, 0), 3).is_err());
        assert!(ssim(&a, &a, 4).is_err());
        assert!(ssim(&a, &a, 1).is_err());
        assert!(ssim(&noise(2, 2, 0), &noise(2, 2, 1), 5).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let a = noise(7, 6, 11);
        let b = noise(7, 6, 12);
        let up: Vec<f64> = (0..42).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.5).collect();
        let grad = ssim_backward(&a, &b, 3, &up).unwrap();
        let f = |img: &Image| -> f64 {
            ssim(&a, img, 3).unwrap().iter().zip(&up).map(|(s, g)| s * g).sum()
        };
        let hstep = 1e-6;
        for k in [0usize, 5, 17, 40, 77, 125] {
            let mut p = b.data().to_vec();
            let mut m = b.data().to_vec();
            p[k] += hstep;
            m[k] -= hstep;
            let fd = (f(&Image::from_raw(7, 6, p)) - f(&Image::from_raw(7, 6, m))) / (2.0 * hstep);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "k={k}: {fd} vs {}", grad[k]);
        }
    }
}
