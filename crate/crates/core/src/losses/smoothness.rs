use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Image};

/// Edge-aware smoothness of mean-normalized inverse depth.
///
/// With `d* = (1/z) / mean(1/z)` the loss is
/// `mean_x(|∂x d*|·exp(−|∂x I|)) + mean_y(|∂y d*|·exp(−|∂y I|))`, where `∂` are forward
/// differences and `|∂I|` is the channel mean of the absolute image difference. Each mean is
/// taken over the pixels where its forward difference exists. Returns the loss and its
/// gradient with respect to `depth`.
pub fn smoothness_loss(depth: &DepthMap, image: &Image) -> Result<(f64, Vec<f64>)> {
    let (w, h) = (depth.width(), depth.height());
    if image.width() != w || image.height() != h {
        return Err(Error::param("depth and image shapes differ"));
    }
    let z = depth.data();
    if let Some(i) = z.iter().position(|d| *d <= 0.0) {
        return Err(Error::param(format!(
            "smoothness loss needs positive depth everywhere (pixel {} has {})",
            i, z[i]
        )));
    }
    let n = w * h;
    let inv: Vec<f64> = z.iter().map(|d| 1.0 / d).collect();
    let mean_inv = inv.iter().sum::<f64>() / n as f64;
    let dstar: Vec<f64> = inv.iter().map(|v| v / mean_inv).collect();
    let img = image.data();
    let edge = |a: usize, b: usize| -> f64 {
        let g = (0..3).map(|c| (img[a * 3 + c] - img[b * 3 + c]).abs()).sum::<f64>() / 3.0;
        (-g).exp()
    };

    let mut loss = 0.0;
    let mut g_star = vec![0.0; n];
    let mut accumulate = |pairs: &mut dyn Iterator<Item = (usize, usize)>, count: usize| {
        if count == 0 {
            return;
        }
        let scale = 1.0 / count as f64;
        for (a, b) in pairs {
            let e = edge(a, b) * scale;
            let diff = dstar[b] - dstar[a];
            loss += diff.abs() * e;
            let s = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            g_star[b] += s * e;
            g_star[a] -= s * e;
        }
    };
    let mut xs = (0..h).flat_map(|y| (0..w.saturating_sub(1)).map(move |x| (y * w + x, y * w + x + 1)));
    accumulate(&mut xs, h * w.saturating_sub(1));
    let mut ys = (0..h.saturating_sub(1)).flat_map(|y| (0..w).map(move |x| (y * w + x, (y + 1) * w + x)));
    accumulate(&mut ys, h.saturating_sub(1) * w);

    // d*_j = inv_j / m with m = mean(inv): ∂L/∂inv_i = g_i/m − Σ_j g_j inv_j / (n m²).
    let coupling = g_star.iter().zip(&inv).map(|(g, v)| g * v).sum::<f64>() / (n as f64 * mean_inv * mean_inv);
    let grad = (0..n)
        .map(|i| {
            let d_inv = g_star[i] / mean_inv - coupling;
            -d_inv * inv[i] * inv[i]
        })
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Image {
        Image::from_fn(6, 5, |x, y| {
            let t = (x * 3 + y * 5) as f64;
            [0.5 + 0.4 * (t * 0.3).sin(), 0.4, 0.5 + 0.3 * (t * 0.7).cos()]
        })
        .unwrap()
    }

    #[test]
    fn constant_depth_is_zero() {
        let (l, g) = smoothness_loss(&DepthMap::filled(6, 5, 7.0).unwrap(), &image()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invariant_to_depth_scale() {
        let d = DepthMap::from_fn(6, 5, |x, y| 2.0 + 0.3 * x as f64 + 0.1 * (y * y) as f64).unwrap();
        let (a, _) = smoothness_loss(&d, &image()).unwrap();
        let (b, _) = smoothness_loss(&d.scaled(3.7).unwrap(), &image()).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
        assert!(a > 0.0);
    }

    #[test]
    fn zero_depth_is_an_error() {
        let d = DepthMap::from_fn(6, 5, |x, _| if x == 3 { 0.0 } else { 1.0 }).unwrap();
        assert!(smoothness_loss(&d, &image()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = DepthMap::from_fn(6, 5, |x, y| 2.0 + ((x * 7 + y * 3) % 5) as f64 * 0.37).unwrap();
        let img = image();
        let (_, g) = smoothness_loss(&d, &img).unwrap();
        for i in 0..30 {
            let h = 1e-6 * d.data()[i];
            let mut p = d.data().to_vec();
            let mut m = d.data().to_vec();
            p[i] += h;
            m[i] -= h;
            let lp = smoothness_loss(&DepthMap::new(6, 5, p).unwrap(), &img).unwrap().0;
            let lm = smoothness_loss(&DepthMap::new(6, 5, m).unwrap(), &img).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1e-3 + fd.abs()), "pixel {i}: {fd} vs {}", g[i]);
        }
    }
}
