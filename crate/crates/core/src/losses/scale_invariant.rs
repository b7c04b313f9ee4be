use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Mask};

/// `Si` from log differences `d_i`: `(2/n)Σd² − (2/n²)(Σd)²`.
///
/// This is the pairwise mean `(1/n²)Σ_{i,j}(d_i − d_j)²` expanded; the result is clamped at 0
/// against rounding.
pub fn si_closed_form(d: &[f64]) -> f64 {
    let n = d.len() as f64;
    if d.is_empty() {
        return 0.0;
    }
    let s: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|v| v * v).sum();
    (2.0 / n * s2 - 2.0 / (n * n) * s * s).max(0.0)
}

/// Literal `O(n²)` pairwise evaluation of `Si` over predicted and reference depths.
pub fn si_pairwise(y: &[f64], y_star: &[f64]) -> f64 {
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = (y[i].ln() - y[j].ln()) - (y_star[i].ln() - y_star[j].ln());
            acc += t * t;
        }
    }
    acc / (n * n) as f64
}

/// Scale-invariant loss `λ·√(η·Si)` over the `valid` pixels, and its gradient w.r.t. `y`.
///
/// `Si = 0` yields a zero loss and zero gradient.
pub fn scale_invariant_loss(
    y: &DepthMap,
    y_star: &DepthMap,
    valid: &Mask,
    lambda: f64,
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    if !y.same_shape(y_star) || valid.width() != y.width() || valid.height() != y.height() {
        return Err(Error::param("scale-invariant loss inputs differ in shape"));
    }
    if !(lambda >= 0.0) || !(eta >= 0.0) {
        return Err(Error::param("lambda and eta must be >= 0"));
    }
    let idx: Vec<usize> = (0..y.len()).filter(|i| valid.data()[*i]).collect();
    if idx.is_empty() {
        return Err(Error::param("scale-invariant loss needs a nonempty valid mask"));
    }
    let mut d = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (a, b) = (y.data()[i], y_star.data()[i]);
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::param(format!(
                "non-positive depth at valid pixel {i} (pred {a}, reference {b})"
            )));
        }
        d.push(a.ln() - b.ln());
    }
    let si = si_closed_form(&d);
    let mut grad = vec![0.0; y.len()];
    if si <= 0.0 || eta == 0.0 {
        return Ok((0.0, grad));
    }
    let root = (eta * si).sqrt();
    let loss = lambda * root;
    let n = d.len() as f64;
    let sum: f64 = d.iter().sum();
    let dl_dsi = lambda * eta / (2.0 * root);
    for (k, &i) in idx.iter().enumerate() {
        let dsi_dd = 4.0 / n * d[k] - 4.0 / (n * n) * sum;
        grad[i] = dl_dsi * dsi_dd / y.data()[i];
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps() -> (DepthMap, DepthMap) {
        let y = DepthMap::from_fn(5, 4, |x, yy| 1.0 + 0.4 * x as f64 + 0.2 * (yy * x) as f64).unwrap();
        let ys = DepthMap::from_fn(5, 4, |x, yy| 2.0 + 0.1 * (x * x) as f64 + 0.3 * yy as f64).unwrap();
        (y, ys)
    }

    #[test]
    fn identical_inputs_give_zero() {
        let (y, _) = maps();
        let (l, g) = scale_invariant_loss(&y, &y, &Mask::all(5, 4, true), 1.0, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn global_scale_gives_zero() {
        let (_, ys) = maps();
        let y = ys.scaled(2.5).unwrap();
        let (l, _) = scale_invariant_loss(&y, &ys, &Mask::all(5, 4, true), 1.0, 1.0).unwrap();
        assert!(l < 1e-7, "{l}");
    }

    #[test]
    fn closed_form_matches_pairwise() {
        let (y, ys) = maps();
        let d: Vec<f64> = y.data().iter().zip(ys.data()).map(|(a, b)| a.ln() - b.ln()).collect();
        let a = si_closed_form(&d);
        let b = si_pairwise(y.data(), ys.data());
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn invalid_inputs() {
        let (y, ys) = maps();
        assert!(scale_invariant_loss(&y, &ys, &Mask::all(5, 4, false), 1.0, 1.0).is_err());
        let zero = DepthMap::from_fn(5, 4, |x, _| if x == 0 { 0.0 } else { 1.0 }).unwrap();
        assert!(scale_invariant_loss(&zero, &ys, &Mask::all(5, 4, true), 1.0, 1.0).is_err());
        // The zero lies outside the mask, so it is fine.
        let m = Mask::new(5, 4, (0..20).map(|i| i % 5 != 0).collect()).unwrap();
        assert!(scale_invariant_loss(&zero, &ys, &m, 1.0, 1.0).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (y, ys) = maps();
        let m = Mask::new(5, 4, (0..20).map(|i| i % 3 != 0).collect()).unwrap();
        let (_, g) = scale_invariant_loss(&y, &ys, &m, 0.7, 1.3).unwrap();
        for i in 0..20 {
            let h = 1e-6 * y.data()[i];
            let mut p = y.data().to_vec();
            let mut q = y.data().to_vec();
            p[i] += h;
            q[i] -= h;
            let lp = scale_invariant_loss(&DepthMap::new(5, 4, p).unwrap(), &ys, &m, 0.7, 1.3).unwrap().0;
            let lm = scale_invariant_loss(&DepthMap::new(5, 4, q).unwrap(), &ys, &m, 0.7, 1.3).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1e-6 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }
}
