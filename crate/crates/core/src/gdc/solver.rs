//! Jacobi-preconditioned conjugate gradient for symmetric positive (semi-)definite systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` in place, starting from the value of `x`.
///
/// `apply(v, out)` must write `A v` into `out`. `diag` is the diagonal of `A`; entries that
/// are not positive fall back to 1. Stops when `‖r‖ ≤ tol·‖b‖`.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    diag: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let target = tol * b_norm;
    let mut res = dot(&r, &r).sqrt();
    let mut it = 0;
    while res > target {
        if it >= max_iter {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res / b_norm,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Direction in the null space; the residual cannot be reduced further along it.
            return Err(Error::NotConverged {
                iterations: it,
                residual: res / b_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        // Periodically recompute the true residual to avoid drift.
        if it % 50 == 0 {
            apply(x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        res = dot(&r, &r).sqrt();
        if !res.is_finite() {
            return Err(Error::Numerical("conjugate gradient residual became non-finite".into()));
        }
    }
    // Report the true residual.
    apply(x, &mut ax);
    let true_res = b.iter().zip(&ax).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt();
    Ok(CgStats {
        iterations: it,
        relative_residual: true_res / b_norm,
    })
}
