use crate::error::{Error, Result};
use crate::geometry::Image;
use crate::losses::ssim::{check_pair, ssim, ssim_backward};

/// `pe = (γ/2)(1 − SSIM(a, b)) + (1 − γ)·mean_c |a − b|`, per pixel.
pub fn photometric_error(a: &Image, b: &Image, gamma: f64, window: usize) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_pair(a, b)?;
    let s = if gamma != 0.0 {
        ssim(a, b, window)?
    } else {
        vec![1.0; a.width() * a.height()]
    };
    Ok(s.iter()
        .enumerate()
        .map(|(i, s)| {
            let l1 = (0..3)
                .map(|c| (a.data()[i * 3 + c] - b.data()[i * 3 + c]).abs())
                .sum::<f64>()
                / 3.0;
            0.5 * gamma * (1.0 - s) + (1.0 - gamma) * l1
        })
        .collect())
}

/// `∂L/∂b` for `L = Σ_p upstream[p]·pe(p)`.
///
/// The L1 term uses `sign(0) = 0`.
pub fn photometric_backward(
    a: &Image,
    b: &Image,
    gamma: f64,
    window: usize,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_pair(a, b)?;
    let mut grad = if gamma != 0.0 {
        let up: Vec<f64> = upstream.iter().map(|g| -0.5 * gamma * g).collect();
        ssim_backward(a, b, window, &up)?
    } else {
        vec![0.0; a.data().len()]
    };
    if gamma != 1.0 {
        for (i, g) in upstream.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            for c in 0..3 {
                let k = i * 3 + c;
                let diff = b.data()[k] - a.data()[k];
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                grad[k] += g * (1.0 - gamma) * sign / 3.0;
            }
        }
    }
    Ok(grad)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param(format!("gamma must lie in [0, 1] (got {gamma})")));
    }
    Ok(())
}
