use nalgebra::Vector6;

use crate::error::{Error, Result};
use crate::geometry::{warp_with_jacobian, CameraIntrinsics, DepthMap, Image, Mask, Pose};
use crate::losses::photometric::{photometric_backward, photometric_error};
use crate::losses::ssim::{check_window, window_indices};
use crate::losses::{Aggregation, LossConfig};

/// Warped errors must beat the identity error by more than this to pass the auto-mask, so
/// rounding noise in a static scene does not flip pixels.
pub const AUTOMASK_TIE: f64 = 1e-12;

/// A neighboring frame and the rigid motion from the target camera into it.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub image: &'a Image,
    pub pose_t_to_s: Pose,
}

impl<'a> Neighbor<'a> {
    pub fn new(image: &'a Image, pose_t_to_s: Pose) -> Self {
        Self { image, pose_t_to_s }
    }
}

#[derive(Debug, Clone)]
pub struct ReprojectionOutput {
    pub l_p: f64,
    pub masked_fraction: f64,
    /// ∂l_p/∂depth, row-major.
    pub grad_depth: Vec<f64>,
    /// ∂l_p/∂δ for each neighbor's left pose perturbation.
    pub grad_pose: Vec<Vector6<f64>>,
    /// The binary auto-mask μ that was applied.
    pub automask: Mask,
    /// Pixels whose SSIM window warped validly in at least one neighbor.
    pub warp_valid: Mask,
    /// Number of pixels averaged into `l_p`.
    pub contributing: usize,
}

/// Masked photometric reprojection loss and its gradients.
///
/// Each neighbor is warped into the target view with `depth`; a pixel is usable for a neighbor
/// only when every pixel of its SSIM window warped inside that neighbor. Usable errors are
/// aggregated per `config.aggregate`, then kept where the auto-mask
/// `min_s pe(I_t, I_{s→t}) < min_s pe(I_t, I_s)` holds, and averaged.
pub fn reprojection_loss(
    target: &Image,
    neighbors: &[Neighbor<'_>],
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    config: &LossConfig,
) -> Result<ReprojectionOutput> {
    reprojection_loss_with_mask(target, neighbors, depth, intrinsics, config, None)
}

/// As [`reprojection_loss`], but with `fixed_mask` (when given) used in place of the auto-mask.
///
/// Holding the mask fixed is how the mask is treated during differentiation, which makes this
/// the entry point for finite-difference checks.
pub fn reprojection_loss_with_mask(
    target: &Image,
    neighbors: &[Neighbor<'_>],
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    config: &LossConfig,
    fixed_mask: Option<&Mask>,
) -> Result<ReprojectionOutput> {
    config.validate()?;
    if neighbors.is_empty() {
        return Err(Error::param("reprojection loss needs at least one neighbor frame"));
    }
    let (w, h) = (target.width(), target.height());
    if depth.width() != w || depth.height() != h {
        return Err(Error::param("depth and target image shapes differ"));
    }
    for nb in neighbors {
        if !nb.image.same_shape(target) {
            return Err(Error::param("neighbor image shape differs from target"));
        }
    }
    if let Some(m) = fixed_mask {
        if m.width() != w || m.height() != h {
            return Err(Error::param("fixed mask shape differs from target"));
        }
    }
    check_window(config.ssim_window, w, h)?;
    let n = w * h;
    let window = config.ssim_window;

    let mut warps = Vec::with_capacity(neighbors.len());
    let mut pe_warp = Vec::with_capacity(neighbors.len());
    let mut usable = Vec::with_capacity(neighbors.len());
    let mut pe_ident_min = vec![f64::INFINITY; n];
    let mut idx = Vec::new();
    for nb in neighbors {
        let out = warp_with_jacobian(nb.image, depth, &nb.pose_t_to_s, intrinsics)?;
        let pe = photometric_error(target, &out.image, config.gamma, window)?;
        let valid = out.valid.data();
        let mut ok = vec![false; n];
        for y in 0..h {
            for x in 0..w {
                window_indices(x, y, w, h, window, &mut idx);
                ok[y * w + x] = idx.iter().all(|k| valid[*k]);
            }
        }
        let pe_id = photometric_error(target, nb.image, config.gamma, window)?;
        for (m, v) in pe_ident_min.iter_mut().zip(&pe_id) {
            *m = m.min(*v);
        }
        warps.push(out);
        pe_warp.push(pe);
        usable.push(ok);
    }

    // Per pixel: which neighbors feed the loss, the aggregated value, and μ.
    let mut selected: Vec<Vec<bool>> = vec![vec![false; n]; neighbors.len()];
    let mut aggregated = vec![0.0; n];
    let mut any_usable = vec![false; n];
    let mut automask = vec![false; n];
    for p in 0..n {
        let mut best = f64::INFINITY;
        let mut best_s = None;
        let mut sum = 0.0;
        for s in 0..neighbors.len() {
            if !usable[s][p] {
                continue;
            }
            sum += pe_warp[s][p];
            if pe_warp[s][p] < best {
                best = pe_warp[s][p];
                best_s = Some(s);
            }
        }
        let Some(best_s) = best_s else { continue };
        any_usable[p] = true;
        automask[p] = match fixed_mask {
            Some(m) => m.data()[p],
            None => best < pe_ident_min[p] - AUTOMASK_TIE,
        };
        match config.aggregate {
            Aggregation::Min => {
                aggregated[p] = best;
                selected[best_s][p] = true;
            }
            Aggregation::Sum => {
                aggregated[p] = sum;
                for s in 0..neighbors.len() {
                    selected[s][p] = usable[s][p];
                }
            }
        }
    }

    let n_usable = any_usable.iter().filter(|b| **b).count();
    let contributing: Vec<bool> = (0..n).map(|p| any_usable[p] && automask[p]).collect();
    let n_contrib = contributing.iter().filter(|b| **b).count();
    let masked_fraction = if n_usable == 0 {
        0.0
    } else {
        (n_usable - n_contrib) as f64 / n_usable as f64
    };

    let mut grad_depth = vec![0.0; n];
    let mut grad_pose = vec![Vector6::zeros(); neighbors.len()];
    let l_p = if n_contrib == 0 {
        0.0
    } else {
        let inv = 1.0 / n_contrib as f64;
        let l = (0..n).filter(|p| contributing[*p]).map(|p| aggregated[p]).sum::<f64>() * inv;
        for (s, out) in warps.iter().enumerate() {
            let upstream: Vec<f64> = (0..n)
                .map(|p| if contributing[p] && selected[s][p] { inv } else { 0.0 })
                .collect();
            if upstream.iter().all(|g| *g == 0.0) {
                continue;
            }
            let d_img = photometric_backward(target, &out.image, config.gamma, window, &upstream)?;
            let jac = &out.jacobian;
            for q in 0..n {
                let g = &d_img[q * 3..q * 3 + 3];
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let dd = jac.d_depth[q];
                grad_depth[q] += g[0] * dd[0] + g[1] * dd[1] + g[2] * dd[2];
                let dp = &jac.d_pose[q];
                for a in 0..6 {
                    grad_pose[s][a] += g[0] * dp[0][a] + g[1] * dp[1][a] + g[2] * dp[2][a];
                }
            }
        }
        l
    };

    Ok(ReprojectionOutput {
        l_p,
        masked_fraction,
        grad_depth,
        grad_pose,
        automask: Mask::new(w, h, automask)?,
        warp_valid: Mask::new(w, h, any_usable)?,
        contributing: n_contrib,
    })
}
