//! Inverse warping of a source view into the target view using target depth and relative pose.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::sample::bilinear;
use crate::geometry::{CameraIntrinsics, DepthMap, Image, Mask, Pose};

/// Derivatives of the warped intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpJacobian {
    pub width: usize,
    pub height: usize,
    /// ∂I_warped(p)/∂depth(p) per channel. Each warped pixel depends only on its own depth.
    pub d_depth: Vec<[f64; 3]>,
    /// ∂I_warped(p)/∂δ per channel, for the left tangent perturbation `δ = (δt, ω)` of the pose
    /// (see [`Pose::perturbed`]).
    pub d_pose: Vec<[[f64; 6]; 3]>,
}

/// Warped image, validity mask and derivatives in one pass.
#[derive(Debug, Clone)]
pub struct WarpOutput {
    pub image: Image,
    pub valid: Mask,
    pub jacobian: WarpJacobian,
}

fn check_shapes(src: &Image, depth: &DepthMap, k: &CameraIntrinsics) -> Result<()> {
    k.validate()?;
    if src.width() != depth.width() || src.height() != depth.height() {
        return Err(Error::param(format!(
            "source image {}x{} and depth {}x{} differ",
            src.width(),
            src.height(),
            depth.width(),
            depth.height()
        )));
    }
    Ok(())
}

/// Reconstructs the target view `I_{s→t}` by sampling `src` where each target pixel lands.
///
/// `pose_t_to_s` maps target-camera coordinates into the source camera. Pixels with no depth,
/// pixels landing behind the source camera, and pixels whose bilinear footprint leaves the
/// image are marked invalid.
pub fn warp_image(
    src: &Image,
    depth_t: &DepthMap,
    pose_t_to_s: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<(Image, Mask)> {
    let out = warp(src, depth_t, pose_t_to_s, intrinsics, false)?;
    Ok((out.image, out.valid))
}

/// Analytic derivatives of [`warp_image`] with respect to depth and pose.
pub fn warp_jacobian(
    src: &Image,
    depth_t: &DepthMap,
    pose_t_to_s: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<WarpJacobian> {
    Ok(warp(src, depth_t, pose_t_to_s, intrinsics, true)?.jacobian)
}

/// Warp plus derivatives.
pub fn warp_with_jacobian(
    src: &Image,
    depth_t: &DepthMap,
    pose_t_to_s: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<WarpOutput> {
    warp(src, depth_t, pose_t_to_s, intrinsics, true)
}

fn warp(
    src: &Image,
    depth: &DepthMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    with_jacobian: bool,
) -> Result<WarpOutput> {
    check_shapes(src, depth, k)?;
    let (w, h) = (depth.width(), depth.height());
    let n = w * h;
    let mut data = vec![0.0; n * 3];
    let mut valid = vec![false; n];
    let (mut d_depth, mut d_pose) = if with_jacobian {
        (vec![[0.0; 3]; n], vec![[[0.0; 6]; 3]; n])
    } else {
        (Vec::new(), Vec::new())
    };
    let rot = pose.rotation();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = depth.get(x, y);
            if d <= 0.0 {
                continue;
            }
            let ray = k.ray(x as f64, y as f64);
            let q: Point3<f64> = pose.transform_point(&Point3::from(ray * d));
            if q.z <= 0.0 {
                continue;
            }
            let inv_z = 1.0 / q.z;
            let us = k.fx * q.x * inv_z + k.cx;
            let vs = k.fy * q.y * inv_z + k.cy;
            let s = bilinear(src, us, vs);
            data[i * 3..i * 3 + 3].copy_from_slice(&s.value);
            if !s.valid {
                continue;
            }
            valid[i] = true;
            if !with_jacobian {
                continue;
            }
            // ∂(u, v)/∂Q
            let du_dq = Vector3::new(k.fx * inv_z, 0.0, -k.fx * q.x * inv_z * inv_z);
            let dv_dq = Vector3::new(0.0, k.fy * inv_z, -k.fy * q.y * inv_z * inv_z);
            let dq_dd = rot * ray;
            let du_dd = du_dq.dot(&dq_dd);
            let dv_dd = dv_dq.dot(&dq_dd);
            // ∂Q/∂δt = I; ∂Q/∂ω_j = e_j × Q
            let dq_dw = [
                Vector3::new(0.0, -q.z, q.y),
                Vector3::new(q.z, 0.0, -q.x),
                Vector3::new(-q.y, q.x, 0.0),
            ];
            let mut du_dp = [0.0; 6];
            let mut dv_dp = [0.0; 6];
            for a in 0..3 {
                du_dp[a] = du_dq[a];
                dv_dp[a] = dv_dq[a];
                du_dp[3 + a] = du_dq.dot(&dq_dw[a]);
                dv_dp[3 + a] = dv_dq.dot(&dq_dw[a]);
            }
            for c in 0..3 {
                d_depth[i][c] = s.dx[c] * du_dd + s.dy[c] * dv_dd;
                for a in 0..6 {
                    d_pose[i][c][a] = s.dx[c] * du_dp[a] + s.dy[c] * dv_dp[a];
                }
            }
        }
    }

    Ok(WarpOutput {
        image: Image::from_raw(w, h, data),
        valid: Mask::new(w, h, valid)?,
        jacobian: WarpJacobian {
            width: w,
            height: h,
            d_depth,
            d_pose,
        },
    })
}
