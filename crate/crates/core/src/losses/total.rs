use nalgebra::Vector6;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Image, Mask};
use crate::losses::reprojection::{reprojection_loss_with_mask, Neighbor};
use crate::losses::scale_invariant::scale_invariant_loss;
use crate::losses::smoothness::smoothness_loss;
use crate::losses::{LossConfig, LossReport};

/// Reference depth for the scale-invariant term and the pixels where it applies.
#[derive(Debug, Clone, Copy)]
pub struct Distillation<'a> {
    pub enhanced: &'a DepthMap,
    pub valid: &'a Mask,
}

#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub target: &'a Image,
    pub neighbors: &'a [Neighbor<'a>],
    pub depth: &'a DepthMap,
    pub intrinsics: &'a CameraIntrinsics,
    pub distillation: Option<Distillation<'a>>,
    /// Overrides the auto-mask when set.
    pub fixed_mask: Option<&'a Mask>,
}

#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub report: LossReport,
    pub grad_depth: Vec<f64>,
    /// Gradient for each neighbor's left pose perturbation.
    pub grad_pose: Vec<Vector6<f64>>,
    pub automask: Option<Mask>,
}

/// `α·(l_p + smoothness_weight·l_smooth) + β·l_si` and its gradients.
///
/// The reprojection and smoothness terms are skipped when `α = 0` and no neighbors are given;
/// the scale-invariant term is zero without a distillation target.
pub fn total_loss(inputs: &LossInputs<'_>, config: &LossConfig) -> Result<TotalLoss> {
    config.validate()?;
    let depth = inputs.depth;
    let n = depth.len();
    let mut report = LossReport::default();
    let mut grad = vec![0.0; n];
    let mut grad_pose = vec![Vector6::zeros(); inputs.neighbors.len()];
    let mut automask = None;

    if config.alpha != 0.0 || !inputs.neighbors.is_empty() {
        let rep = reprojection_loss_with_mask(
            inputs.target,
            inputs.neighbors,
            depth,
            inputs.intrinsics,
            config,
            inputs.fixed_mask,
        )?;
        let (l_smooth, g_smooth) = smoothness_loss(depth, inputs.target)?;
        report.l_p = rep.l_p;
        report.masked_fraction = rep.masked_fraction;
        report.l_smooth = l_smooth;
        report.l_re = rep.l_p + config.smoothness_weight * l_smooth;
        for i in 0..n {
            grad[i] = config.alpha * (rep.grad_depth[i] + config.smoothness_weight * g_smooth[i]);
        }
        for (gp, rp) in grad_pose.iter_mut().zip(&rep.grad_pose) {
            *gp = rp * config.alpha;
        }
        automask = Some(rep.automask);
    }

    if let Some(dist) = inputs.distillation {
        if !dist.enhanced.same_shape(depth) {
            return Err(Error::param("distillation target shape differs from depth"));
        }
        let (l_si, g_si) = scale_invariant_loss(depth, dist.enhanced, dist.valid, config.lambda, config.eta)?;
        report.l_si = l_si;
        for i in 0..n {
            grad[i] += config.beta * g_si[i];
        }
    }

    report.total = config.alpha * report.l_re + config.beta * report.l_si;
    if !report.total.is_finite() {
        return Err(Error::Numerical(format!("total loss is {}", report.total)));
    }
    Ok(TotalLoss {
        report,
        grad_depth: grad,
        grad_pose,
        automask,
    })
}
