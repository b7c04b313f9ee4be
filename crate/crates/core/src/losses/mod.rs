//! Self-supervised objective: photometric reprojection with auto-masking, edge-aware
//! smoothness, and the scale-invariant distillation term. Every loss comes with its analytic
//! gradient with respect to the depth map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod photometric;
mod reprojection;
mod scale_invariant;
mod smoothness;
pub mod ssim;
mod total;
mod upsample;

pub use photometric::{photometric_backward, photometric_error};
pub use reprojection::{reprojection_loss, reprojection_loss_with_mask, Neighbor, ReprojectionOutput};
pub use scale_invariant::{scale_invariant_loss, si_closed_form, si_pairwise};
pub use smoothness::smoothness_loss;
pub use ssim::{ssim, ssim_backward};
pub use total::{total_loss, Distillation, LossInputs, TotalLoss};
pub use upsample::upsample_prediction;

/// How per-neighbor photometric errors are combined at a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Per-pixel minimum over neighbors.
    #[default]
    Min,
    /// Per-pixel sum over neighbors.
    Sum,
}

/// Loss weights and settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// SSIM / L1 mixing weight of the photometric error.
    pub gamma: f64,
    /// Weight of the reprojection term.
    pub alpha: f64,
    /// Weight of the scale-invariant term.
    pub beta: f64,
    /// Outer weight of the scale-invariant loss.
    pub lambda: f64,
    /// Inner scale of the scale-invariant loss.
    pub eta: f64,
    pub smoothness_weight: f64,
    pub ssim_window: usize,
    pub aggregate: Aggregation,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.85,
            alpha: 1.0,
            beta: 0.05,
            lambda: 1.0,
            eta: 1.0,
            smoothness_weight: 1e-3,
            ssim_window: 3,
            aggregate: Aggregation::Min,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1] (got {})", self.gamma)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("smoothness_weight", self.smoothness_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be a finite value >= 0 (got {v})")));
            }
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(Error::param(format!(
                "ssim_window must be odd and >= 3 (got {})",
                self.ssim_window
            )));
        }
        Ok(())
    }
}

/// Scalar breakdown of the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// `l_p + smoothness_weight · l_smooth`
    pub l_re: f64,
    /// Masked photometric term.
    pub l_p: f64,
    pub l_smooth: f64,
    pub l_si: f64,
    /// Fraction of warp-valid pixels removed by the auto-mask.
    pub masked_fraction: f64,
}
