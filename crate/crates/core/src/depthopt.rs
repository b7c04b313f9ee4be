//! Direct per-pixel depth optimization on an image triplet.
//!
//! Depth is parameterized as `d_min + (d_max − d_min)·sigmoid(θ)` and `θ` is updated with a
//! momentum/adaptive-scaling first-order method on the total loss. Neighbor poses are either
//! held fixed or optimized jointly through left perturbations.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Image, PointCloud, Pose};
use crate::losses::{total_loss, Distillation, LossConfig, LossInputs, LossReport, Neighbor};
use crate::pdr::Pdr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Step size on the depth parameters.
    pub step: f64,
    /// Step size on the pose tangent vectors (joint mode only).
    pub pose_step: f64,
    pub momentum: f64,
    /// Decay of the squared-gradient average.
    pub beta2: f64,
    pub epsilon: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Depth used everywhere when neither an initial map nor a PDR is given.
    pub default_depth: f64,
    /// PDR pixels above this confidence seed the initialization.
    pub seed_confidence: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 1e-2,
            pose_step: 1e-3,
            momentum: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            d_min: 0.1,
            d_max: 100.0,
            default_depth: 10.0,
            seed_confidence: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations must be >= 1"));
        }
        if !(self.d_min > 0.0 && self.d_max > self.d_min && self.d_max.is_finite()) {
            return Err(Error::param("depth bounds must satisfy 0 < d_min < d_max < inf"));
        }
        for (name, v) in [("step", self.step), ("pose_step", self.pose_step), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive (got {v})")));
            }
        }
        for (name, v) in [("momentum", self.momentum), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::param(format!("{name} must lie in [0, 1) (got {v})")));
            }
        }
        if !(self.default_depth > self.d_min && self.default_depth < self.d_max) {
            return Err(Error::param("default_depth must lie inside (d_min, d_max)"));
        }
        Ok(())
    }
}

/// Neighbor poses: fixed, or starting values for joint optimization.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseMode {
    Known(Vec<Pose>),
    Joint(Vec<Pose>),
}

impl PoseMode {
    fn poses(&self) -> &[Pose] {
        match self {
            PoseMode::Known(p) | PoseMode::Joint(p) => p,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeInputs<'a> {
    pub target: &'a Image,
    pub neighbors: Vec<&'a Image>,
    /// Target-to-neighbor poses, one per neighbor.
    pub poses: PoseMode,
    pub intrinsics: CameraIntrinsics,
    pub pdr: Option<&'a Pdr>,
    /// Reference for the scale-invariant term; its zero pixels are excluded.
    pub enhanced: Option<&'a DepthMap>,
    /// Explicit initialization; takes precedence over PDR seeding.
    pub init: Option<&'a DepthMap>,
}

/// Everything needed to resume or inspect an optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeState {
    pub width: usize,
    pub height: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub depth_param: Vec<f64>,
    /// Current neighbor poses as `(t, axis-angle)` vectors (joint mode only).
    pub pose_param: Option<Vec<Vector6<f64>>>,
    /// Loss evaluated at the start of each iteration.
    pub history: Vec<LossReport>,
}

impl OptimizeState {
    pub fn depth(&self) -> Result<DepthMap> {
        let range = self.d_max - self.d_min;
        DepthMap::new(
            self.width,
            self.height,
            self.depth_param.iter().map(|t| self.d_min + range * sigmoid(*t)).collect(),
        )
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn encode(d: f64, d_min: f64, d_max: f64) -> f64 {
    // Keep the parameter finite when d sits on a bound.
    let s = ((d - d_min) / (d_max - d_min)).clamp(1e-9, 1.0 - 1e-9);
    (s / (1.0 - s)).ln()
}

/// Initial depth: explicit map, else PDR seeds (harmonic mean elsewhere), else a constant.
pub fn initial_depth(inputs: &OptimizeInputs<'_>, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    let (w, h) = (inputs.target.width(), inputs.target.height());
    if let Some(init) = inputs.init {
        if init.width() != w || init.height() != h {
            return Err(Error::param("initial depth shape differs from the target image"));
        }
        return Ok(init
            .data()
            .iter()
            .map(|d| if *d > 0.0 { *d } else { cfg.default_depth })
            .collect());
    }
    if let Some(pdr) = inputs.pdr {
        if pdr.width() != w || pdr.height() != h {
            return Err(Error::param("PDR shape differs from the target image"));
        }
        let seeded: Vec<bool> = pdr
            .confidence
            .iter()
            .zip(pdr.depth.data())
            .map(|(c, d)| *c > cfg.seed_confidence && *d > 0.0)
            .collect();
        let (count, inv_sum) = seeded
            .iter()
            .zip(pdr.depth.data())
            .filter(|(s, _)| **s)
            .fold((0usize, 0.0), |(n, acc), (_, d)| (n + 1, acc + 1.0 / d));
        if count > 0 {
            let harmonic = count as f64 / inv_sum;
            return Ok(seeded
                .iter()
                .zip(pdr.depth.data())
                .map(|(s, d)| if *s { *d } else { harmonic })
                .collect());
        }
    }
    Ok(vec![cfg.default_depth; w * h])
}

/// Runs the optimizer and returns the final depth and trace.
pub fn optimize_depth(
    inputs: &OptimizeInputs<'_>,
    loss: &LossConfig,
    cfg: &OptimizerConfig,
) -> Result<(DepthMap, OptimizeState)> {
    loss.validate()?;
    cfg.validate()?;
    let (w, h) = (inputs.target.width(), inputs.target.height());
    if inputs.neighbors.iter().any(|n| !n.same_shape(inputs.target)) {
        return Err(Error::param("all frames must share one shape"));
    }
    if inputs.poses.poses().len() != inputs.neighbors.len() {
        return Err(Error::param(format!(
            "{} poses given for {} neighbor frames",
            inputs.poses.poses().len(),
            inputs.neighbors.len()
        )));
    }
    let enhanced_mask = match inputs.enhanced {
        Some(e) if e.width() != w || e.height() != h => {
            return Err(Error::param("enhanced depth shape differs from the target image"))
        }
        Some(e) => Some(e.valid_mask()),
        None => None,
    };
    let joint = matches!(inputs.poses, PoseMode::Joint(_));
    let mut poses: Vec<Pose> = inputs.poses.poses().to_vec();

    let mut state = OptimizeState {
        width: w,
        height: h,
        d_min: cfg.d_min,
        d_max: cfg.d_max,
        depth_param: initial_depth(inputs, cfg)?
            .iter()
            .map(|d| encode(*d, cfg.d_min, cfg.d_max))
            .collect(),
        pose_param: joint.then(|| poses.iter().map(Pose::to_vector).collect()),
        history: Vec::with_capacity(cfg.iterations),
    };
    let n = w * h;
    let range = cfg.d_max - cfg.d_min;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut pm = vec![Vector6::<f64>::zeros(); poses.len()];
    let mut pv = vec![Vector6::<f64>::zeros(); poses.len()];

    for it in 0..cfg.iterations {
        let depth = state.depth()?;
        let neighbors: Vec<Neighbor<'_>> = inputs
            .neighbors
            .iter()
            .zip(&poses)
            .map(|(img, p)| Neighbor::new(img, *p))
            .collect();
        let distillation = match (inputs.enhanced, enhanced_mask.as_ref()) {
            (Some(enhanced), Some(valid)) => Some(Distillation { enhanced, valid }),
            _ => None,
        };
        let li = LossInputs {
            target: inputs.target,
            neighbors: &neighbors,
            depth: &depth,
            intrinsics: &inputs.intrinsics,
            distillation,
            fixed_mask: None,
        };
        let out = match total_loss(&li, loss) {
            Ok(o) => o,
            Err(e) if e.is_numerical() => return Err(diverged(it, state)),
            Err(e) => return Err(e),
        };
        let finite = out.report.total.is_finite()
            && out.grad_depth.iter().all(|g| g.is_finite())
            && out.grad_pose.iter().all(|g| g.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(diverged(it, state));
        }
        state.history.push(out.report);

        let t = (it + 1) as i32;
        let bc1 = 1.0 - cfg.momentum.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..n {
            let s = sigmoid(state.depth_param[i]);
            let g = out.grad_depth[i] * range * s * (1.0 - s);
            m[i] = cfg.momentum * m[i] + (1.0 - cfg.momentum) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            state.depth_param[i] -= cfg.step * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
        }
        if joint {
            for (k, pose) in poses.iter_mut().enumerate() {
                let g = out.grad_pose[k];
                pm[k] = pm[k] * cfg.momentum + g * (1.0 - cfg.momentum);
                pv[k] = pv[k] * cfg.beta2 + g.component_mul(&g) * (1.0 - cfg.beta2);
                let delta = Vector6::from_fn(|j, _| {
                    -cfg.pose_step * (pm[k][j] / bc1) / ((pv[k][j] / bc2).sqrt() + cfg.epsilon)
                });
                *pose = pose.perturbed(&delta);
            }
            state.pose_param = Some(poses.iter().map(Pose::to_vector).collect());
        }
    }
    Ok((state.depth()?, state))
}

fn diverged(iteration: usize, state: OptimizeState) -> Error {
    Error::Diverged {
        iteration,
        last: Box::new(state),
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Multiplies `pred` by `median(reference) / median(pred)` over pixels valid in both.
pub fn median_scale(pred: &DepthMap, reference: &DepthMap) -> Result<DepthMap> {
    if !pred.same_shape(reference) {
        return Err(Error::param("prediction and reference shapes differ"));
    }
    let (mut p, mut r): (Vec<f64>, Vec<f64>) = pred
        .data()
        .iter()
        .zip(reference.data())
        .filter(|(p, r)| **p > 0.0 && **r > 0.0)
        .map(|(p, r)| (*p, *r))
        .unzip();
    if p.is_empty() {
        return Err(Error::param("prediction and reference have no valid pixel in common"));
    }
    pred.scaled(median(&mut r) / median(&mut p))
}

/// As [`median_scale`] with a point cloud reference, each point compared with the prediction
/// at its nearest pixel.
pub fn median_scale_to_points(pred: &DepthMap, points: &PointCloud, intrinsics: &CameraIntrinsics) -> Result<DepthMap> {
    let mut p = Vec::new();
    let mut r = Vec::new();
    for proj in crate::geometry::project(points, intrinsics)? {
        let (x, y) = (proj.u.round(), proj.v.round());
        if x < 0.0 || y < 0.0 || x >= pred.width() as f64 || y >= pred.height() as f64 {
            continue;
        }
        let d = pred.get(x as usize, y as usize);
        if d > 0.0 {
            p.push(d);
            r.push(proj.z);
        }
    }
    if p.is_empty() {
        return Err(Error::param("no LiDAR point lands on a valid predicted pixel"));
    }
    pred.scaled(median(&mut r) / median(&mut p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_round_trip() {
        for d in [0.2, 1.0, 8.0, 50.0, 99.0] {
            let t = encode(d, 0.1, 100.0);
            assert!((0.1 + 99.9 * sigmoid(t) - d).abs() < 1e-10);
        }
    }

    #[test]
    fn median_scale_examples() {
        let r = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = r.scaled(2.0).unwrap();
        let out = median_scale(&p, &r).unwrap();
        for (a, b) in out.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(median_scale(&r, &r).unwrap(), r);
    }

    #[test]
    fn median_scale_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = DepthMap::from_fn(7, 5, |_, _| rng.random_range(0.5..50.0)).unwrap();
            let r = DepthMap::from_fn(7, 5, |_, _| rng.random_range(0.5..50.0)).unwrap();
            let out = median_scale(&p, &r).unwrap();
            let mo = median(&mut out.data().to_vec());
            let mr = median(&mut r.data().to_vec());
            assert!((mo - mr).abs() <= 1e-12 * mr);
        }
    }

    #[test]
    fn median_scale_empty_overlap() {
        let p = DepthMap::zeros(2, 2);
        let r = DepthMap::filled(2, 2, 1.0).unwrap();
        assert!(median_scale(&p, &r).is_err());
    }

    #[test]
    fn pdr_seeding_uses_harmonic_mean() {
        let depth = DepthMap::new(3, 1, vec![2.0, 0.0, 6.0]).unwrap();
        let pdr = Pdr {
            depth,
            confidence: vec![1.0, 0.0, 0.8],
        };
        let img = Image::filled(3, 1, [0.5; 3]).unwrap();
        let inputs = OptimizeInputs {
            target: &img,
            neighbors: vec![],
            poses: PoseMode::Known(vec![]),
            intrinsics: CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0).unwrap(),
            pdr: Some(&pdr),
            enhanced: None,
            init: None,
        };
        let d = initial_depth(&inputs, &OptimizerConfig::default()).unwrap();
        assert_eq!(d, vec![2.0, 3.0, 6.0]);
    }

    #[test]
    fn rejects_zero_iterations() {
        let cfg = OptimizerConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
