use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, PointCloud};

/// Pinhole intrinsics in pixels.
///
/// Pixel `(u, v)` denotes the sample at exactly integer coordinates `(u, v)`; there is no
/// half-pixel offset anywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) || !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::param(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::param("principal point must be finite"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Intrinsics for the same camera resampled to another resolution.
    ///
    /// Under the integer-sample convention pixel `0` and pixel `n - 1` keep covering the same
    /// rays, so the scale is `(new - 1) / (old - 1)`.
    pub fn rescaled(&self, from: (usize, usize), to: (usize, usize)) -> Result<Self> {
        if from.0 < 2 || from.1 < 2 || to.0 < 2 || to.1 < 2 {
            return Err(Error::param("rescaling needs at least 2 pixels per axis"));
        }
        let sx = (to.0 - 1) as f64 / (from.0 - 1) as f64;
        let sy = (to.1 - 1) as f64 / (from.1 - 1) as f64;
        Self::new(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)
    }

    /// Ray through pixel `(u, v)` scaled so its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Lifts pixel `(u, v)` at depth `d`.
    #[inline]
    pub fn backproject_pixel(&self, u: f64, v: f64, d: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d)
    }

    /// Perspective projection; `None` when the point is not in front of the camera.
    #[inline]
    pub fn project_point(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z > 0.0 {
            Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
        } else {
            None
        }
    }
}

/// Per-pixel 3D positions produced by [`backproject`].
#[derive(Debug, Clone, PartialEq)]
pub struct XyzMap {
    pub width: usize,
    pub height: usize,
    /// `(x, y, z)` per pixel; `(0, 0, 0)` where the depth was invalid.
    pub points: Vec<Point3<f64>>,
    pub valid: Vec<bool>,
}

impl XyzMap {
    pub fn get(&self, x: usize, y: usize) -> (Point3<f64>, bool) {
        let i = y * self.width + x;
        (self.points[i], self.valid[i])
    }

    /// Valid points as a cloud, in row-major pixel order.
    pub fn to_cloud(&self) -> PointCloud {
        let pts = self
            .points
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(p, _)| *p)
            .collect();
        PointCloud::new(pts).expect("backprojected points are finite")
    }
}

/// Lifts every pixel of `depth` to camera-frame 3D coordinates.
pub fn backproject(depth: &DepthMap, intrinsics: &CameraIntrinsics) -> Result<XyzMap> {
    intrinsics.validate()?;
    let (w, h) = (depth.width(), depth.height());
    let mut points = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = depth.get(x, y);
            if d > 0.0 {
                points.push(intrinsics.backproject_pixel(x as f64, y as f64, d));
                valid.push(true);
            } else {
                points.push(Point3::origin());
                valid.push(false);
            }
        }
    }
    Ok(XyzMap {
        width: w,
        height: h,
        points,
        valid,
    })
}

/// Sub-pixel image position of a projected point, plus its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Index of the source point in the input cloud.
    pub index: usize,
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

/// Projects all points with `Z > 0`; the rest are dropped.
pub fn project(points: &PointCloud, intrinsics: &CameraIntrinsics) -> Result<Vec<Projection>> {
    intrinsics.validate()?;
    Ok(points
        .points()
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            intrinsics
                .project_point(p)
                .map(|(u, v)| Projection { index, u, v, z: p.z })
        })
        .collect())
}
