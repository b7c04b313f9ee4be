use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Unordered 3D points with optional per-point attributes.
///
/// Coordinates are meters. After [`PointCloud::transformed`] with a LiDAR-to-camera pose the
/// frame is the camera frame: X right, Y down, Z forward.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    reflectance: Option<Vec<f32>>,
    beam: Option<Vec<u16>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::param(format!("non-finite point {p}")));
        }
        Ok(Self {
            points,
            reflectance: None,
            beam: None,
        })
    }

    pub fn with_reflectance(mut self, reflectance: Vec<f32>) -> Result<Self> {
        if reflectance.len() != self.points.len() {
            return Err(Error::param("reflectance length differs from point count"));
        }
        self.reflectance = Some(reflectance);
        Ok(self)
    }

    pub fn with_beams(mut self, beam: Vec<u16>) -> Result<Self> {
        if beam.len() != self.points.len() {
            return Err(Error::param("beam index length differs from point count"));
        }
        self.beam = Some(beam);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn reflectance(&self) -> Option<&[f32]> {
        self.reflectance.as_deref()
    }

    pub fn beams(&self) -> Option<&[u16]> {
        self.beam.as_deref()
    }

    /// Applies `pose` to every point; attributes are carried along.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            reflectance: self.reflectance.clone(),
            beam: self.beam.clone(),
        }
    }

    /// Keeps the points whose index satisfies `keep`, preserving order and attributes.
    pub fn filter_indexed(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.points.len()).filter(|i| keep(*i)).collect();
        PointCloud {
            points: idx.iter().map(|i| self.points[*i]).collect(),
            reflectance: self
                .reflectance
                .as_ref()
                .map(|r| idx.iter().map(|i| r[*i]).collect()),
            beam: self.beam.as_ref().map(|b| idx.iter().map(|i| b[*i]).collect()),
        }
    }

    pub fn push(&mut self, p: Point3<f64>) {
        self.points.push(p);
        if let Some(r) = self.reflectance.as_mut() {
            r.push(0.0);
        }
        self.beam = None;
    }
}
