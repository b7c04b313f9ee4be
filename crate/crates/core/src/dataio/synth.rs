//! Analytic synthetic scenes: exact depth, consistent solid texture across views, and
//! ray-cast LiDAR returns on a configurable beam pattern.
//!
//! Frame poses map world points into the camera frame (`X_c = R X_w + t`). The LiDAR is
//! co-located with the camera; its points are returned in the camera frame with beam
//! indices, beam 0 being the highest elevation.

use nalgebra::{Point3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, Image, PointCloud, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// World plane `z = depth`.
    FrontoParallel { depth: f64 },
    /// World plane through `point` with normal `normal`.
    Slanted { point: [f64; 3], normal: [f64; 3] },
    /// Background plane `z = background_depth` plus two axis-aligned boxes `[min, max]`.
    TwoBox {
        background_depth: f64,
        boxes: [[[f64; 3]; 2]; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    pub seed: u64,
    pub octaves: u32,
    /// Wavelength of the coarsest octave, meters.
    pub base_wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePose {
    /// Axis-angle rotation, radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl FramePose {
    pub fn to_pose(&self) -> Pose {
        Pose::from_axis_angle(Vector3::from(self.rotation), Vector3::from(self.translation))
    }

    pub fn from_pose(p: &Pose) -> Self {
        let v = p.to_vector();
        Self {
            rotation: [v[3], v[4], v[5]],
            translation: [v[0], v[1], v[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarPattern {
    pub beams: u16,
    pub elevation_max_deg: f64,
    pub elevation_min_deg: f64,
    pub azimuth_step_deg: f64,
    /// Half-width of the azimuth sweep around the optical axis, degrees.
    pub azimuth_half_range_deg: f64,
    pub max_range: f64,
}

impl LidarPattern {
    /// A 64-beam pattern resembling the HDL-64E: +2° to −24.8°, 0.08° azimuth step.
    pub fn hdl64() -> Self {
        Self {
            beams: 64,
            elevation_max_deg: 2.0,
            elevation_min_deg: -24.8,
            azimuth_step_deg: 0.08,
            azimuth_half_range_deg: 60.0,
            max_range: 120.0,
        }
    }

    pub fn elevation_deg(&self, beam: u16) -> f64 {
        if self.beams == 1 {
            return self.elevation_max_deg;
        }
        let t = beam as f64 / (self.beams - 1) as f64;
        self.elevation_max_deg + t * (self.elevation_min_deg - self.elevation_max_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub layout: Layout,
    pub texture: TextureSpec,
    pub frames: Vec<FramePose>,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    pub lidar: LidarPattern,
}

impl SceneSpec {
    /// 64×64 textured fronto-parallel plane at 8 m seen from three cameras on a horizontal
    /// baseline; the outer frames are offset so the plane shifts by exactly 2 px.
    pub fn textured_plane() -> Self {
        let fx = 60.0;
        let depth = 8.0;
        let baseline = 2.0 * depth / fx;
        let frame = |x: f64| FramePose {
            rotation: [0.0; 3],
            translation: [-x, 0.0, 0.0],
        };
        Self {
            layout: Layout::FrontoParallel { depth },
            texture: TextureSpec {
                seed: 7,
                octaves: 3,
                base_wavelength: 1.6,
            },
            frames: vec![frame(-baseline), frame(0.0), frame(baseline)],
            intrinsics: CameraIntrinsics {
                fx,
                fy: fx,
                cx: 31.5,
                cy: 31.5,
            },
            width: 64,
            height: 64,
            lidar: LidarPattern {
                beams: 16,
                elevation_max_deg: 25.0,
                elevation_min_deg: -25.0,
                azimuth_step_deg: 0.5,
                azimuth_half_range_deg: 40.0,
                max_range: 120.0,
            },
        }
    }

    /// Relative pose taking frame `from` camera coordinates to frame `to` camera coordinates.
    pub fn relative_pose(&self, from: usize, to: usize) -> Result<Pose> {
        let get = |i: usize| {
            self.frames
                .get(i)
                .map(FramePose::to_pose)
                .ok_or_else(|| Error::param(format!("frame {i} out of range ({} frames)", self.frames.len())))
        };
        Ok(get(to)?.compose(&get(from)?.inverse()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    dir: Vector3<f64>,
    freq: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    Plane { normal: Vector3<f64>, offset: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
}

impl Surface {
    /// Ray parameter of the first hit with `s > 0`.
    fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Plane { normal, offset } => {
                let den = normal.dot(dir);
                if den == 0.0 {
                    return None;
                }
                let s = (offset - normal.dot(origin)) / den;
                (s > 0.0).then_some(s)
            }
            Surface::Box { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut lo, mut hi) = ((min[a] - origin[a]) / dir[a], (max[a] - origin[a]) / dir[a]);
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    t0 = t0.max(lo);
                    t1 = t1.min(hi);
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
        }
    }
}

/// One rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    pub depth: DepthMap,
    pub lidar: PointCloud,
}

/// A validated scene with its texture realized.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    surfaces: Vec<Surface>,
    waves: [Vec<Wave>; 3],
}

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.intrinsics.validate()?;
        if spec.width < 2 || spec.height < 2 {
            return Err(Error::param("scene image must be at least 2×2"));
        }
        if spec.frames.is_empty() {
            return Err(Error::param("scene needs at least one frame"));
        }
        if spec.frames.iter().any(|f| !finite3(&f.rotation) || !finite3(&f.translation)) {
            return Err(Error::param("frame poses must be finite"));
        }
        let t = &spec.texture;
        if t.octaves == 0 || !(t.base_wavelength > 0.0 && t.base_wavelength.is_finite()) {
            return Err(Error::param("texture needs ≥1 octave and a positive wavelength"));
        }
        let l = &spec.lidar;
        if l.beams == 0
            || !(l.azimuth_step_deg > 0.0)
            || !(l.max_range > 0.0)
            || !(l.azimuth_half_range_deg >= 0.0)
            || !l.elevation_max_deg.is_finite()
            || !l.elevation_min_deg.is_finite()
        {
            return Err(Error::param("invalid LiDAR beam pattern"));
        }
        let surfaces = match &spec.layout {
            Layout::FrontoParallel { depth } => {
                if !(depth.is_finite()) {
                    return Err(Error::param("plane depth must be finite"));
                }
                vec![Surface::Plane {
                    normal: Vector3::z(),
                    offset: *depth,
                }]
            }
            Layout::Slanted { point, normal } => {
                let n = Vector3::from(*normal);
                if !finite3(point) || !(n.norm() > 0.0) || !n.norm().is_finite() {
                    return Err(Error::param("slanted plane needs a finite point and nonzero normal"));
                }
                let n = n.normalize();
                vec![Surface::Plane {
                    normal: n,
                    offset: n.dot(&Vector3::from(*point)),
                }]
            }
            Layout::TwoBox {
                background_depth,
                boxes,
            } => {
                if !background_depth.is_finite() {
                    return Err(Error::param("background depth must be finite"));
                }
                let mut s = vec![Surface::Plane {
                    normal: Vector3::z(),
                    offset: *background_depth,
                }];
                for (i, b) in boxes.iter().enumerate() {
                    let (min, max) = (Vector3::from(b[0]), Vector3::from(b[1]));
                    if !finite3(&b[0]) || !finite3(&b[1]) || (0..3).any(|a| min[a] >= max[a]) {
                        return Err(Error::param(format!("box {i} must have min < max on every axis")));
                    }
                    s.push(Surface::Box { min, max });
                }
                s
            }
        };
        for (fi, f) in spec.frames.iter().enumerate() {
            let c = camera_center(&f.to_pose());
            for s in &surfaces {
                match s {
                    Surface::Box { min, max } if (0..3).all(|a| c[a] >= min[a] && c[a] <= max[a]) => {
                        return Err(Error::param(format!("camera of frame {fi} is inside a box")));
                    }
                    Surface::Plane { normal, offset } if (normal.dot(&c) - offset).abs() < 1e-9 => {
                        return Err(Error::param(format!("camera of frame {fi} lies on a plane")));
                    }
                    _ => {}
                }
            }
        }
        let waves = make_waves(t);
        Ok(Self { spec, surfaces, waves })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    fn frame_pose(&self, frame: usize) -> Result<Pose> {
        self.spec
            .frames
            .get(frame)
            .map(FramePose::to_pose)
            .ok_or_else(|| Error::param(format!("frame {frame} out of range ({} frames)", self.spec.frames.len())))
    }

    /// Nearest hit along the world ray; returns the parameter and the world point.
    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let s = self
            .surfaces
            .iter()
            .filter_map(|surf| surf.hit(origin, dir))
            .fold(f64::INFINITY, f64::min);
        s.is_finite().then(|| (s, origin + dir * s))
    }

    /// Exact camera-frame depth at a continuous pixel position.
    pub fn depth_at(&self, frame: usize, u: f64, v: f64) -> Result<Option<f64>> {
        let pose = self.frame_pose(frame)?;
        let origin = camera_center(&pose);
        let ray_c = self.spec.intrinsics.ray(u, v);
        let dir = pose.rotation().inverse() * ray_c;
        // The camera-frame ray has unit z, so the ray parameter is the depth.
        Ok(self.cast(&origin, &dir).map(|(s, _)| s))
    }

    pub fn color_at(&self, world: &Vector3<f64>) -> [f64; 3] {
        let mut out = [0.5; 3];
        for (c, waves) in self.waves.iter().enumerate() {
            for w in waves {
                out[c] += w.amp * (w.freq * w.dir.dot(world) + w.phase).sin();
            }
            out[c] = out[c].clamp(0.0, 1.0);
        }
        out
    }

    pub fn render(&self, frame: usize) -> Result<RenderedFrame> {
        let pose = self.frame_pose(frame)?;
        let (w, h) = (self.spec.width, self.spec.height);
        let origin = camera_center(&pose);
        let r_inv = pose.rotation().inverse();
        let mut depth = vec![0.0; w * h];
        let mut data = vec![0.0; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let dir = r_inv * self.spec.intrinsics.ray(x as f64, y as f64);
                if let Some((s, p)) = self.cast(&origin, &dir) {
                    let i = y * w + x;
                    depth[i] = s;
                    data[3 * i..3 * i + 3].copy_from_slice(&self.color_at(&p));
                }
            }
        }
        let lidar = self.lidar(&pose, &origin, &r_inv)?;
        Ok(RenderedFrame {
            image: Image::new(w, h, data)?,
            depth: DepthMap::new(w, h, depth)?,
            lidar,
        })
    }

    fn lidar(&self, pose: &Pose, origin: &Vector3<f64>, r_inv: &nalgebra::Rotation3<f64>) -> Result<PointCloud> {
        let l = &self.spec.lidar;
        let steps = (l.azimuth_half_range_deg / l.azimuth_step_deg).floor() as i64;
        let mut points = Vec::new();
        let mut beams = Vec::new();
        for b in 0..l.beams {
            let e = l.elevation_deg(b).to_radians();
            for k in -steps..=steps {
                let a = (k as f64 * l.azimuth_step_deg).to_radians();
                // Camera axes: X right, Y down, Z forward; elevation is positive upward.
                let d_c = Vector3::new(e.cos() * a.sin(), -e.sin(), e.cos() * a.cos());
                let dir = r_inv * d_c;
                if let Some((s, p)) = self.cast(origin, &dir) {
                    if s <= l.max_range {
                        points.push(pose.transform_point(&Point3::from(p)));
                        beams.push(b);
                    }
                }
            }
        }
        PointCloud::new(points)?.with_beams(beams)
    }
}

fn camera_center(pose: &Pose) -> Vector3<f64> {
    -(pose.rotation().inverse() * pose.translation())
}

fn make_waves(t: &TextureSpec) -> [Vec<Wave>; 3] {
    const PER_OCTAVE: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let weights: Vec<f64> = (0..t.octaves).map(|o| 0.5f64.powi(o as i32)).collect();
    let total: f64 = weights.iter().sum::<f64>() * PER_OCTAVE as f64;
    // Amplitudes sum to 0.45 per channel, keeping intensities inside [0.05, 0.95].
    let scale = 0.45 / total;
    let mut out: [Vec<Wave>; 3] = Default::default();
    for channel in out.iter_mut() {
        for (o, wgt) in weights.iter().enumerate() {
            let wavelength = t.base_wavelength / 2f64.powi(o as i32);
            for _ in 0..PER_OCTAVE {
                let dir = loop {
                    let v = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 0.1 && n <= 1.0 {
                        break v / n;
                    }
                };
                channel.push(Wave {
                    dir,
                    freq: std::f64::consts::TAU / wavelength,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amp: wgt * scale,
                });
            }
        }
    }
    out
}

/// Renders one frame of a scene.
pub fn render_scene(spec: &SceneSpec, frame: usize) -> Result<RenderedFrame> {
    Scene::new(spec.clone())?.render(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronto_parallel_depth_is_constant() {
        let mut spec = SceneSpec::textured_plane();
        spec.layout = Layout::FrontoParallel { depth: 10.0 };
        let f = render_scene(&spec, 1).unwrap();
        assert!(f.depth.data().iter().all(|d| *d == 10.0));
    }

    #[test]
    fn slanted_plane_matches_closed_form() {
        let mut spec = SceneSpec::textured_plane();
        let n = Vector3::new(0.0, -0.3, 1.0).normalize();
        spec.layout = Layout::Slanted {
            point: [0.0, 0.0, 6.0],
            normal: [n.x, n.y, n.z],
        };
        spec.frames = vec![FramePose::from_pose(&Pose::identity())];
        let f = render_scene(&spec, 0).unwrap();
        let k = spec.intrinsics;
        let c = n.dot(&Vector3::new(0.0, 0.0, 6.0));
        for y in 0..spec.height {
            for x in 0..spec.width {
                let z = c / n.dot(&k.ray(x as f64, y as f64));
                assert!((f.depth.get(x, y) - z).abs() <= 1e-9 * z);
            }
        }
    }

    #[test]
    fn lidar_points_lie_on_surfaces() {
        let mut spec = SceneSpec::textured_plane();
        spec.layout = Layout::TwoBox {
            background_depth: 12.0,
            boxes: [
                [[-2.0, -1.0, 5.0], [-0.5, 1.0, 6.0]],
                [[0.5, -0.5, 7.0], [2.0, 1.5, 8.0]],
            ],
        };
        let scene = Scene::new(spec.clone()).unwrap();
        let f = scene.render(1).unwrap();
        assert!(!f.lidar.is_empty());
        let mut checked = 0;
        for p in f.lidar.points() {
            let Some((u, v)) = spec.intrinsics.project_point(p) else { continue };
            if let Some(d) = scene.depth_at(1, u, v).unwrap() {
                assert!((d - p.z).abs() <= 1e-6, "{d} vs {}", p.z);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn camera_inside_box_is_rejected() {
        let mut spec = SceneSpec::textured_plane();
        spec.layout = Layout::TwoBox {
            background_depth: 12.0,
            boxes: [[[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], [[3.0, 3.0, 3.0], [4.0, 4.0, 4.0]]],
        };
        assert!(Scene::new(spec).is_err());
    }

    #[test]
    fn deterministic_render() {
        let spec = SceneSpec::textured_plane();
        assert_eq!(render_scene(&spec, 0).unwrap(), render_scene(&spec, 0).unwrap());
    }

    #[test]
    fn views_are_consistent_by_integer_shift() {
        let spec = SceneSpec::textured_plane();
        let scene = Scene::new(spec).unwrap();
        let a = scene.render(1).unwrap().image;
        let b = scene.render(2).unwrap().image;
        // Frame 2 sits 2 px to the right, so content moves 2 px left.
        for y in 0..64 {
            for x in 2..64 {
                let (p, q) = (a.pixel(x, y), b.pixel(x - 2, y));
                for c in 0..3 {
                    assert!((p[c] - q[c]).abs() < 1e-12);
                }
            }
        }
    }
}
