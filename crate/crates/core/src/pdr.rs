//! Pseudo-dense representation (PDR) of sparse LiDAR.
//!
//! Every LiDAR point is projected into the image and dilated into a disc of radius `R`
//! pixels. Inside the disc the depth channel takes the point's depth and the confidence channel
//! falls off as `min(1, 1/r)` with the distance `r` to the projected center. Pixels covered by
//! several discs hold the arithmetic mean of the depth contributions and, separately, of the
//! confidence contributions.

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, DepthMap, PointCloud};

/// Reference radius at the reference width.
pub const DEFAULT_RADIUS: f64 = 4.0;
pub const DEFAULT_RADIUS_WIDTH: usize = 640;

/// Default dilation radius for an image `width` pixels wide (4 px at 640, proportional).
pub fn default_radius(width: usize) -> f64 {
    (DEFAULT_RADIUS * width as f64 / DEFAULT_RADIUS_WIDTH as f64).max(1.0)
}

/// Two-channel pseudo-dense image: depth (meters) and confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdr {
    pub depth: DepthMap,
    pub confidence: Vec<f64>,
}

impl Pdr {
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    #[inline]
    pub fn confidence_at(&self, x: usize, y: usize) -> f64 {
        self.confidence[y * self.width() + x]
    }

    /// Fraction of pixels with a nonzero depth channel.
    pub fn density(&self) -> f64 {
        let n = self.depth.len();
        if n == 0 {
            0.0
        } else {
            self.depth.valid_count() as f64 / n as f64
        }
    }
}

/// Confidence of a pixel at distance `r` from a disc center.
#[inline]
pub fn confidence(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else {
        1.0 / r
    }
}

/// Nearest integer pixel of a sub-pixel position, if it lies in the image.
#[inline]
fn nearest_pixel(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (u.round(), v.round());
    if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
        Some((x as usize, y as usize))
    } else {
        None
    }
}

/// Builds the PDR of `points` (camera frame) for a `width`×`height` image.
///
/// Points behind the camera or whose nearest pixel is outside the image are dropped before
/// dilation; discs are clipped at the border. Accumulation is a per-pixel sum in point order
/// followed by a single division, so the result does not depend on how pixels are visited.
pub fn generate_pdr(
    points: &PointCloud,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    radius: f64,
) -> Result<Pdr> {
    if !(radius >= 1.0) || !radius.is_finite() {
        return Err(Error::param(format!("PDR radius must be >= 1 (got {radius})")));
    }
    let projections = project(points, intrinsics)?;
    let n = width * height;
    let mut depth_sum = vec![0.0; n];
    let mut conf_sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    let reach = radius.ceil() as i64;

    for p in projections {
        if nearest_pixel(p.u, p.v, width, height).is_none() {
            continue;
        }
        let (cu, cv) = (p.u.round() as i64, p.v.round() as i64);
        let x_lo = (cu - reach).max(0);
        let x_hi = (cu + reach).min(width as i64 - 1);
        let y_lo = (cv - reach).max(0);
        let y_hi = (cv + reach).min(height as i64 - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let r = ((p.u - x as f64).powi(2) + (p.v - y as f64).powi(2)).sqrt();
                if r < radius {
                    let i = y as usize * width + x as usize;
                    depth_sum[i] += p.z;
                    conf_sum[i] += confidence(r);
                    count[i] += 1;
                }
            }
        }
    }

    let mut depth = depth_sum;
    for i in 0..n {
        if count[i] > 0 {
            let c = count[i] as f64;
            depth[i] /= c;
            conf_sum[i] /= c;
        }
    }
    Ok(Pdr {
        depth: DepthMap::new(width, height, depth)?,
        confidence: conf_sum,
    })
}

/// Fraction of pixels hit by at least one projected point, without dilation.
pub fn coverage_fraction(
    points: &PointCloud,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<f64> {
    let n = width * height;
    if n == 0 {
        return Ok(0.0);
    }
    let mut hit = vec![false; n];
    for p in project(points, intrinsics)? {
        if let Some((x, y)) = nearest_pixel(p.u, p.v, width, height) {
            hit[y * width + x] = true;
        }
    }
    Ok(hit.iter().filter(|h| **h).count() as f64 / n as f64)
}

/// Number of elevation bins used when a cloud carries no beam index.
pub const ELEVATION_BINS: usize = 64;

/// Elevation angle of a camera-frame point (radians, positive up).
fn elevation(p: &nalgebra::Point3<f64>) -> f64 {
    (-p.y).atan2(p.x.hypot(p.z))
}

/// Indices of `keep` bins spread evenly over `0..bins`.
pub fn evenly_spaced_bins(bins: usize, keep: usize) -> Vec<usize> {
    if keep == 1 {
        return vec![(bins - 1) / 2];
    }
    (0..keep)
        .map(|i| ((i * (bins - 1)) as f64 / (keep - 1) as f64).round() as usize)
        .collect()
}

/// Simulates a sparser scanner by keeping `keep` evenly spaced beams.
///
/// With a stored beam index the available beams are `0..=max_index`. Otherwise points are
/// binned by elevation into [`ELEVATION_BINS`] equal bins between the lowest and highest
/// elevation, bin 0 being the highest.
pub fn subsample_beams(points: &PointCloud, keep: usize) -> Result<PointCloud> {
    if keep == 0 {
        return Err(Error::param("must keep at least one beam"));
    }
    if points.is_empty() {
        return Ok(points.clone());
    }
    let bin_of: Vec<usize> = match points.beams() {
        Some(beams) => beams.iter().map(|b| *b as usize).collect(),
        None => {
            let elev: Vec<f64> = points.points().iter().map(elevation).collect();
            let lo = elev.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = elev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            elev.iter()
                .map(|e| {
                    if span <= 0.0 {
                        0
                    } else {
                        let t = (hi - e) / span * ELEVATION_BINS as f64;
                        (t.floor() as usize).min(ELEVATION_BINS - 1)
                    }
                })
                .collect()
        }
    };
    let bins = match points.beams() {
        Some(_) => bin_of.iter().max().map_or(0, |m| m + 1),
        None => ELEVATION_BINS,
    };
    if keep > bins {
        return Err(Error::param(format!(
            "cannot keep {keep} beams out of {bins} available"
        )));
    }
    let mut selected = vec![false; bins];
    for b in evenly_spaced_bins(bins, keep) {
        selected[b] = true;
    }
    Ok(points.filter_indexed(|i| selected[bin_of[i]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 10.0, 10.0).unwrap()
    }

    fn at_pixel(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Point3<f64> {
        k.backproject_pixel(u, v, z)
    }

    #[test]
    fn unit_radius_touches_only_center() {
        let k = k();
        let cloud = PointCloud::new(vec![at_pixel(10.0, 10.0, 7.0, &k)]).unwrap();
        let pdr = generate_pdr(&cloud, &k, 20, 20, 1.0).unwrap();
        assert_eq!(pdr.depth.valid_count(), 1);
        assert_eq!(pdr.depth.get(10, 10), 7.0);
        assert_eq!(pdr.confidence_at(10, 10), 1.0);
    }

    #[test]
    fn disc_confidence_values() {
        let k = k();
        let cloud = PointCloud::new(vec![at_pixel(10.0, 10.0, 7.0, &k)]).unwrap();
        let pdr = generate_pdr(&cloud, &k, 20, 20, 2.5).unwrap();
        assert_eq!(pdr.confidence_at(11, 10), 1.0);
        assert!((pdr.confidence_at(12, 11) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(pdr.depth.get(12, 11), 7.0);
        // r = 2.83 >= 2.5
        assert_eq!(pdr.depth.get(12, 12), 0.0);
        assert_eq!(pdr.confidence_at(12, 12), 0.0);
        // 21 integer offsets with |o| < 2.5
        assert_eq!(pdr.depth.valid_count(), 21);
    }

    #[test]
    fn overlapping_discs_average() {
        let k = k();
        let cloud = PointCloud::new(vec![
            at_pixel(8.0, 10.0, 4.0, &k),
            at_pixel(12.0, 10.0, 6.0, &k),
        ])
        .unwrap();
        let pdr = generate_pdr(&cloud, &k, 20, 20, 2.5).unwrap();
        assert_eq!(pdr.depth.get(10, 10), 5.0);
        assert_eq!(pdr.confidence_at(10, 10), 0.5);
        assert_eq!(pdr.depth.get(8, 10), 4.0);
    }

    #[test]
    fn rejects_small_radius() {
        let cloud = PointCloud::default();
        assert!(generate_pdr(&cloud, &k(), 4, 4, 0.5).is_err());
        assert!(generate_pdr(&cloud, &k(), 4, 4, 0.0).is_err());
        assert!(generate_pdr(&cloud, &k(), 4, 4, f64::NAN).is_err());
    }

    #[test]
    fn out_of_image_points_are_dropped() {
        let k = k();
        let cloud = PointCloud::new(vec![at_pixel(-1.0, 5.0, 3.0, &k)]).unwrap();
        let pdr = generate_pdr(&cloud, &k, 20, 20, 3.0).unwrap();
        assert_eq!(pdr.depth.valid_count(), 0);
    }

    #[test]
    fn coverage_edge_cases() {
        let k = k();
        assert_eq!(coverage_fraction(&PointCloud::default(), &k, 8, 8).unwrap(), 0.0);
        let mut pts = Vec::new();
        for y in 0..4 {
            for x in 0..5 {
                pts.push(at_pixel(x as f64, y as f64, 2.0, &k));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        assert_eq!(coverage_fraction(&cloud, &k, 5, 4).unwrap(), 1.0);
    }

    fn ring_cloud(rings: usize, per_ring: usize) -> PointCloud {
        let mut pts = Vec::new();
        let mut beams = Vec::new();
        for r in 0..rings {
            let elev = (2.0 - 0.4 * r as f64).to_radians();
            for a in 0..per_ring {
                let az = (a as f64 / per_ring as f64 - 0.5) * 1.2;
                let dir = Point3::new(az.sin() * elev.cos(), -elev.sin(), az.cos() * elev.cos());
                pts.push(Point3::from(dir.coords * 10.0));
                beams.push(r as u16);
            }
        }
        PointCloud::new(pts).unwrap().with_beams(beams).unwrap()
    }

    #[test]
    fn keep_all_beams_is_identity() {
        let cloud = ring_cloud(64, 10);
        assert_eq!(subsample_beams(&cloud, 64).unwrap(), cloud);
    }

    #[test]
    fn four_of_sixty_four() {
        assert_eq!(evenly_spaced_bins(64, 4), vec![0, 21, 42, 63]);
        let cloud = ring_cloud(64, 100);
        let sub = subsample_beams(&cloud, 4).unwrap();
        assert_eq!(sub.len(), 400);
        let mut rings: Vec<u16> = sub.beams().unwrap().to_vec();
        rings.dedup();
        assert_eq!(rings, vec![0, 21, 42, 63]);
    }

    #[test]
    fn elevation_binning_without_beam_index() {
        let with = ring_cloud(64, 20);
        let without = PointCloud::new(with.points().to_vec()).unwrap();
        // Equal-width elevation bins line up with the equally spaced rings.
        let a = subsample_beams(&with, 4).unwrap();
        let b = subsample_beams(&without, 4).unwrap();
        assert_eq!(a.points(), b.points());
        let one = subsample_beams(&without, 1).unwrap();
        let e0 = elevation(&one.points()[0]);
        assert!(one.points().iter().all(|p| (elevation(p) - e0).abs() < 0.4f64.to_radians()));
        assert_eq!(one.len(), 20);
    }

    #[test]
    fn too_many_beams_is_an_error() {
        assert!(subsample_beams(&ring_cloud(8, 4), 9).is_err());
        assert!(subsample_beams(&ring_cloud(8, 4), 0).is_err());
        let without = PointCloud::new(ring_cloud(8, 4).points().to_vec()).unwrap();
        assert!(subsample_beams(&without, 65).is_err());
    }
}
