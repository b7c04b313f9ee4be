//! KITTI velodyne scans: little-endian `f32` quadruples `(x, y, z, reflectance)`.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

const RECORD: usize = 16;

/// Parses a scan from bytes; `path` is only used in error messages.
pub fn parse_velodyne(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(RECORD) {
        let offset = bytes.len() - bytes.len() % RECORD;
        return Err(Error::format(
            path,
            format!(
                "truncated record at byte offset {offset} (file length {} is not a multiple of 16)",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut refl = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]]);
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::format(
                path,
                format!("non-finite coordinate in record at byte offset {}", i * RECORD),
            ));
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        refl.push(r);
    }
    PointCloud::new(points)?.with_reflectance(refl)
}

/// Loads a scan. Points stay in the LiDAR frame.
pub fn load_velodyne_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_velodyne(&bytes, path)
}

/// Encodes a cloud as velodyne records; missing reflectance is written as 0.
pub fn encode_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (i, p) in cloud.points().iter().enumerate() {
        let r = cloud.reflectance().map_or(0.0, |r| r[i]);
        for v in [p.x as f32, p.y as f32, p.z as f32, r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_velodyne_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_velodyne(cloud)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_velodyne(&bytes, Path::new("mem")).unwrap();
        assert_eq!(c.points(), &[Point3::new(1.0, 2.0, 3.0)]);
        assert_eq!(c.reflectance().unwrap(), &[0.5]);
    }

    #[test]
    fn empty_file() {
        assert!(parse_velodyne(&[], Path::new("mem")).unwrap().is_empty());
    }

    #[test]
    fn truncated_reports_offset() {
        let err = parse_velodyne(&[0u8; 37], Path::new("scan.bin")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("offset 32") && msg.contains("scan.bin"), "{msg}");
    }

    #[test]
    fn bytes_round_trip() {
        let mut bytes = Vec::new();
        for v in [1.5f32, -2.25, 30.125, 0.75, 0.1, 0.2, 0.3, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_velodyne(&bytes, Path::new("mem")).unwrap();
        assert_eq!(encode_velodyne(&c), bytes);
    }
}
