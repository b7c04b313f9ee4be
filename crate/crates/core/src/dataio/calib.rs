//! KITTI object-benchmark calibration files.
//!
//! Each line is `KEY: v1 v2 ...`. Required keys are `P2` (3x4 projection of the left color
//! camera), `R0_rect` (3x3 rectifying rotation) and `Tr_velo_to_cam` (3x4 LiDAR to reference
//! camera). A point in the LiDAR frame maps into the camera-2 frame as
//! `X_cam = R0·(R_tr·X + t_tr) + K⁻¹·P2[:, 3]`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    /// Rectified LiDAR-to-camera transform (re-orthonormalized).
    pub velo_to_cam: Pose,
}

fn row<'a>(rows: &'a HashMap<String, Vec<f64>>, key: &str, n: usize, path: &Path) -> Result<&'a [f64]> {
    let v = rows
        .get(key)
        .ok_or_else(|| Error::format(path, format!("missing key {key}")))?;
    if v.len() != n {
        return Err(Error::format(
            path,
            format!("row {key} has {} values, expected {n}", v.len()),
        ));
    }
    Ok(v)
}

pub fn parse_calib(text: &str, path: &Path) -> Result<Calibration> {
    let mut rows = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, values)) = line.split_once(':') else {
            return Err(Error::format(path, format!("line {}: missing ':'", lineno + 1)));
        };
        let parsed: std::result::Result<Vec<f64>, _> = values.split_whitespace().map(str::parse::<f64>).collect();
        let parsed = parsed.map_err(|e| {
            Error::format(path, format!("row {}: {e}", key.trim()))
        })?;
        rows.insert(key.trim().to_string(), parsed);
    }
    let p2 = row(&rows, "P2", 12, path)?;
    let r0 = row(&rows, "R0_rect", 9, path)?;
    let tr = row(&rows, "Tr_velo_to_cam", 12, path)?;

    let intrinsics = CameraIntrinsics::new(p2[0], p2[5], p2[2], p2[6])
        .map_err(|e| Error::format(path, format!("row P2: {e}")))?;
    let k_inv = intrinsics
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::format(path, "row P2: singular intrinsics"))?;
    let t2 = k_inv * Vector3::new(p2[3], p2[7], p2[11]);
    let r0 = Matrix3::from_row_slice(r0);
    let r_tr = Matrix3::new(tr[0], tr[1], tr[2], tr[4], tr[5], tr[6], tr[8], tr[9], tr[10]);
    let t_tr = Vector3::new(tr[3], tr[7], tr[11]);
    let rotation = r0 * r_tr;
    let translation = r0 * t_tr + t2;
    let velo_to_cam = Pose::from_matrix_orthonormalized(rotation, translation)
        .map_err(|e| Error::format(path, format!("rows R0_rect/Tr_velo_to_cam: {e}")))?;
    Ok(Calibration {
        intrinsics,
        velo_to_cam,
    })
}

pub fn load_calib(path: impl AsRef<Path>) -> Result<Calibration> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calib(&text, path)
}

/// Writes a calibration file with `P2 = K [I | 0]`, identity `R0_rect` and the given
/// LiDAR-to-camera transform.
pub fn format_calib(intrinsics: &CameraIntrinsics, velo_to_cam: &Pose) -> String {
    let k = intrinsics;
    let r = velo_to_cam.rotation().matrix();
    let t = velo_to_cam.translation();
    let p2 = [k.fx, 0.0, k.cx, 0.0, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0];
    let tr = [
        r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
        r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
        r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
    ];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        fmt(&p2),
        fmt(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        fmt(&tr)
    )
}
