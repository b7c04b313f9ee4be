//! ASCII PLY point clouds and pseudo-LiDAR export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::velodyne::save_velodyne_bin;
use crate::error::{Error, Result};
use crate::geometry::{backproject, CameraIntrinsics, DepthMap, Image, PointCloud};

/// A cloud with optional 8-bit color per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

pub fn encode_ply(cloud: &ColoredCloud) -> Result<String> {
    if let Some(c) = &cloud.colors {
        if c.len() != cloud.points.len() {
            return Err(Error::param("color count does not match point count"));
        }
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        // `{}` on f64 prints the shortest representation that round-trips exactly.
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = &cloud.colors {
            let [r, g, b] = c[i];
            let _ = write!(s, " {r} {g} {b}");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_ply(text: &str, path: &Path) -> Result<ColoredCloud> {
    let err = |m: String| Error::format(path, m);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err("missing 'ply' magic line".into())),
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut saw_end = false;
    for (no, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => return Err(err(format!("unsupported PLY format '{other}'"))),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| err(format!("line {}: bad vertex count", no + 1)))?)
            }
            ["element", name, ..] => return Err(err(format!("unsupported element '{name}'"))),
            ["property", _ty, name] => props.push((*name).to_string()),
            ["end_header"] => {
                saw_end = true;
                break;
            }
            _ => return Err(err(format!("line {}: unrecognized header line", no + 1))),
        }
    }
    if !saw_end {
        return Err(err("missing end_header".into()));
    }
    let n = count.ok_or_else(|| err("missing vertex element".into()))?;
    let colored = match props.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "red", "green", "blue"] => true,
        _ => return Err(err(format!("unsupported property layout {props:?}"))),
    };
    let mut points = Vec::with_capacity(n);
    let mut colors = colored.then(|| Vec::with_capacity(n));
    for _ in 0..n {
        let (no, line) = lines
            .next()
            .ok_or_else(|| err(format!("expected {n} vertices, found {}", points.len())))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != props.len() {
            return Err(err(format!("line {}: expected {} values", no + 1, props.len())));
        }
        let f = |i: usize| -> Result<f64> {
            tok[i]
                .parse::<f64>()
                .map_err(|_| err(format!("line {}: bad number '{}'", no + 1, tok[i])))
        };
        points.push(Point3::new(f(0)?, f(1)?, f(2)?));
        if let Some(c) = colors.as_mut() {
            let u = |i: usize| -> Result<u8> {
                tok[i]
                    .parse::<u8>()
                    .map_err(|_| err(format!("line {}: bad color '{}'", no + 1, tok[i])))
            };
            c.push([u(3)?, u(4)?, u(5)?]);
        }
    }
    Ok(ColoredCloud { points, colors })
}

pub fn save_ply(cloud: &ColoredCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ply(cloud)?).map_err(|e| Error::io(path, e))
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<ColoredCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Ply,
    Bin,
}

/// Lifts every valid pixel to 3D. Colors, when given, are quantized to 8 bits.
pub fn pseudolidar(depth: &DepthMap, image: Option<&Image>, intrinsics: &CameraIntrinsics) -> Result<ColoredCloud> {
    if let Some(img) = image {
        if img.width() != depth.width() || img.height() != depth.height() {
            return Err(Error::param("image and depth shapes differ"));
        }
    }
    let xyz = backproject(depth, intrinsics)?;
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut colors = image.map(|_| Vec::with_capacity(depth.valid_count()));
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let (p, valid) = xyz.get(x, y);
            if !valid {
                continue;
            }
            points.push(p);
            if let (Some(c), Some(img)) = (colors.as_mut(), image) {
                let q = img.pixel(x, y).map(|v| (v * 255.0).round() as u8);
                c.push(q);
            }
        }
    }
    Ok(ColoredCloud { points, colors })
}

pub fn export_pseudolidar(
    depth: &DepthMap,
    image: Option<&Image>,
    intrinsics: &CameraIntrinsics,
    path: impl AsRef<Path>,
    format: ExportFormat,
) -> Result<usize> {
    let cloud = pseudolidar(depth, image, intrinsics)?;
    let n = cloud.points.len();
    match format {
        ExportFormat::Ply => save_ply(&cloud, path)?,
        ExportFormat::Bin => save_velodyne_bin(&PointCloud::new(cloud.points)?, path)?,
    }
    Ok(n)
}
