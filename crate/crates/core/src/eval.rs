//! Depth-quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Smallest depth a prediction is clamped to before evaluation.
pub const MIN_DEPTH: f64 = 1e-3;
pub const DEFAULT_CAP: f64 = 80.0;

/// Pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Evaluation crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Crop {
    #[default]
    None,
    /// The customary Eigen-split crop: rows `[0.40810811·H, 0.99189189·H)`,
    /// columns `[0.03594771·W, 0.96405229·W)`.
    Eigen,
    Rect(Rect),
}

impl Crop {
    pub fn rect(&self, width: usize, height: usize) -> Rect {
        match self {
            Crop::None => Rect {
                x0: 0,
                y0: 0,
                x1: width,
                y1: height,
            },
            Crop::Eigen => {
                let (w, h) = (width as f64, height as f64);
                Rect {
                    x0: (0.035_947_71 * w) as usize,
                    y0: (0.408_108_11 * h) as usize,
                    x1: (0.964_052_29 * w) as usize,
                    y1: (0.991_891_89 * h) as usize,
                }
            }
            Crop::Rect(r) => Rect {
                x0: r.x0.min(width),
                y0: r.y0.min(height),
                x1: r.x1.min(width),
                y1: r.y1.min(height),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    /// Meters.
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Millimeters.
    pub rmse_mm: f64,
    /// RMSE of inverse depth in 1/km.
    pub irmse: f64,
    /// MAE of inverse depth in 1/km.
    pub imae: f64,
    pub n_valid: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str =
        "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,rmse_mm,irmse,imae,n_valid";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
            self.rmse_mm,
            self.irmse,
            self.imae,
            self.n_valid
        )
    }
}

/// Metrics over pixels with `0 < gt ≤ cap` inside `crop`.
///
/// Predictions are clamped to `[MIN_DEPTH, cap]` first. Threshold accuracies use the strict
/// test `max(p/g, g/p) < 1.25^k`.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, cap: f64, crop: Crop) -> Result<MetricReport> {
    if !pred.same_shape(gt) {
        return Err(Error::param(format!(
            "prediction {}x{} and ground truth {}x{} differ",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if !(cap > MIN_DEPTH) {
        return Err(Error::param(format!("depth cap {cap} too small")));
    }
    let rect = crop.rect(gt.width(), gt.height());
    let mut pairs = Vec::new();
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let g = gt.get(x, y);
            if g > 0.0 && g <= cap {
                pairs.push((pred.get(x, y).clamp(MIN_DEPTH, cap), g));
            }
        }
    }
    metrics_from_pairs(&pairs)
}

/// Metrics of `(prediction, ground truth)` pairs, both positive.
pub fn metrics_from_pairs(pairs: &[(f64, f64)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::param("no valid ground-truth pixels to evaluate"));
    }
    let n = pairs.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    let (mut isq, mut iabs) = (0.0, 0.0);
    let t1 = 1.25;
    let t2 = 1.25 * 1.25;
    let t3 = 1.25 * 1.25 * 1.25;
    for &(p, g) in pairs {
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        d1 += (ratio < t1) as usize;
        d2 += (ratio < t2) as usize;
        d3 += (ratio < t3) as usize;
        let inv = 1000.0 / p - 1000.0 / g;
        isq += inv * inv;
        iabs += inv.abs();
    }
    let rmse = (sq / n).sqrt();
    Ok(MetricReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse,
        rmse_log: (sq_log / n).sqrt(),
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        delta3: d3 as f64 / n,
        rmse_mm: rmse * 1000.0,
        irmse: (isq / n).sqrt(),
        imae: iabs / n,
        n_valid: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> DepthMap {
        DepthMap::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = row(&[1.0, 5.0, 20.0]);
        let m = depth_metrics(&g, &g, 80.0, Crop::None).unwrap();
        assert_eq!((m.abs_rel, m.sq_rel, m.rmse, m.rmse_log), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
        assert_eq!(m.n_valid, 3);
    }

    #[test]
    fn threshold_is_strict() {
        let g = row(&[2.0, 4.0, 8.0]);
        let p = row(&[2.5, 5.0, 10.0]);
        let m = depth_metrics(&p, &g, 80.0, Crop::None).unwrap();
        assert_eq!(m.delta1, 0.0);
        assert_eq!((m.delta2, m.delta3), (1.0, 1.0));
        assert_eq!(m.abs_rel, 0.25);
    }

    #[test]
    fn cap_and_invalid_are_skipped() {
        let g = row(&[0.0, 90.0, 4.0]);
        let p = row(&[3.0, 3.0, 4.0]);
        let m = depth_metrics(&p, &g, 80.0, Crop::None).unwrap();
        assert_eq!(m.n_valid, 1);
        assert!(depth_metrics(&p, &row(&[0.0, 0.0, 0.0]), 80.0, Crop::None).is_err());
    }

    #[test]
    fn eigen_crop_rectangle() {
        let r = Crop::Eigen.rect(1242, 375);
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (44, 153, 1197, 371));
    }

    #[test]
    fn shape_mismatch() {
        assert!(depth_metrics(&row(&[1.0]), &row(&[1.0, 2.0]), 80.0, Crop::None).is_err());
    }
}
