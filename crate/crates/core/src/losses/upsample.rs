use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Bilinear upsampling of a low-resolution prediction to `target_w`×`target_h`.
///
/// Corner samples map onto corner samples (`x_src = x·(w−1)/(W−1)`), consistent with the
/// integer-sample pixel convention, so affine depth ramps are reproduced exactly.
pub fn upsample_prediction(depth: &DepthMap, target_w: usize, target_h: usize) -> Result<DepthMap> {
    let (w, h) = (depth.width(), depth.height());
    if target_w < w || target_h < h {
        return Err(Error::param(format!(
            "upsampling target {target_w}x{target_h} is smaller than source {w}x{h}"
        )));
    }
    if w == 0 || h == 0 {
        return Err(Error::param("cannot upsample an empty depth map"));
    }
    if (w, h) == (target_w, target_h) {
        return Ok(depth.clone());
    }
    let axis = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        if src == 1 || dst == 1 {
            return (0, 0, 0.0);
        }
        let c = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let i0 = (c.floor() as usize).min(src - 2);
        (i0, i0 + 1, c - i0 as f64)
    };
    DepthMap::from_fn(target_w, target_h, |x, y| {
        let (x0, x1, fx) = axis(x, w, target_w);
        let (y0, y1, fy) = axis(y, h, target_h);
        let top = depth.get(x0, y0) + fx * (depth.get(x1, y0) - depth.get(x0, y0));
        let bottom = depth.get(x0, y1) + fx * (depth.get(x1, y1) - depth.get(x0, y1));
        top + fy * (bottom - top)
    })
}
