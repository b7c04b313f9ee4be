//! C ABI for fusionkit.
//!
//! Objects are opaque handles created by `fk_*_new` / `fk_*_load_*` and released with the
//! matching `fk_*_free`. Every fallible call returns an [`FkStatus`]; on failure
//! [`fk_last_error`] gives a message for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fusionkit::dataio::{load_depth_png, load_velodyne_bin, save_depth_png, save_velodyne_bin};
use fusionkit::eval::{depth_metrics, Crop};
use fusionkit::gdc::{build_graph, solve_correction_with, GdcConfig};
use fusionkit::geometry::Mask;
use fusionkit::losses::scale_invariant_loss;
use fusionkit::pdr::{coverage_fraction, generate_pdr, Pdr};
use fusionkit::{CameraIntrinsics, DepthMap, Error, PointCloud};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkStatus {
    Ok = 0,
    NullArgument = 1,
    Parameter = 2,
    Format = 3,
    Io = 4,
    Unanchored = 5,
    NotConverged = 6,
    Numerical = 7,
    Panic = 8,
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FkIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Evaluation crop selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkCrop {
    None = 0,
    Eigen = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FkMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub rmse_mm: f64,
    pub irmse: f64,
    pub imae: f64,
    pub n_valid: usize,
}

/// Opaque depth map handle.
pub struct FkDepthMap(DepthMap);
/// Opaque point cloud handle (camera frame unless loaded from a scan).
pub struct FkPointCloud(PointCloud);
/// Opaque pseudo-dense representation handle.
pub struct FkPdr(Pdr);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FkStatus {
    match e {
        Error::Parameter(_) => FkStatus::Parameter,
        Error::Format { .. } => FkStatus::Format,
        Error::Io { .. } => FkStatus::Io,
        Error::Unanchored => FkStatus::Unanchored,
        Error::NotConverged { .. } => FkStatus::NotConverged,
        Error::Numerical(_) | Error::Diverged { .. } => FkStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FkStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            FkStatus::NullArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            FkStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Parameter(format!("`{name}` is not valid UTF-8"))))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn intrinsics(k: &FkIntrinsics) -> Result<CameraIntrinsics, Failure> {
    Ok(CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?)
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn fk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a depth map from `width*height` row-major meters (0 = invalid).
///
/// # Safety
/// `data` must point to `width*height` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_new(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut FkDepthMap,
) -> FkStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Parameter("depth size overflows".into()))?;
        let d = DepthMap::new(width, height, slice(data, n, "data")?.to_vec())?;
        put(out, FkDepthMap(d), "out")
    })
}

/// # Safety
/// `depth` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_free(depth: *mut FkDepthMap) {
    if !depth.is_null() {
        drop(Box::from_raw(depth));
    }
}

/// # Safety
/// `depth` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_width(depth: *const FkDepthMap) -> usize {
    depth.as_ref().map_or(0, |d| d.0.width())
}

/// # Safety
/// `depth` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_height(depth: *const FkDepthMap) -> usize {
    depth.as_ref().map_or(0, |d| d.0.height())
}

/// Row-major depth values, valid while the handle lives.
///
/// # Safety
/// `depth` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_data(depth: *const FkDepthMap) -> *const f64 {
    depth.as_ref().map_or(ptr::null(), |d| d.0.data().as_ptr())
}

/// Loads a 16-bit KITTI depth PNG (meters × 256).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_load_png(path: *const c_char, out: *mut *mut FkDepthMap) -> FkStatus {
    guard(|| {
        let d = load_depth_png(path_arg(path, "path")?)?;
        put(out, FkDepthMap(d), "out")
    })
}

/// # Safety
/// `depth` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_save_png(depth: *const FkDepthMap, path: *const c_char) -> FkStatus {
    guard(|| {
        let d = as_ref(depth, "depth")?;
        Ok(save_depth_png(&d.0, path_arg(path, "path")?)?)
    })
}

/// Creates a cloud from `n` xyz triples (meters).
///
/// # Safety
/// `xyz` must point to `3*n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_new(xyz: *const f64, n: usize, out: *mut *mut FkPointCloud) -> FkStatus {
    guard(|| {
        let len = n
            .checked_mul(3)
            .ok_or_else(|| Error::Parameter("point count overflows".into()))?;
        let v = slice(xyz, len, "xyz")?;
        let pts = v
            .chunks_exact(3)
            .map(|c| nalgebra::Point3::new(c[0], c[1], c[2]))
            .collect();
        put(out, FkPointCloud(PointCloud::new(pts)?), "out")
    })
}

/// Loads a KITTI velodyne scan (points stay in the LiDAR frame).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_load_velodyne(path: *const c_char, out: *mut *mut FkPointCloud) -> FkStatus {
    guard(|| {
        let c = load_velodyne_bin(path_arg(path, "path")?)?;
        put(out, FkPointCloud(c), "out")
    })
}

/// # Safety
/// `cloud` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_save_velodyne(cloud: *const FkPointCloud, path: *const c_char) -> FkStatus {
    guard(|| {
        let c = as_ref(cloud, "cloud")?;
        Ok(save_velodyne_bin(&c.0, path_arg(path, "path")?)?)
    })
}

/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_len(cloud: *const FkPointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies point `index` into `xyz[3]`.
///
/// # Safety
/// `cloud` must be a live handle and `xyz` writable for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_point(cloud: *const FkPointCloud, index: usize, xyz: *mut f64) -> FkStatus {
    guard(|| {
        let c = as_ref(cloud, "cloud")?;
        if xyz.is_null() {
            return Err(Failure::Null("xyz"));
        }
        let p = c
            .0
            .points()
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("point index {index} out of range")))?;
        let out = std::slice::from_raw_parts_mut(xyz, 3);
        out.copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}

/// # Safety
/// `cloud` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fk_cloud_free(cloud: *mut FkPointCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Builds the pseudo-dense representation of camera-frame points.
///
/// # Safety
/// Pointers must be live handles / readable structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_pdr_generate(
    cloud: *const FkPointCloud,
    k: *const FkIntrinsics,
    width: usize,
    height: usize,
    radius: f64,
    out: *mut *mut FkPdr,
) -> FkStatus {
    guard(|| {
        let c = as_ref(cloud, "cloud")?;
        let k = intrinsics(as_ref(k, "k")?)?;
        let p = generate_pdr(&c.0, &k, width, height, radius)?;
        put(out, FkPdr(p), "out")
    })
}

/// Depth channel as a new handle owned by the caller.
///
/// # Safety
/// `pdr` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_pdr_depth(pdr: *const FkPdr, out: *mut *mut FkDepthMap) -> FkStatus {
    guard(|| {
        let p = as_ref(pdr, "pdr")?;
        put(out, FkDepthMap(p.0.depth.clone()), "out")
    })
}

/// Row-major confidence channel, valid while the handle lives.
///
/// # Safety
/// `pdr` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fk_pdr_confidence(pdr: *const FkPdr) -> *const f64 {
    pdr.as_ref().map_or(ptr::null(), |p| p.0.confidence.as_ptr())
}

/// # Safety
/// `pdr` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fk_pdr_free(pdr: *mut FkPdr) {
    if !pdr.is_null() {
        drop(Box::from_raw(pdr));
    }
}

/// Fraction of pixels hit by at least one projected point.
///
/// # Safety
/// Pointers must be live handles / readable structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_coverage_fraction(
    cloud: *const FkPointCloud,
    k: *const FkIntrinsics,
    width: usize,
    height: usize,
    out: *mut f64,
) -> FkStatus {
    guard(|| {
        let c = as_ref(cloud, "cloud")?;
        let k = intrinsics(as_ref(k, "k")?)?;
        let f = coverage_fraction(&c.0, &k, width, height)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = f;
        Ok(())
    })
}

/// Depth metrics over `0 < gt ≤ cap` inside the crop.
///
/// # Safety
/// `pred`, `gt` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_depth_metrics(
    pred: *const FkDepthMap,
    gt: *const FkDepthMap,
    cap: f64,
    crop: FkCrop,
    out: *mut FkMetrics,
) -> FkStatus {
    guard(|| {
        let p = as_ref(pred, "pred")?;
        let g = as_ref(gt, "gt")?;
        let crop = match crop {
            FkCrop::None => Crop::None,
            FkCrop::Eigen => Crop::Eigen,
        };
        let m = depth_metrics(&p.0, &g.0, cap, crop)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = FkMetrics {
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            delta1: m.delta1,
            delta2: m.delta2,
            delta3: m.delta3,
            rmse_mm: m.rmse_mm,
            irmse: m.irmse,
            imae: m.imae,
            n_valid: m.n_valid,
        };
        Ok(())
    })
}

/// Graph-based depth correction of `depth` anchored to camera-frame `cloud`.
///
/// `anchor_strength` may be `INFINITY` for hard anchors.
///
/// # Safety
/// Pointers must be live handles / readable structs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fk_gdc_refine(
    depth: *const FkDepthMap,
    cloud: *const FkPointCloud,
    k: *const FkIntrinsics,
    neighbors: usize,
    stride: usize,
    anchor_strength: f64,
    out: *mut *mut FkDepthMap,
) -> FkStatus {
    guard(|| {
        let d = as_ref(depth, "depth")?;
        let c = as_ref(cloud, "cloud")?;
        let k = intrinsics(as_ref(k, "k")?)?;
        let cfg = GdcConfig {
            k: neighbors,
            stride,
            anchor_strength,
            ..GdcConfig::default()
        };
        let graph = build_graph(&d.0, &k, &c.0, &cfg)?;
        let corr = solve_correction_with(&graph, anchor_strength, cfg.tolerance, cfg.max_iter_factor)?;
        let dense = corr
            .dense
            .ok_or_else(|| Error::Numerical("correction produced no dense map".into()))?;
        put(out, FkDepthMap(dense), "out")
    })
}

/// Scale-invariant loss `λ·√(η·Si)` over `n` depth pairs; `grad` (nullable) receives ∂L/∂y.
///
/// # Safety
/// `y`, `y_star` must hold `n` doubles, `grad` (if non-null) be writable for `n`, `loss` writable.
#[no_mangle]
pub unsafe extern "C" fn fk_scale_invariant_loss(
    y: *const f64,
    y_star: *const f64,
    n: usize,
    lambda: f64,
    eta: f64,
    loss: *mut f64,
    grad: *mut f64,
) -> FkStatus {
    guard(|| {
        let y = DepthMap::new(n, 1, slice(y, n, "y")?.to_vec())?;
        let ys = DepthMap::new(n, 1, slice(y_star, n, "y_star")?.to_vec())?;
        let (l, g) = scale_invariant_loss(&y, &ys, &Mask::all(n, 1, true), lambda, eta)?;
        if loss.is_null() {
            return Err(Failure::Null("loss"));
        }
        *loss = l;
        if !grad.is_null() {
            std::slice::from_raw_parts_mut(grad, n).copy_from_slice(&g);
        }
        Ok(())
    })
}
