use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use fusionkit_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = fk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const K: FkIntrinsics = FkIntrinsics {
    fx: 50.0,
    fy: 50.0,
    cx: 15.5,
    cy: 11.5,
};

#[test]
fn depth_png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("d.png"));
    let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(fk_depth_new(4, 3, data.as_ptr(), &mut d), FkStatus::Ok);
        assert_eq!(fk_depth_save_png(d, path.as_ptr()), FkStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fk_depth_load_png(path.as_ptr(), &mut back), FkStatus::Ok);
        assert_eq!((fk_depth_width(back), fk_depth_height(back)), (4, 3));
        let got = std::slice::from_raw_parts(fk_depth_data(back), 12);
        assert_eq!(got, &data[..]);
        fk_depth_free(d);
        fk_depth_free(back);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut d = ptr::null_mut();
        let missing = CString::new("/nonexistent/depth.png").unwrap();
        assert_eq!(fk_depth_load_png(missing.as_ptr(), &mut d), FkStatus::Io);
        assert!(last_error().contains("/nonexistent/depth.png"));
        assert!(d.is_null());

        assert_eq!(fk_depth_load_png(ptr::null(), &mut d), FkStatus::NullArgument);
        assert!(last_error().contains("path"));

        let bad = [-1.0];
        assert_eq!(fk_depth_new(1, 1, bad.as_ptr(), &mut d), FkStatus::Parameter);
        fk_depth_free(ptr::null_mut());
    }
}

#[test]
fn velodyne_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("s.bin"));
    let xyz = [1.0, 2.0, 3.0, -4.5, 0.25, 8.0];
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(fk_cloud_new(xyz.as_ptr(), 2, &mut c), FkStatus::Ok);
        assert_eq!(fk_cloud_save_velodyne(c, path.as_ptr()), FkStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fk_cloud_load_velodyne(path.as_ptr(), &mut back), FkStatus::Ok);
        assert_eq!(fk_cloud_len(back), 2);
        let mut p = [0.0; 3];
        assert_eq!(fk_cloud_point(back, 1, p.as_mut_ptr()), FkStatus::Ok);
        assert_eq!(p, [-4.5, 0.25, 8.0]);
        assert_eq!(fk_cloud_point(back, 2, p.as_mut_ptr()), FkStatus::Parameter);
        fk_cloud_free(c);
        fk_cloud_free(back);
    }
}

#[test]
fn pdr_single_point() {
    // Point on the pixel (10, 10) at 7 m.
    let z = 7.0;
    let xyz = [(10.0 - K.cx) * z / K.fx, (10.0 - K.cy) * z / K.fy, z];
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(fk_cloud_new(xyz.as_ptr(), 1, &mut c), FkStatus::Ok);
        let mut pdr = ptr::null_mut();
        assert_eq!(fk_pdr_generate(c, &K, 32, 24, 1.0, &mut pdr), FkStatus::Ok);
        let mut d = ptr::null_mut();
        assert_eq!(fk_pdr_depth(pdr, &mut d), FkStatus::Ok);
        let depth = std::slice::from_raw_parts(fk_depth_data(d), 32 * 24);
        let conf = std::slice::from_raw_parts(fk_pdr_confidence(pdr), 32 * 24);
        let i = 10 * 32 + 10;
        assert!((depth[i] - 7.0).abs() < 1e-12);
        assert_eq!(conf[i], 1.0);
        assert_eq!(depth.iter().filter(|v| **v > 0.0).count(), 1);
        let mut cov = 0.0;
        assert_eq!(fk_coverage_fraction(c, &K, 32, 24, &mut cov), FkStatus::Ok);
        assert_eq!(cov, 1.0 / (32.0 * 24.0));
        assert_eq!(fk_pdr_generate(c, &K, 32, 24, 0.5, &mut pdr), FkStatus::Parameter);
        fk_depth_free(d);
        fk_pdr_free(pdr);
        fk_cloud_free(c);
    }
}

#[test]
fn metrics_two_pixels() {
    unsafe {
        let (mut p, mut g) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(fk_depth_new(2, 1, [2.0, 4.0].as_ptr(), &mut p), FkStatus::Ok);
        assert_eq!(fk_depth_new(2, 1, [1.0, 4.0].as_ptr(), &mut g), FkStatus::Ok);
        let mut m = FkMetrics::default();
        assert_eq!(fk_depth_metrics(p, g, 80.0, FkCrop::None, &mut m), FkStatus::Ok);
        assert_eq!(m.abs_rel, 0.5);
        assert_eq!(m.rmse, 0.5f64.sqrt());
        assert_eq!(m.delta1, 0.5);
        assert_eq!(m.n_valid, 2);
        fk_depth_free(p);
        fk_depth_free(g);
    }
}

#[test]
fn gdc_fixed_point_and_unanchored() {
    let (w, h) = (32usize, 24usize);
    let plane = vec![6.0; w * h];
    // LiDAR returns on the same plane.
    let mut xyz = Vec::new();
    for y in (0..h).step_by(4) {
        for x in (0..w).step_by(4) {
            xyz.extend([(x as f64 - K.cx) * 6.0 / K.fx, (y as f64 - K.cy) * 6.0 / K.fy, 6.0]);
        }
    }
    unsafe {
        let (mut d, mut c, mut out) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(fk_depth_new(w, h, plane.as_ptr(), &mut d), FkStatus::Ok);
        assert_eq!(fk_cloud_new(xyz.as_ptr(), xyz.len() / 3, &mut c), FkStatus::Ok);
        assert_eq!(fk_gdc_refine(d, c, &K, 10, 2, f64::INFINITY, &mut out), FkStatus::Ok);
        let got = std::slice::from_raw_parts(fk_depth_data(out), w * h);
        assert!(got.iter().all(|v| (v - 6.0).abs() < 1e-9));
        fk_depth_free(out);

        let mut empty = ptr::null_mut();
        assert_eq!(fk_cloud_new(ptr::null(), 0, &mut empty), FkStatus::Ok);
        assert_eq!(fk_gdc_refine(d, empty, &K, 10, 2, f64::INFINITY, &mut out), FkStatus::Unanchored);
        assert!(last_error().contains("unanchored"));
        fk_cloud_free(empty);
        fk_cloud_free(c);
        fk_depth_free(d);
    }
}

#[test]
fn scale_invariant_loss_matches_closed_form() {
    let y = [1.0, 2.0, 4.0];
    let ys = [1.0, 1.0, 1.0];
    let d: Vec<f64> = y.iter().map(|v: &f64| v.ln()).collect();
    let n = 3.0;
    let s: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|v| v * v).sum();
    let expected = (2.0 / n * s2 - 2.0 / (n * n) * s * s).sqrt();
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    unsafe {
        assert_eq!(
            fk_scale_invariant_loss(y.as_ptr(), ys.as_ptr(), 3, 1.0, 1.0, &mut loss, grad.as_mut_ptr()),
            FkStatus::Ok
        );
        assert!((loss - expected).abs() < 1e-12);
        // Scaling y leaves the loss unchanged.
        let y2 = [3.0, 6.0, 12.0];
        let mut loss2 = 0.0;
        assert_eq!(
            fk_scale_invariant_loss(y2.as_ptr(), ys.as_ptr(), 3, 1.0, 1.0, &mut loss2, ptr::null_mut()),
            FkStatus::Ok
        );
        assert!((loss2 - loss).abs() < 1e-12);
    }
    // Σ y_i ∂L/∂y_i = 0 for a scale-invariant loss.
    let euler: f64 = grad.iter().zip(&y).map(|(g, v)| g * v).sum();
    assert!(euler.abs() < 1e-12);
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(fk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fusionkit.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "fk_depth_load_png",
        "fk_cloud_load_velodyne",
        "fk_pdr_generate",
        "fk_depth_metrics",
        "fk_gdc_refine",
        "fk_scale_invariant_loss",
        "fk_last_error",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header compile check skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"fusionkit.h\"\nint main(void) { FkDepthMap *d = 0; FkStatus s = fk_depth_load_png(\"x\", &d); \
         (void)fk_last_error(); fk_depth_free(d); return s == FK_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
