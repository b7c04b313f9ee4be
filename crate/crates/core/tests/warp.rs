use nalgebra::Vector3;

use fusionkit::geometry::warp_image;
use fusionkit::{CameraIntrinsics, DepthMap, Image, Pose};

#[test]
fn warp_then_inverse_warp_restores_interior() {
    let (w, h) = (40, 30);
    let k = CameraIntrinsics::new(35.0, 35.0, 19.5, 14.5).unwrap();
    // Affine intensities are reproduced exactly by bilinear sampling.
    let img = Image::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        [0.01 * x + 0.02 * y, 0.5 - 0.01 * y, 0.2 + 0.005 * (x + y)]
    })
    .unwrap();
    let depth = DepthMap::filled(w, h, 6.0).unwrap();
    let pose = Pose::from_translation(Vector3::new(0.31, -0.17, 0.0));
    let (once, valid1) = warp_image(&img, &depth, &pose, &k).unwrap();
    let (back, valid2) = warp_image(&once, &depth, &pose.inverse(), &k).unwrap();
    let mut checked = 0;
    for y in 0..h {
        for x in 0..w {
            if !valid2.get(x, y) {
                continue;
            }
            // The second warp must land on pixels the first warp filled validly.
            let (u, v) = (x as f64 - 35.0 * 0.31 / 6.0, y as f64 + 35.0 * 0.17 / 6.0);
            let (ux, vy) = (u.floor().max(0.0) as usize, v.floor().max(0.0) as usize);
            if !(valid1.get(ux, vy) && valid1.get((ux + 1).min(w - 1), (vy + 1).min(h - 1))) {
                continue;
            }
            let (a, b) = (back.pixel(x, y), img.pixel(x, y));
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1e-5, "({x}, {y}) channel {c}: {} vs {}", a[c], b[c]);
            }
            checked += 1;
        }
    }
    assert!(checked > 400, "{checked}");
}

#[test]
fn out_of_view_pixels_are_invalid() {
    let k = CameraIntrinsics::new(20.0, 20.0, 9.5, 9.5).unwrap();
    let img = Image::filled(20, 20, [0.5; 3]).unwrap();
    let depth = DepthMap::filled(20, 20, 4.0).unwrap();
    // Shift by +5 px: the last five columns land at u > 19.
    let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
    let (_, valid) = warp_image(&img, &depth, &pose, &k).unwrap();
    for y in 0..20 {
        assert!(valid.get(10, y));
        assert!(!valid.get(15, y) && !valid.get(19, y));
    }
    // Behind the source camera.
    let behind = Pose::from_translation(Vector3::new(0.0, 0.0, -5.0));
    let (_, valid) = warp_image(&img, &depth, &behind, &k).unwrap();
    assert_eq!(valid.count(), 0);
}
