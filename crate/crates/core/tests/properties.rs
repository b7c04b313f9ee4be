use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

use fusionkit::eval::metrics_from_pairs;
use fusionkit::losses::si_closed_form;
use fusionkit::pdr::generate_pdr;
use fusionkit::{CameraIntrinsics, PointCloud, Pose};

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-3.0..3.0f64), prop::array::uniform3(-10.0..10.0f64))
        .prop_map(|(r, t)| Pose::from_axis_angle(Vector3::from(r), Vector3::from(t)))
}

fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.1..80.0f64, 0.1..80.0f64), 1..64)
}

proptest! {
    #[test]
    fn pose_inverse_composes_to_identity(p in pose()) {
        let id = p.compose(&p.inverse());
        prop_assert!(id.distance(&Pose::identity()) <= 1e-9);
        let q = Point3::new(1.0, -2.0, 3.0);
        prop_assert!((p.inverse().transform_point(&p.transform_point(&q)) - q).norm() <= 1e-9);
    }

    #[test]
    fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!(l.distance(&r) <= 1e-9);
    }

    #[test]
    fn project_backproject_round_trip(u in 0.0..640.0f64, v in 0.0..192.0f64, d in 0.1..100.0f64, f in 50.0..1000.0f64) {
        let k = CameraIntrinsics::new(f, f * 1.01, 320.0, 96.0).unwrap();
        let (u2, v2) = k.project_point(&k.backproject_pixel(u, v, d)).unwrap();
        prop_assert!((u - u2).abs() <= 1e-9 && (v - v2).abs() <= 1e-9);
    }

    #[test]
    fn metrics_ignore_pixel_order(mut p in pairs(), seed in any::<u64>()) {
        let a = metrics_from_pairs(&p).unwrap();
        let n = p.len();
        p.rotate_left((seed % n as u64) as usize);
        p.reverse();
        let b = metrics_from_pairs(&p).unwrap();
        prop_assert!((a.abs_rel - b.abs_rel).abs() <= 1e-12 * a.abs_rel.max(1.0));
        prop_assert!((a.rmse - b.rmse).abs() <= 1e-12 * a.rmse.max(1.0));
        prop_assert_eq!(a.delta1, b.delta1);
        prop_assert_eq!(a.n_valid, b.n_valid);
    }

    #[test]
    fn relative_metrics_ignore_common_scale(p in pairs(), s in 0.1..10.0f64) {
        let a = metrics_from_pairs(&p).unwrap();
        let scaled: Vec<_> = p.iter().map(|(x, y)| (x * s, y * s)).collect();
        let b = metrics_from_pairs(&scaled).unwrap();
        prop_assert!((a.abs_rel - b.abs_rel).abs() <= 1e-9 * a.abs_rel.max(1e-3));
        prop_assert!((a.rmse_log - b.rmse_log).abs() <= 1e-9);
        prop_assert!((a.rmse * s - b.rmse).abs() <= 1e-9 * b.rmse.max(1.0));
    }

    #[test]
    fn si_ignores_global_scale(d in prop::collection::vec(-3.0..3.0f64, 1..100), c in -5.0..5.0f64) {
        let shifted: Vec<f64> = d.iter().map(|x| x + c).collect();
        let (a, b) = (si_closed_form(&d), si_closed_form(&shifted));
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn pdr_values_are_bounded(
        pts in prop::collection::vec((0.0..40.0f64, 0.0..30.0f64, 1.0..50.0f64), 0..200),
        radius in 1.0..6.0f64,
    ) {
        let k = CameraIntrinsics::new(30.0, 30.0, 20.0, 15.0).unwrap();
        let cloud = PointCloud::new(pts.iter().map(|(u, v, z)| k.backproject_pixel(*u, *v, *z)).collect()).unwrap();
        let pdr = generate_pdr(&cloud, &k, 40, 30, radius).unwrap();
        let zmax = pts.iter().map(|p| p.2).fold(0.0, f64::max);
        for (d, c) in pdr.depth.data().iter().zip(&pdr.confidence) {
            prop_assert!((0.0..=1.0).contains(c));
            prop_assert_eq!(*d == 0.0, *c == 0.0);
            prop_assert!(*d <= zmax * (1.0 + 1e-12));
        }
    }
}
