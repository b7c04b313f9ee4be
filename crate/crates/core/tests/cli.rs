use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use fusionkit::dataio::{load_depth_png, save_depth_png};

fn fk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusionkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("FUSIONKIT_CONFIG")
        .output()
        .unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path) {
    ok_json(&fk(dir, &["synth", "--out", "scene"]));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok_json(&fk(p, &["synth", "--out", "a", "--seed", "3"]));
    ok_json(&fk(p, &["synth", "--out", "b", "--seed", "3"]));
    let mut names: Vec<_> = std::fs::read_dir(p.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for n in names {
        let a = std::fs::read(p.join("a").join(&n)).unwrap();
        let b = std::fs::read(p.join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn pdr_writes_both_channels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let v = ok_json(&fk(
        p,
        &["pdr", "--points", "scene/velodyne_1.bin", "--calib", "scene/calib.txt", "--size", "64x64", "--out", "pdr"],
    ));
    let cov = v["coverage_fraction"].as_f64().unwrap();
    assert!(cov > 0.0 && cov < 1.0, "{cov}");
    assert!(v["pdr_density"].as_f64().unwrap() >= cov);
    assert!(p.join("pdr/pdr_depth.png").exists());
    assert!(p.join("pdr/pdr_confidence.png").exists());
}

#[test]
fn pdr_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let out = fk(p, &["pdr", "--points", "scene/velodyne_1.bin", "--size", "64x64", "--out", "pdr"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--calib"), "{}", stderr(&out));

    let out = fk(
        p,
        &[
            "pdr", "--points", "scene/velodyne_1.bin", "--calib", "scene/calib.txt", "--size", "64x64", "--radius", "0",
            "--out", "pdr",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn refine_fixed_point_and_unanchored() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let v = ok_json(&fk(
        p,
        &[
            "refine", "--depth", "scene/depth_1.png", "--points", "scene/velodyne_1.bin", "--calib", "scene/calib.txt",
            "--out", "refined.png", "--time",
        ],
    ));
    assert!(v["anchors"].as_u64().unwrap() > 0);
    assert!(v["fps"].as_f64().unwrap() > 0.0);
    let a = load_depth_png(p.join("scene/depth_1.png")).unwrap();
    let b = load_depth_png(p.join("refined.png")).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= 1.0 / 256.0, "{x} vs {y}");
    }

    std::fs::write(p.join("empty.bin"), []).unwrap();
    let out = fk(
        p,
        &["refine", "--depth", "scene/depth_1.png", "--points", "empty.bin", "--calib", "scene/calib.txt", "--out", "r.png"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("unanchored"), "{}", stderr(&out));
}

#[test]
fn eval_identical_maps() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let gt = "scene/depth_1.png";
    let out = fk(p, &["eval", "--pred", gt, "--gt", gt, "--crop", "none"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    for (h, v) in header.iter().zip(&row).skip(2) {
        let v: f64 = v.parse().unwrap();
        match *h {
            "delta1" | "delta2" | "delta3" => assert_eq!(v, 1.0),
            "n_valid" => assert_eq!(v, 64.0 * 64.0),
            _ => assert_eq!(v, 0.0, "{h}"),
        }
    }

    let v = ok_json(&fk(p, &["eval", "--pred", gt, "--gt", gt, "--format", "json", "--jobs", "2"]));
    assert_eq!(v["metrics"]["abs_rel"], 0.0);
}

#[test]
fn optimize_bundled_scene() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&fk(dir.path(), &["optimize", "--out", "d.png"]));
    let (a0, a1) = (v["abs_rel_initial"].as_f64().unwrap(), v["abs_rel_final"].as_f64().unwrap());
    assert!(a1 <= 0.5 * a0, "{a0} -> {a1}");
    assert!(dir.path().join("d.png").exists());
}

#[test]
fn export_ply_and_bin() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    for format in ["ply", "bin"] {
        let out = format!("cloud.{format}");
        let v = ok_json(&fk(
            p,
            &[
                "export", "--depth", "scene/depth_1.png", "--calib", "scene/calib.txt", "--image", "scene/image_1.png",
                "--format", format, "--out", &out,
            ],
        ));
        assert_eq!(v["points"], 64 * 64);
        assert!(p.join(out).exists());
    }
}

#[test]
fn config_dump_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = fk(p, &["--dump-config"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("[gdc]") && text.contains("anchor_strength"), "{text}");
    let back = fusionkit::cli::RunConfig::from_toml(&text, Path::new("dump")).unwrap();
    assert_eq!(back, fusionkit::cli::RunConfig::default());

    std::fs::write(p.join("bad.toml"), "[gdc]\nkk = 3\n").unwrap();
    let out = fk(p, &["--config", "bad.toml", "--dump-config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kk"), "{}", stderr(&out));

    std::fs::write(p.join("cfg.toml"), "[eval]\ncap = 50.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fusionkit"))
        .arg("--dump-config")
        .current_dir(p)
        .env("FUSIONKIT_CONFIG", "cfg.toml")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("cap = 50.0"));
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = fk(p, &["eval", "--pred", "missing.png", "--gt", "missing.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.png"));
    let out = fk(p, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let d = fusionkit::DepthMap::filled(4, 4, 2.0).unwrap();
    save_depth_png(&d, p.join("d.png")).unwrap();
    let out = fk(p, &["eval", "--pred", "d.png", "--gt", "d.png", "--cap", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}
