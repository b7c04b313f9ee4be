use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use serde_json::json;

use super::{
    CalibArgs, Cli, Command, CropArg, Distill, EvalArgs, EvalFormat, ExportArgs, ExportFormatArg, OptimizeArgs,
    PdrArgs, RefineArgs, RunConfig, Size, SynthArgs,
};
use crate::dataio::{
    export_pseudolidar, format_calib, load_calib, load_depth_png, load_image_png, load_velodyne_bin, save_depth_png,
    save_image_png, save_velodyne_bin, ExportFormat, Scene, SceneSpec,
};
use crate::dataio::png::save_unit_png;
use crate::depthopt::{median_scale, optimize_depth, OptimizeInputs, PoseMode};
use crate::error::{Error, Result};
use crate::eval::{depth_metrics, Crop, MetricReport};
use crate::gdc::{build_graph, solve_correction_with, GdcConfig};
use crate::geometry::{CameraIntrinsics, DepthMap, Image, PointCloud, Pose, PoseRecord};
use crate::pdr::{coverage_fraction, generate_pdr, subsample_beams};

pub(super) fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.dump_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::param("no subcommand given (see --help)"));
    };
    match command {
        Command::Pdr(a) => cmd_pdr(&a, &config),
        Command::Refine(a) => cmd_refine(&a, &config),
        Command::Optimize(a) => cmd_optimize(&a, &config),
        Command::Eval(a) => cmd_eval(&a, &config),
        Command::Export(a) => cmd_export(&a),
        Command::Synth(a) => cmd_synth(&a, &config),
    }
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

/// Camera intrinsics at `size` and the LiDAR-to-camera pose.
fn calibration(args: &CalibArgs, size: Size) -> Result<(CameraIntrinsics, Pose)> {
    let c = load_calib(&args.calib)?;
    let k = match args.calib_size {
        Some(from) => c
            .intrinsics
            .rescaled((from.width, from.height), (size.width, size.height))?,
        None => c.intrinsics,
    };
    Ok((k, c.velo_to_cam))
}

fn camera_scan(path: &Path, velo_to_cam: &Pose, keep_beams: usize) -> Result<PointCloud> {
    let cloud = load_velodyne_bin(path)?.transformed(velo_to_cam);
    if keep_beams == 0 {
        Ok(cloud)
    } else {
        subsample_beams(&cloud, keep_beams)
    }
}

fn cmd_pdr(a: &PdrArgs, cfg: &RunConfig) -> Result<()> {
    let radius = a
        .radius
        .unwrap_or((cfg.pdr.radius_at_640 * a.size.width as f64 / 640.0).max(1.0));
    if !(radius >= 1.0) {
        return Err(Error::param(format!("--radius must be >= 1 (got {radius})")));
    }
    let (k, velo_to_cam) = calibration(&a.calib, a.size)?;
    let cloud = camera_scan(&a.points, &velo_to_cam, a.keep_beams.unwrap_or(cfg.pdr.keep_beams))?;
    let pdr = generate_pdr(&cloud, &k, a.size.width, a.size.height, radius)?;
    let coverage = coverage_fraction(&cloud, &k, a.size.width, a.size.height)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let depth_path = a.out.join("pdr_depth.png");
    let conf_path = a.out.join("pdr_confidence.png");
    save_depth_png(&pdr.depth, &depth_path)?;
    save_unit_png(&pdr.confidence, a.size.width, a.size.height, &conf_path)?;
    eprintln!(
        "pdr: {} points, coverage {:.4}, filled {:.4}, radius {radius}",
        cloud.len(),
        coverage,
        pdr.density()
    );
    emit(json!({
        "command": "pdr",
        "points": cloud.len(),
        "radius": radius,
        "coverage_fraction": coverage,
        "pdr_density": pdr.density(),
        "depth": depth_path,
        "confidence": conf_path,
    }));
    Ok(())
}

fn cmd_refine(a: &RefineArgs, cfg: &RunConfig) -> Result<()> {
    let gdc = GdcConfig {
        k: a.gdc_k.unwrap_or(cfg.gdc.k),
        stride: a.gdc_stride.unwrap_or(cfg.gdc.stride),
        anchor_strength: a.gdc_anchor_strength.unwrap_or(cfg.gdc.anchor_strength),
        ..cfg.gdc
    };
    let depth = load_depth_png(&a.depth)?;
    let size = Size {
        width: depth.width(),
        height: depth.height(),
    };
    let (k, velo_to_cam) = calibration(&a.calib, size)?;
    let cloud = camera_scan(&a.points, &velo_to_cam, a.keep_beams.unwrap_or(cfg.pdr.keep_beams))?;
    let start = Instant::now();
    let graph = build_graph(&depth, &k, &cloud, &gdc)?;
    let correction = solve_correction_with(&graph, gdc.anchor_strength, gdc.tolerance, gdc.max_iter_factor)?;
    let elapsed = start.elapsed().as_secs_f64();
    let dense = correction
        .dense
        .ok_or_else(|| Error::Numerical("correction produced no dense map".into()))?;
    save_depth_png(&dense, &a.out)?;
    let mut out = json!({
        "command": "refine",
        "nodes": graph.len(),
        "anchors": graph.anchors().len(),
        "iterations": correction.iterations,
        "relative_residual": correction.relative_residual,
        "out": a.out,
    });
    eprintln!(
        "refine: {} nodes, {} anchors, {} CG iterations, residual {:.2e}",
        graph.len(),
        graph.anchors().len(),
        correction.iterations,
        correction.relative_residual
    );
    if a.time {
        let ms = elapsed * 1e3;
        let fps = 1.0 / elapsed;
        out["ms"] = json!(ms);
        out["fps"] = json!(fps);
        eprintln!("refine: {}x{} in {ms:.1} ms ({fps:.2} FPS)", size.width, size.height);
    }
    emit(out);
    Ok(())
}

fn load_scene_spec(path: Option<&PathBuf>, cfg: &RunConfig) -> Result<SceneSpec> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::format(p, e.to_string()))
        }
        None => {
            let mut spec = SceneSpec::textured_plane();
            spec.texture.seed = cfg.seed;
            Ok(spec)
        }
    }
}

fn report_metrics(pred: &DepthMap, gt: &DepthMap, cap: f64) -> Result<MetricReport> {
    depth_metrics(pred, gt, cap, Crop::None)
}

fn cmd_optimize(a: &OptimizeArgs, cfg: &RunConfig) -> Result<()> {
    let mut opt = cfg.optimizer;
    if let Some(n) = a.iterations {
        opt.iterations = n;
    }
    // Owned inputs for both modes.
    let (frames, world_poses, k, init, enhanced, gt): (Vec<Image>, Vec<Pose>, CameraIntrinsics, DepthMap, Option<DepthMap>, Option<DepthMap>);
    match &a.frames {
        Some(paths) => {
            frames = paths.iter().map(load_image_png).collect::<Result<_>>()?;
            let poses_path = a.poses.as_ref().ok_or_else(|| Error::param("--poses is required with --frames"))?;
            let text = fs::read_to_string(poses_path).map_err(|e| Error::io(poses_path, e))?;
            let records: Vec<PoseRecord> =
                serde_json::from_str(&text).map_err(|e| Error::format(poses_path, e.to_string()))?;
            if records.len() != 3 {
                return Err(Error::format(poses_path, format!("expected 3 poses, found {}", records.len())));
            }
            world_poses = records.iter().map(Pose::try_from).collect::<Result<_>>()?;
            let calib = a.calib.as_ref().ok_or_else(|| Error::param("--calib is required with --frames"))?;
            k = load_calib(calib)?.intrinsics;
            let (w, h) = (frames[1].width(), frames[1].height());
            init = match &a.init {
                Some(p) => load_depth_png(p)?,
                None => DepthMap::filled(w, h, opt.default_depth)?,
            };
            enhanced = a.enhanced.as_ref().map(load_depth_png).transpose()?;
            gt = a.gt.as_ref().map(load_depth_png).transpose()?;
        }
        None => {
            let spec = load_scene_spec(a.scene.as_ref(), cfg)?;
            if spec.frames.len() != 3 {
                return Err(Error::param("optimize expects a scene with exactly 3 frames"));
            }
            if !(a.init_scale > 0.0) {
                return Err(Error::param("--init-scale must be positive"));
            }
            let scene = Scene::new(spec.clone())?;
            let rendered: Vec<_> = (0..3).map(|i| scene.render(i)).collect::<Result<_>>()?;
            k = spec.intrinsics;
            world_poses = spec.frames.iter().map(|f| f.to_pose()).collect();
            let truth = rendered[1].depth.clone();
            init = truth.scaled(a.init_scale)?;
            enhanced = match a.distill {
                Distill::None => None,
                Distill::Truth => Some(truth.clone()),
                Distill::Gdc => {
                    let graph = build_graph(&init, &k, &rendered[1].lidar, &cfg.gdc)?;
                    let c = solve_correction_with(&graph, cfg.gdc.anchor_strength, cfg.gdc.tolerance, cfg.gdc.max_iter_factor)?;
                    c.dense
                }
            };
            gt = Some(truth);
            frames = rendered.into_iter().map(|r| r.image).collect();
        }
    }
    let target_pose = world_poses[1];
    let rel = |i: usize| world_poses[i].compose(&target_pose.inverse());
    let poses = vec![rel(0), rel(2)];
    let inputs = OptimizeInputs {
        target: &frames[1],
        neighbors: vec![&frames[0], &frames[2]],
        poses: if a.joint_pose { PoseMode::Joint(poses) } else { PoseMode::Known(poses) },
        intrinsics: k,
        pdr: None,
        enhanced: enhanced.as_ref(),
        init: Some(&init),
    };
    let (depth, state) = optimize_depth(&inputs, &cfg.loss, &opt)?;
    if let Some(out) = &a.out {
        save_depth_png(&depth, out)?;
    }
    let first = state.history.first().map(|r| r.total).unwrap_or(f64::NAN);
    let last = state.history.last().map(|r| r.total).unwrap_or(f64::NAN);
    let mut out = json!({
        "command": "optimize",
        "iterations": state.history.len(),
        "loss_initial": first,
        "loss_final": last,
    });
    eprintln!("optimize: {} iterations, loss {first:.6e} -> {last:.6e}", state.history.len());
    if let Some(gt) = &gt {
        let m0 = report_metrics(&init, gt, cfg.eval.cap)?;
        let m1 = report_metrics(&depth, gt, cfg.eval.cap)?;
        let ms = report_metrics(&median_scale(&depth, gt)?, gt, cfg.eval.cap)?;
        out["abs_rel_initial"] = json!(m0.abs_rel);
        out["abs_rel_final"] = json!(m1.abs_rel);
        out["abs_rel_median_scaled"] = json!(ms.abs_rel);
        eprintln!(
            "optimize: abs_rel {:.4} -> {:.4} (median-scaled {:.4})",
            m0.abs_rel, m1.abs_rel, ms.abs_rel
        );
    }
    emit(out);
    Ok(())
}

fn cmd_eval(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    if a.pred.len() != a.gt.len() {
        return Err(Error::param(format!(
            "{} --pred files but {} --gt files",
            a.pred.len(),
            a.gt.len()
        )));
    }
    if a.jobs == 0 {
        return Err(Error::param("--jobs must be >= 1"));
    }
    let cap = a.cap.unwrap_or(cfg.eval.cap);
    if !(cap > 0.0) {
        return Err(Error::param("--cap must be positive"));
    }
    let crop = match a.crop {
        Some(CropArg::None) => Crop::None,
        Some(CropArg::Eigen) => Crop::Eigen,
        None => cfg.eval.crop,
    };
    let one = |i: usize| -> Result<MetricReport> {
        let pred = load_depth_png(&a.pred[i])?;
        let gt = load_depth_png(&a.gt[i])?;
        depth_metrics(&pred, &gt, cap, crop)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let reports: Vec<MetricReport> = pool.install(|| {
        use rayon::prelude::*;
        (0..a.pred.len()).into_par_iter().map(one).collect::<Result<Vec<_>>>()
    })?;
    match a.format {
        EvalFormat::Csv => {
            println!("pred,gt,{}", MetricReport::CSV_HEADER);
            for (i, r) in reports.iter().enumerate() {
                println!("{},{},{}", a.pred[i].display(), a.gt[i].display(), r.to_csv());
            }
        }
        EvalFormat::Json => {
            for (i, r) in reports.iter().enumerate() {
                emit(json!({"command": "eval", "pred": a.pred[i], "gt": a.gt[i], "metrics": r}));
            }
        }
    }
    eprintln!(
        "{:>24} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7}",
        "file", "abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3"
    );
    for (i, r) in reports.iter().enumerate() {
        let name = a.pred[i].file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        eprintln!(
            "{:>24} {:>8.4} {:>8.4} {:>8.3} {:>8.4} {:>7.4} {:>7.4} {:>7.4}",
            name, r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3
        );
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let depth = load_depth_png(&a.depth)?;
    let size = Size {
        width: depth.width(),
        height: depth.height(),
    };
    let (k, _) = calibration(&a.calib, size)?;
    let image = a.image.as_ref().map(load_image_png).transpose()?;
    let format = match a.format {
        ExportFormatArg::Ply => ExportFormat::Ply,
        ExportFormatArg::Bin => ExportFormat::Bin,
    };
    let n = export_pseudolidar(&depth, image.as_ref(), &k, &a.out, format)?;
    eprintln!("export: {n} points to {}", a.out.display());
    emit(json!({"command": "export", "points": n, "out": a.out}));
    Ok(())
}

/// Camera-from-LiDAR axis change for a scanner with x forward, y left, z up.
pub fn kitti_axes() -> Pose {
    let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    Pose::from_matrix(r, Vector3::zeros()).expect("axis permutation is a rotation")
}

fn cmd_synth(a: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let mut spec = load_scene_spec(a.scene.as_ref(), cfg)?;
    if let Some(seed) = a.seed {
        spec.texture.seed = seed;
    }
    let scene = Scene::new(spec.clone())?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let p = a.out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let axes = kitti_axes();
    write("calib.txt", format_calib(&spec.intrinsics, &axes))?;
    write("scene.toml", toml::to_string(&spec).map_err(|e| Error::param(e.to_string()))?)?;
    let records: Vec<PoseRecord> = spec.frames.iter().map(|f| PoseRecord::from(&f.to_pose())).collect();
    write(
        "poses.json",
        serde_json::to_string_pretty(&records).map_err(|e| Error::param(e.to_string()))?,
    )?;
    let to_lidar = axes.inverse();
    let mut lidar_points = 0;
    for i in 0..spec.frames.len() {
        let f = scene.render(i)?;
        save_image_png(&f.image, a.out.join(format!("image_{i}.png")))?;
        save_depth_png(&f.depth, a.out.join(format!("depth_{i}.png")))?;
        save_velodyne_bin(&f.lidar.transformed(&to_lidar), a.out.join(format!("velodyne_{i}.bin")))?;
        lidar_points += f.lidar.len();
    }
    eprintln!(
        "synth: {} frames of {}x{} to {}",
        spec.frames.len(),
        spec.width,
        spec.height,
        a.out.display()
    );
    emit(json!({
        "command": "synth",
        "frames": spec.frames.len(),
        "width": spec.width,
        "height": spec.height,
        "lidar_points": lidar_points,
        "seed": spec.texture.seed,
        "out": a.out,
    }));
    Ok(())
}
