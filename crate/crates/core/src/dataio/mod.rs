//! KITTI-style file formats and the synthetic scene renderer.

pub mod calib;
pub mod ply;
pub mod png;
pub mod synth;
pub mod velodyne;

pub use calib::{format_calib, load_calib, parse_calib, Calibration};
pub use ply::{export_pseudolidar, load_ply, pseudolidar, save_ply, ColoredCloud, ExportFormat};
pub use png::{load_depth_png, load_image_png, save_depth_png, save_image_png};
pub use synth::{render_scene, FramePose, Layout, LidarPattern, RenderedFrame, Scene, SceneSpec, TextureSpec};
pub use velodyne::{load_velodyne_bin, save_velodyne_bin};
