//! Pinhole camera, rigid poses, per-pixel containers and differentiable inverse warping.

mod camera;
mod cloud;
mod image;
mod pose;
pub mod sample;
mod warp;

pub use camera::{backproject, project, CameraIntrinsics, Projection, XyzMap};
pub use cloud::PointCloud;
pub use image::{DepthMap, Image, Mask};
pub use pose::{Pose, PoseRecord};
pub use warp::{warp_image, warp_jacobian, warp_with_jacobian, WarpJacobian, WarpOutput};
