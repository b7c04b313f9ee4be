//! Non-learned core of sparse-LiDAR guided self-supervised monocular depth.
//!
//! * [`geometry`]: pinhole camera, poses, bilinear sampling and inverse warping.
//! * [`pdr`]: pseudo-dense depth/confidence images from sparse LiDAR.
//! * [`losses`]: photometric, smoothness and scale-invariant objectives with depth gradients.
//! * [`gdc`]: graph-based depth correction anchored to LiDAR returns.
//! * [`depthopt`]: direct per-pixel depth optimization on image triplets.
//! * [`eval`]: depth-quality metrics.
//! * [`dataio`]: KITTI-style file formats and a synthetic scene renderer.
//! * [`cli`]: the `fusionkit` command-line frontend.

pub mod cli;
pub mod dataio;
pub mod depthopt;
pub mod error;
pub mod eval;
pub mod gdc;
pub mod geometry;
pub mod losses;
pub mod pdr;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, DepthMap, Image, Mask, PointCloud, Pose};
