//! Monocular egomotion and object-motion estimation from optic flow.
//!
//! The crate covers the full pipeline at desk scale:
//!
//! - [`geometry`]: rigid motion-field math and pose algebra
//! - [`egosolver`]: closed-form and robust 6DoF recovery from flow
//! - [`gradnet`]: a small deterministic reverse-mode autodiff engine
//! - [`mfg`]: the motion-field-generator network, its losses and training
//! - [`objmotion`]: residual-based object-velocity extraction
//! - [`synthgen`]: deterministic synthetic dynamic-scene generation
//! - [`evalkit`]: trajectory and pose-error metrics
//! - [`dataio`]: binary containers for flow/depth/mask grids and pose files
//! - [`flowviz`]: flow color-wheel rendering and trajectory plots

pub mod dataio;
pub mod egosolver;
pub mod evalkit;
pub mod flowviz;
pub mod geometry;
pub mod gradnet;
pub mod mfg;
pub mod objmotion;
pub mod synthgen;

pub use geometry::{CameraModel, EgoMotion, FlowField, InverseDepthMap, MaskGrid, Pose, Trajectory};
