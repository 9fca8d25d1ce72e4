//! Kernel-fusion planning for image and video stencil pipelines.
//!
//! The crate is `no_std` (with `alloc`) and covers the pure parts of the
//! toolkit: the pipeline/device model, dependency classification, tile and
//! traffic arithmetic, the fusion partition solver, fused-kernel source
//! emission, and a CPU reference simulator that executes pipelines both
//! whole-frame and tiled-fused. File formats, calibration and the command
//! line live in the `fuseplan` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod codegen;
pub mod device;
pub mod halo;
pub mod kernel;
pub mod pipeline;
pub mod planner;
pub mod sim;
pub mod tiling;
pub mod video;

pub use analysis::{
    classify_dependency, classify_operation, fusible_segments, BoundaryClassification,
    FusibleSegment, OperationClass,
};
pub use device::{CostParams, Device, DeviceError};
pub use halo::{Halo, HaloMode};
pub use kernel::{DependencyType, KalmanParams, KernelDesc, OperationType, Scope, StencilOp};
pub use pipeline::{KernelInterval, Pipeline, PipelineError};
pub use tiling::{TileShape, TransferVariant};
pub use video::{frame_count, VideoDims};
