use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::classify_operation;
use crate::kernel::{KalmanParams, KernelDesc, OperationType, StencilOp};
use crate::video::VideoDims;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("pipeline has no kernels")]
    Empty,
    #[error("video.{field}: {reason}")]
    InvalidVideo {
        field: &'static str,
        reason: &'static str,
    },
    #[error("schema violation at {field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("kernel {kernel}: id {found} out of order (expected {kernel})")]
    KernelId { kernel: u32, found: u32 },
    #[error("kernel {kernel}: negative halo in field halo.{field}")]
    NegativeHalo { kernel: u32, field: &'static str },
    #[error("kernel {kernel}: op_type {declared} does not match halo (classified {derived})")]
    OpTypeMismatch {
        kernel: u32,
        declared: OperationType,
        derived: OperationType,
    },
    #[error(
        "kernel {kernel}: halo.{field} = {declared} is smaller than the {op} footprint {required}"
    )]
    HaloTooSmall {
        kernel: u32,
        field: &'static str,
        op: &'static str,
        declared: u32,
        required: u32,
    },
    #[error("kernel {kernel}: stencil_op {op} cannot consume {channels}-channel input")]
    ChannelMismatch {
        kernel: u32,
        op: &'static str,
        channels: u32,
    },
    #[error(
        "kernel {kernel}: in_bytes_per_elem = {found} but the previous stage writes {expected}"
    )]
    BytesMismatch {
        kernel: u32,
        expected: u32,
        found: u32,
    },
    #[error("kernel {kernel}: {field} {reason}")]
    InvalidField {
        kernel: u32,
        field: &'static str,
        reason: &'static str,
    },
}

/// A validated chain of kernels `K1 … Kn` over one video.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub video: VideoDims,
    kernels: Vec<KernelDesc>,
}

impl Pipeline {
    pub fn new(video: VideoDims, kernels: Vec<KernelDesc>) -> Result<Self, PipelineError> {
        video.validate()?;
        if kernels.is_empty() {
            return Err(PipelineError::Empty);
        }
        let mut channels = video.channels;
        let mut prev_out_bytes: Option<u32> = None;
        for (pos, k) in kernels.iter().enumerate() {
            let expected_id = pos as u32 + 1;
            if k.id != expected_id {
                return Err(PipelineError::KernelId {
                    kernel: expected_id,
                    found: k.id,
                });
            }
            validate_kernel(k)?;
            channels =
                k.stencil_op
                    .output_channels(channels)
                    .ok_or(PipelineError::ChannelMismatch {
                        kernel: k.id,
                        op: k.stencil_op.name(),
                        channels,
                    })?;
            if let Some(expected) = prev_out_bytes {
                if k.in_bytes_per_elem != expected {
                    return Err(PipelineError::BytesMismatch {
                        kernel: k.id,
                        expected,
                        found: k.in_bytes_per_elem,
                    });
                }
            }
            prev_out_bytes = Some(k.out_bytes_per_elem);
        }
        Ok(Pipeline { video, kernels })
    }

    pub fn kernels(&self) -> &[KernelDesc] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, id: u32) -> Option<&KernelDesc> {
        self.kernels.get((id as usize).checked_sub(1)?)
    }

    /// Kernels of `interval` (1-based, inclusive).
    pub fn slice(&self, interval: KernelInterval) -> &[KernelDesc] {
        &self.kernels[interval.first as usize - 1..interval.last as usize]
    }

    /// Same kernels over a different video (e.g. a desk-scale clip).
    pub fn retarget(&self, video: VideoDims) -> Result<Pipeline, PipelineError> {
        Pipeline::new(video, self.kernels.clone())
    }

    /// Channel count flowing out of each kernel, in order.
    pub fn channel_chain(&self) -> Vec<u32> {
        let mut ch = self.video.channels;
        self.kernels
            .iter()
            .map(|k| {
                ch = k.stencil_op.output_channels(ch).unwrap_or(ch);
                ch
            })
            .collect()
    }
}

fn validate_kernel(k: &KernelDesc) -> Result<(), PipelineError> {
    if let Err((field, reason)) = k.stencil_op.validate() {
        return Err(PipelineError::InvalidField {
            kernel: k.id,
            field,
            reason,
        });
    }
    if !(k.compute_weight.is_finite() && k.compute_weight >= 0.0) {
        return Err(PipelineError::InvalidField {
            kernel: k.id,
            field: "compute_weight",
            reason: "must be finite and non-negative",
        });
    }
    if k.in_bytes_per_elem == 0 || k.out_bytes_per_elem == 0 {
        return Err(PipelineError::InvalidField {
            kernel: k.id,
            field: "in_bytes_per_elem",
            reason: "element widths must be at least one byte",
        });
    }
    let need = k.stencil_op.footprint();
    let sides = [
        ("x_lo", k.halo.x_lo, need.x_lo),
        ("x_hi", k.halo.x_hi, need.x_hi),
        ("y_lo", k.halo.y_lo, need.y_lo),
        ("y_hi", k.halo.y_hi, need.y_hi),
        ("t_lo", k.halo.t_lo, need.t_lo),
        ("t_hi", k.halo.t_hi, need.t_hi),
    ];
    for (field, declared, required) in sides {
        if declared < required {
            return Err(PipelineError::HaloTooSmall {
                kernel: k.id,
                field,
                op: k.stencil_op.name(),
                declared,
                required,
            });
        }
    }
    let class = classify_operation(&k.halo, k.stencil_op.multi_frame());
    if !class.admits(k.op_type, &k.halo, k.stencil_op.multi_frame()) {
        return Err(PipelineError::OpTypeMismatch {
            kernel: k.id,
            declared: k.op_type,
            derived: class.primary,
        });
    }
    Ok(())
}

/// Inclusive, 1-based run of kernel ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelInterval {
    pub first: u32,
    pub last: u32,
}

impl KernelInterval {
    pub fn new(first: u32, last: u32) -> Self {
        debug_assert!(first >= 1 && first <= last);
        KernelInterval { first, last }
    }

    pub fn single(id: u32) -> Self {
        KernelInterval::new(id, id)
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: u32) -> bool {
        self.first <= id && id <= self.last
    }

    pub fn ids(&self) -> core::ops::RangeInclusive<u32> {
        self.first..=self.last
    }
}

impl fmt::Display for KernelInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}-{}", self.first, self.last)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionSyntaxError {
    #[error("invalid interval {0:?}")]
    InvalidInterval(String),
    #[error("empty partition")]
    Empty,
}

/// Parses `"1-2,3-5"` style partitions (single ids allowed: `"1,2,3"`).
pub fn parse_partition(text: &str) -> Result<Vec<KernelInterval>, PartitionSyntaxError> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let bad = || PartitionSyntaxError::InvalidInterval(String::from(part));
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        out.push(KernelInterval::new(a, b));
    }
    if out.is_empty() {
        return Err(PartitionSyntaxError::Empty);
    }
    Ok(out)
}

/// The six-stage marker-tracking chain: RGBA→gray, temporal IIR, Gaussian
/// smoothing, Sobel gradient, threshold, Kalman tracking.
pub fn bundled_pipeline(video: VideoDims) -> Result<Pipeline, PipelineError> {
    let kernels = alloc::vec![
        KernelDesc::from_op(1, "rgba2gray", StencilOp::Rgba2Gray, 4, 4),
        KernelDesc::from_op(2, "iir_filter", StencilOp::IirTemporal { alpha: 0.5 }, 4, 4),
        KernelDesc::from_op(
            3,
            "gaussian_smooth",
            StencilOp::Gaussian {
                radius: 2,
                sigma: 1.0,
            },
            4,
            4,
        ),
        KernelDesc::from_op(4, "gradient", StencilOp::Gradient, 4, 4),
        KernelDesc::from_op(5, "threshold", StencilOp::Threshold { level: 128.0 }, 4, 4),
        KernelDesc::from_op(
            6,
            "kalman",
            StencilOp::Kalman(KalmanParams::default()),
            4,
            4
        ),
    ];
    Pipeline::new(video, kernels)
}

/// Video of the bundled pipeline: 256×256 frames, one second at 1000 fps, RGBA.
pub fn bundled_video() -> VideoDims {
    VideoDims {
        width: 256,
        height: 256,
        frames: 1000,
        fps: 1000,
        channels: 4,
    }
}
