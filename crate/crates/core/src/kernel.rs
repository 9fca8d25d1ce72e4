use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::classify_operation;
use crate::halo::Halo;

/// Operation classes by data-access pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperationType {
    SinglePoint,
    Rectangular,
    SingleFrame,
    MultiFrame,
    SpatioTemporal,
}

impl OperationType {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperationType::SinglePoint => "SinglePoint",
            OperationType::Rectangular => "Rectangular",
            OperationType::SingleFrame => "SingleFrame",
            OperationType::MultiFrame => "MultiFrame",
            OperationType::SpatioTemporal => "SpatioTemporal",
        }
    }
}

impl fmt::Display for OperationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dependency of a kernel on the output of its predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DependencyType {
    /// Thread to thread: each output element needs only the matching input element.
    TT,
    /// Thread to multi-thread: needs a neighborhood computed by several threads of one block.
    TMT,
    /// Kernel to kernel: needs the output of many blocks; not fusible.
    KK,
}

impl DependencyType {
    pub fn long_name(&self) -> &'static str {
        match self {
            DependencyType::TT => "Thread to Thread",
            DependencyType::TMT => "Thread to Multi-thread",
            DependencyType::KK => "Kernel to Kernel",
        }
    }
}

impl fmt::Display for DependencyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DependencyType::TT => "TT",
            DependencyType::TMT => "TMT",
            DependencyType::KK => "KK",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    TileLocal,
    /// Output depends on data outside any bounded tile (tracking, reductions).
    GlobalAggregation,
}

/// Constant-velocity Kalman tracker settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_covariance: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams {
            process_noise: 0.01,
            measurement_noise: 0.25,
            initial_covariance: 10.0,
        }
    }
}

/// The catalog of per-element functions a kernel can apply.
#[derive(Clone, Debug, PartialEq)]
pub enum StencilOp {
    Identity,
    /// Luminance `0.299 R + 0.587 G + 0.114 B`; alpha is dropped.
    Rgba2Gray,
    /// `out[t] = α·in[t] + (1 − α)·out[t − 1]`, `out[0] = in[0]`.
    IirTemporal {
        alpha: f64,
    },
    /// Normalized `(2r+1)²` Gaussian.
    Gaussian {
        radius: u32,
        sigma: f64,
    },
    /// 3×3 Sobel gradient magnitude.
    Gradient,
    /// `WHITE` (255) where `in >= level`, else `BLACK` (0).
    Threshold {
        level: f64,
    },
    /// Mean over a separable box window; the generic stencil of the catalog.
    BoxMean {
        rx: u32,
        ry: u32,
        rt_lo: u32,
        rt_hi: u32,
    },
    /// Feature tracking; executed as a sequential stage, never tiled.
    Kalman(KalmanParams),
}

pub const WHITE: f32 = 255.0;
pub const BLACK: f32 = 0.0;

impl StencilOp {
    pub fn name(&self) -> &'static str {
        match self {
            StencilOp::Identity => "identity",
            StencilOp::Rgba2Gray => "rgba2gray",
            StencilOp::IirTemporal { .. } => "iir_temporal",
            StencilOp::Gaussian { .. } => "gaussian",
            StencilOp::Gradient => "gradient",
            StencilOp::Threshold { .. } => "threshold",
            StencilOp::BoxMean { .. } => "box_mean",
            StencilOp::Kalman(_) => "kalman",
        }
    }

    /// Input padding the operation reads around each output element.
    pub fn footprint(&self) -> Halo {
        match *self {
            StencilOp::Gaussian { radius, .. } => Halo::spatial(radius, radius),
            StencilOp::Gradient => Halo::spatial(1, 1),
            StencilOp::BoxMean {
                rx,
                ry,
                rt_lo,
                rt_hi,
            } => Halo::new(rx, rx, ry, ry, rt_lo, rt_hi),
            _ => Halo::ZERO,
        }
    }

    pub fn multi_frame(&self) -> bool {
        match self {
            StencilOp::IirTemporal { .. } | StencilOp::Kalman(_) => true,
            StencilOp::BoxMean { rt_lo, rt_hi, .. } => rt_lo + rt_hi > 0,
            _ => false,
        }
    }

    /// Carries per-pixel state from frame to frame inside the owning thread.
    pub fn temporal_recurrence(&self) -> bool {
        matches!(self, StencilOp::IirTemporal { .. })
    }

    pub fn output_channels(&self, input: u32) -> Option<u32> {
        match self {
            StencilOp::Rgba2Gray => matches!(input, 3 | 4).then_some(1),
            StencilOp::Kalman(_) => (input == 1).then_some(1),
            _ => Some(input),
        }
    }

    pub fn default_compute_weight(&self) -> f64 {
        match *self {
            StencilOp::IirTemporal { .. } => 2.0,
            StencilOp::Gaussian { radius, .. } => {
                let d = (2 * radius + 1) as f64;
                d * d
            }
            StencilOp::Gradient => 9.0,
            StencilOp::BoxMean {
                rx,
                ry,
                rt_lo,
                rt_hi,
            } => ((2 * rx + 1) * (2 * ry + 1) * (rt_lo + rt_hi + 1)) as f64,
            _ => 1.0,
        }
    }

    pub fn default_op_type(&self) -> OperationType {
        classify_operation(&self.footprint(), self.multi_frame()).primary
    }

    /// Input displacements `(dx, dy, dt)` read for one output element, in
    /// evaluation order.
    pub fn taps(&self) -> Vec<[i32; 3]> {
        let mut taps = Vec::new();
        match *self {
            StencilOp::Gaussian { radius, .. } => {
                let r = radius as i32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        taps.push([dx, dy, 0]);
                    }
                }
            }
            StencilOp::Gradient => {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx != 0 || dy != 0 {
                            taps.push([dx, dy, 0]);
                        }
                    }
                }
            }
            StencilOp::BoxMean {
                rx,
                ry,
                rt_lo,
                rt_hi,
            } => {
                let (rx, ry) = (rx as i32, ry as i32);
                for dt in -(rt_lo as i32)..=rt_hi as i32 {
                    for dy in -ry..=ry {
                        for dx in -rx..=rx {
                            taps.push([dx, dy, dt]);
                        }
                    }
                }
            }
            _ => taps.push([0, 0, 0]),
        }
        taps
    }

    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        let finite = |v: f64| v.is_finite();
        match *self {
            StencilOp::IirTemporal { alpha } if !(finite(alpha) && alpha > 0.0 && alpha <= 1.0) => {
                Err(("alpha", "must lie in (0, 1]"))
            }
            StencilOp::Gaussian { sigma, .. } if !(finite(sigma) && sigma > 0.0) => {
                Err(("sigma", "must be positive"))
            }
            StencilOp::Threshold { level } if !finite(level) => Err(("level", "must be finite")),
            StencilOp::Kalman(p)
                if !(p.process_noise >= 0.0
                    && p.measurement_noise > 0.0
                    && p.initial_covariance > 0.0
                    && finite(p.process_noise + p.measurement_noise + p.initial_covariance)) =>
            {
                Err((
                    "process_noise",
                    "noise terms must be finite, covariances positive",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// One kernel of a pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDesc {
    /// 1-based position in the pipeline.
    pub id: u32,
    pub name: String,
    pub op_type: OperationType,
    pub halo: Halo,
    pub scope: Scope,
    pub stencil_op: StencilOp,
    pub in_bytes_per_elem: u32,
    pub out_bytes_per_elem: u32,
    pub compute_weight: f64,
}

impl KernelDesc {
    /// Kernel with every derived field (halo, class, scope, weight) taken
    /// from the catalog defaults for `op`.
    pub fn from_op(
        id: u32,
        name: impl Into<String>,
        op: StencilOp,
        in_bytes_per_elem: u32,
        out_bytes_per_elem: u32,
    ) -> Self {
        let scope = if matches!(op, StencilOp::Kalman(_)) {
            Scope::GlobalAggregation
        } else {
            Scope::TileLocal
        };
        KernelDesc {
            id,
            name: name.into(),
            op_type: op.default_op_type(),
            halo: op.footprint(),
            scope,
            compute_weight: op.default_compute_weight(),
            stencil_op: op,
            in_bytes_per_elem,
            out_bytes_per_elem,
        }
    }

    pub fn is_tile_local(&self) -> bool {
        self.scope == Scope::TileLocal
    }

    /// Widest element this kernel reads or writes.
    pub fn max_elem_bytes(&self) -> u32 {
        self.in_bytes_per_elem.max(self.out_bytes_per_elem)
    }
}
