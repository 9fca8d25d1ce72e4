//! Per-element evaluation of the stencil catalog.
//!
//! Sequential and tiled execution both go through [`Prepared::eval`], with
//! taps visited in the same order, so their outputs agree bit for bit
//! whenever they read the same input values.

use alloc::vec::Vec;

use crate::kernel::{StencilOp, BLACK, WHITE};
use crate::sim::SimError;

#[derive(Clone, Debug, PartialEq)]
pub enum Prepared {
    Identity,
    Gray,
    Iir {
        alpha: f64,
    },
    /// Normalized weighted sum over `taps` (Gaussian, box mean).
    Weighted {
        taps: Vec<[i32; 3]>,
        weights: Vec<f64>,
    },
    Sobel,
    Threshold {
        level: f64,
    },
}

impl Prepared {
    pub fn new(op: &StencilOp) -> Result<Self, SimError> {
        Ok(match *op {
            StencilOp::Identity => Prepared::Identity,
            StencilOp::Rgba2Gray => Prepared::Gray,
            StencilOp::IirTemporal { alpha } => Prepared::Iir { alpha },
            StencilOp::Gaussian { sigma, .. } => {
                let taps = op.taps();
                let raw: Vec<f64> = taps
                    .iter()
                    .map(|&[dx, dy, _]| {
                        libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma))
                    })
                    .collect();
                let sum: f64 = raw.iter().sum();
                Prepared::Weighted {
                    taps,
                    weights: raw.into_iter().map(|w| w / sum).collect(),
                }
            }
            StencilOp::BoxMean { .. } => {
                let taps = op.taps();
                let w = 1.0 / taps.len() as f64;
                Prepared::Weighted {
                    weights: alloc::vec![w; taps.len()],
                    taps,
                }
            }
            StencilOp::Gradient => Prepared::Sobel,
            StencilOp::Threshold { level } => Prepared::Threshold { level },
            StencilOp::Kalman(_) => return Err(SimError::NotTileLocal(op.name())),
        })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Prepared::Iir { .. })
    }

    /// Input elements read per output element.
    pub fn reads_per_elem(&self) -> u64 {
        match self {
            Prepared::Gray => 3,
            Prepared::Weighted { taps, .. } => taps.len() as u64,
            Prepared::Sobel => 8,
            _ => 1,
        }
    }

    /// Output at `(x, y, t)` channel `c`; `read` resolves any coordinate
    /// (clamping is the caller's business). Not for the recurrent filter.
    pub fn eval(
        &self,
        read: &impl Fn(i64, i64, i64, usize) -> f32,
        x: i64,
        y: i64,
        t: i64,
        c: usize,
    ) -> f32 {
        match self {
            Prepared::Identity => read(x, y, t, c),
            Prepared::Gray => {
                0.299f32 * read(x, y, t, 0)
                    + 0.587f32 * read(x, y, t, 1)
                    + 0.114f32 * read(x, y, t, 2)
            }
            Prepared::Weighted { taps, weights } => {
                let mut acc = 0.0f64;
                for (&[dx, dy, dt], &w) in taps.iter().zip(weights) {
                    acc += w * read(x + dx as i64, y + dy as i64, t + dt as i64, c) as f64;
                }
                acc as f32
            }
            Prepared::Sobel => {
                let p = |dx: i64, dy: i64| read(x + dx, y + dy, t, c) as f64;
                let gx =
                    (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                let gy =
                    (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
                libm::sqrt(gx * gx + gy * gy) as f32
            }
            Prepared::Threshold { level } => {
                if read(x, y, t, c) as f64 >= *level {
                    WHITE
                } else {
                    BLACK
                }
            }
            Prepared::Iir { .. } => read(x, y, t, c),
        }
    }

    /// One step of the recurrent filter; `prev` is `None` on frame 0.
    pub fn step(&self, input: f32, prev: Option<f32>) -> f32 {
        match (self, prev) {
            (Prepared::Iir { alpha }, Some(p)) => {
                (alpha * input as f64 + (1.0 - alpha) * p as f64) as f32
            }
            _ => input,
        }
    }
}
