//! CPU reference semantics: whole-video sequential execution, tiled fused
//! execution with traffic counters, output comparison, synthetic scenes and
//! the tracking stage.

pub mod compare;
pub mod exec;
pub mod stencil;
pub mod synth;
pub mod track;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::halo::Halo;
use crate::pipeline::KernelInterval;
use crate::tiling::TileShape;
use crate::video::VideoDims;

pub use compare::{compare_outputs, paper_max_masks, CompareReport, TileMask};
pub use exec::{
    apply_stencil, order_columns, run_sequential, run_tiled, tile_local_groups, BoxOrder,
    BoxRegion, Column, ColumnOutput, SequentialRun, TiledGroup, TiledRun,
};
pub use synth::{synth_video, Boundary, Marker, SyntheticScene, SyntheticSceneSpec};
pub use track::{track_features, Kalman, Roi, Trajectory, TrajectoryPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("video is {found:?}, expected {expected:?}")]
    DimMismatch { expected: [u32; 4], found: [u32; 4] },
    #[error("data length {found} does not match dims ({expected} elements)")]
    LengthMismatch { expected: usize, found: usize },
    #[error("stencil {0} is not tile-local and runs as a separate stage")]
    NotTileLocal(&'static str),
    #[error("groups do not cover the tile-local kernels in order (at kernel {0})")]
    Schedule(u32),
    #[error("recurrent state for frame {frame} was not produced by the previous box")]
    MissingCarry { frame: i64 },
    #[error("marker {marker} leaves the frame at frame {frame}")]
    MarkerLeavesFrame { marker: usize, frame: u32 },
    #[error("scene: {0}")]
    InvalidScene(&'static str),
    #[error("no regions of interest given")]
    EmptyRois,
}

/// Dense pixel volume, element order `[frame][y][x][channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoData {
    pub dims: VideoDims,
    data: Vec<f32>,
}

impl VideoData {
    pub fn zeros(dims: VideoDims) -> Self {
        VideoData {
            data: vec![0.0; dims.elements() as usize],
            dims,
        }
    }

    pub fn from_vec(dims: VideoDims, data: Vec<f32>) -> Result<Self, SimError> {
        let expected = dims.elements() as usize;
        if data.len() != expected {
            return Err(SimError::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(VideoData { dims, data })
    }

    pub fn from_fn(dims: VideoDims, f: impl Fn(u32, u32, u32, u32) -> f32) -> Self {
        let mut v = VideoData::zeros(dims);
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..dims.channels {
                        let i = v.index(x, y, t, c);
                        v.data[i] = f(x, y, t, c);
                    }
                }
            }
        }
        v
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn index(&self, x: u32, y: u32, t: u32, c: u32) -> usize {
        let d = &self.dims;
        (((t as usize * d.height as usize + y as usize) * d.width as usize + x as usize)
            * d.channels as usize)
            + c as usize
    }

    pub fn get(&self, x: u32, y: u32, t: u32, c: u32) -> f32 {
        self.data[self.index(x, y, t, c)]
    }

    pub fn set(&mut self, x: u32, y: u32, t: u32, c: u32, v: f32) {
        let i = self.index(x, y, t, c);
        self.data[i] = v;
    }

    /// Clamp-to-edge read.
    pub fn get_clamped(&self, x: i64, y: i64, t: i64, c: usize) -> f32 {
        let d = &self.dims;
        let x = x.clamp(0, d.width as i64 - 1) as u32;
        let y = y.clamp(0, d.height as i64 - 1) as u32;
        let t = t.clamp(0, d.frames as i64 - 1) as u32;
        self.get(x, y, t, c as u32)
    }

    pub fn frame(&self, t: u32) -> &[f32] {
        let n = self.dims.width as usize * self.dims.height as usize * self.dims.channels as usize;
        &self.data[t as usize * n..(t as usize + 1) * n]
    }

    /// Same geometry, ignoring the frame rate.
    pub fn shape(&self) -> [u32; 4] {
        shape_of(&self.dims)
    }
}

pub fn shape_of(d: &VideoDims) -> [u32; 4] {
    [d.width, d.height, d.frames, d.channels]
}

/// Element-transfer tallies. Counts are per pixel, not per channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCounters {
    pub gmem_reads: u64,
    pub gmem_writes: u64,
    pub smem_reads: u64,
    pub smem_writes: u64,
}

impl TrafficCounters {
    pub fn gmem_total(&self) -> u64 {
        self.gmem_reads + self.gmem_writes
    }
}

impl AddAssign for TrafficCounters {
    fn add_assign(&mut self, o: TrafficCounters) {
        self.gmem_reads += o.gmem_reads;
        self.gmem_writes += o.gmem_writes;
        self.smem_reads += o.smem_reads;
        self.smem_writes += o.smem_writes;
    }
}

/// One fused launch as the tiled executor sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub interval: KernelInterval,
    pub tile: TileShape,
    /// Staged halo; smaller than the members' summed halo under the max rule.
    pub halo: Halo,
}
