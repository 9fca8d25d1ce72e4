//! Linear execution-time model for one (possibly fused) kernel launch.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::device::CostParams;
use crate::halo::Halo;
use crate::kernel::KernelDesc;
use crate::tiling::{input_box, TileShape};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub t_access: f64,
    pub t_compute: f64,
    pub t_write: f64,
    pub launch: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.t_access + self.t_compute + self.t_write + self.launch
    }

    fn add(&mut self, other: &CostBreakdown) {
        self.t_access += other.t_access;
        self.t_compute += other.t_compute;
        self.t_write += other.t_write;
        self.launch += other.launch;
    }
}

/// Element and launch counts the cost is linear in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostFeatures {
    pub gmem_read_elems: f64,
    pub gmem_write_elems: f64,
    pub smem_elems: f64,
    /// Σ compute_weight × elements computed.
    pub compute_units: f64,
    pub launches: f64,
}

impl CostFeatures {
    pub fn breakdown(&self, p: &CostParams) -> CostBreakdown {
        CostBreakdown {
            t_access: p.gmem_cost_per_elem * self.gmem_read_elems,
            t_compute: p.compute_cost_unit * self.compute_units
                + p.smem_cost_per_elem * self.smem_elems,
            t_write: p.gmem_cost_per_elem * self.gmem_write_elems,
            launch: p.launch_overhead * self.launches,
        }
    }

    /// Design row `[G, S, C, L]` for fitting `CostParams`.
    pub fn design_row(&self) -> [f64; 4] {
        [
            self.gmem_read_elems + self.gmem_write_elems,
            self.smem_elems,
            self.compute_units,
            self.launches,
        ]
    }
}

/// Halo still owed after each member: `group − Σ_{j ≤ k} halo_j`, clamped at 0.
///
/// Member `k` computes its output over the tile grown by this amount so
/// that the members after it find their neighborhoods staged.
pub fn remaining_halos(kernels: &[KernelDesc], group_halo: &Halo) -> Vec<Halo> {
    let mut consumed = Halo::ZERO;
    kernels
        .iter()
        .map(|k| {
            consumed = consumed.sum(k.halo);
            group_halo.saturating_sub(consumed)
        })
        .collect()
}

pub fn group_features(
    kernels: &[KernelDesc],
    group_halo: &Halo,
    tile: TileShape,
    blocks: u64,
) -> CostFeatures {
    let b = blocks as f64;
    let mut smem = 0.0;
    let mut compute = 0.0;
    for (k, rem) in kernels.iter().zip(remaining_halos(kernels, group_halo)) {
        let region = input_box(tile, &rem).volume() as f64;
        let read = input_box(tile, &rem.sum(k.halo)).volume() as f64;
        compute += k.compute_weight * b * region;
        smem += b * (read + region);
    }
    CostFeatures {
        gmem_read_elems: b * input_box(tile, group_halo).volume() as f64,
        gmem_write_elems: b * tile.volume() as f64,
        smem_elems: smem,
        compute_units: compute,
        launches: 1.0,
    }
}

/// Time of one launch that runs `kernels` fused over `blocks` tiles.
pub fn predict_cost(
    kernels: &[KernelDesc],
    group_halo: &Halo,
    tile: TileShape,
    blocks: u64,
    params: &CostParams,
) -> CostBreakdown {
    group_features(kernels, group_halo, tile, blocks).breakdown(params)
}

/// Unfused sequence: one launch per kernel, each with its own halo.
pub fn predict_unfused(
    kernels: &[KernelDesc],
    tile: TileShape,
    blocks: u64,
    params: &CostParams,
) -> CostBreakdown {
    let mut total = CostBreakdown::default();
    for k in kernels {
        let one = core::slice::from_ref(k);
        total.add(&predict_cost(one, &k.halo, tile, blocks, params));
    }
    total
}

/// Features of a measured launch known only by its shape: `n` unit-weight
/// kernels sharing the group halo, each computing over the output box.
pub fn calibration_features(n: u32, blocks: u64, tile: TileShape, halo: &Halo) -> CostFeatures {
    let b = blocks as f64;
    let vin = input_box(tile, halo).volume() as f64;
    let vout = tile.volume() as f64;
    let n = n as f64;
    CostFeatures {
        gmem_read_elems: b * vin,
        gmem_write_elems: b * vout,
        smem_elems: n * b * (vin + vout),
        compute_units: n * b * vout,
        launches: 1.0,
    }
}
