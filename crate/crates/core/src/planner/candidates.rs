use alloc::vec::Vec;

use serde::Serialize;

use crate::analysis::FusibleSegment;
use crate::device::Device;
use crate::halo::{Halo, HaloMode};
use crate::kernel::KernelDesc;
use crate::pipeline::KernelInterval;
use crate::planner::cost::{predict_cost, CostBreakdown};
use crate::tiling::{
    block_count, fused_halo, input_box, optimal_tile, LaunchLimits, StagingLayout,
    TileSearchResult, TileShape, TilingError,
};
use crate::video::VideoDims;

/// One contiguous run of a segment, sized and costed as a single launch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateFusedKernel {
    pub interval: KernelInterval,
    /// Membership over the segment's kernels; true exactly on `interval`.
    pub selector: Vec<bool>,
    pub halo: Halo,
    pub staging: StagingLayout,
    /// The 1×1×1 tile when infeasible.
    pub tile: TileShape,
    pub feasible: bool,
    pub search: Option<TileSearchResult>,
    pub breakdown: Option<CostBreakdown>,
    /// `+∞` when infeasible.
    pub cost: f64,
}

/// Tile search limits for a group on `device` over `video`.
pub fn group_limits(staging: &StagingLayout, device: &Device, video: &VideoDims) -> LaunchLimits {
    LaunchLimits {
        max_x: video.width.min(video.height),
        max_t: video.frames,
        max_input_elems: staging.budget_elems(device.smem_bytes),
        bytes_per_elem: staging.bytes_per_staged_elem(),
    }
}

/// Halo, tile and cost of running `kernels` as one launch.
pub fn size_group(
    kernels: &[KernelDesc],
    device: &Device,
    video: &VideoDims,
    mode: HaloMode,
) -> (
    Halo,
    StagingLayout,
    Result<(TileSearchResult, CostBreakdown), TilingError>,
) {
    let halo = fused_halo(kernels, mode);
    let staging = StagingLayout::for_group(kernels);
    let limits = group_limits(&staging, device, video);
    let sized = optimal_tile(&halo, limits.max_input_elems, &limits).map(|search| {
        let blocks = block_count(video, search.tile);
        let cost = predict_cost(kernels, &halo, search.tile, blocks, &device.cost);
        (search, cost)
    });
    (halo, staging, sized)
}

pub fn evaluate_candidate(
    segment: &FusibleSegment,
    interval: KernelInterval,
    device: &Device,
    video: &VideoDims,
    mode: HaloMode,
) -> CandidateFusedKernel {
    let kernels = segment.slice(interval);
    let (halo, staging, sized) = size_group(kernels, device, video, mode);
    let selector = segment
        .interval
        .ids()
        .map(|id| interval.contains(id))
        .collect();
    match sized {
        Ok((search, breakdown)) => CandidateFusedKernel {
            interval,
            selector,
            halo,
            staging,
            tile: search.tile,
            feasible: true,
            search: Some(search),
            cost: breakdown.total(),
            breakdown: Some(breakdown),
        },
        Err(_) => {
            let one = TileShape::new(1, 1, 1);
            debug_assert!(input_box(one, &halo).volume() > staging.budget_elems(device.smem_bytes));
            CandidateFusedKernel {
                interval,
                selector,
                halo,
                staging,
                tile: one,
                feasible: false,
                search: None,
                breakdown: None,
                cost: f64::INFINITY,
            }
        }
    }
}

/// Every contiguous interval of the segment, ordered by `(first, last)`.
pub fn enumerate_candidates(
    segment: &FusibleSegment,
    device: &Device,
    video: &VideoDims,
    mode: HaloMode,
) -> Vec<CandidateFusedKernel> {
    let (lo, hi) = (segment.interval.first, segment.interval.last);
    let mut out = Vec::with_capacity(segment.len() * (segment.len() + 1) / 2);
    for a in lo..=hi {
        for b in a..=hi {
            out.push(evaluate_candidate(
                segment,
                KernelInterval::new(a, b),
                device,
                video,
                mode,
            ));
        }
    }
    out
}
