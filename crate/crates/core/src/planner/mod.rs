//! Candidate enumeration, cost prediction and the optimal fusion partition.

pub mod candidates;
pub mod cost;
pub mod solve;

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{fusible_segments, FusibleSegment};
use crate::device::{Device, DeviceError};
use crate::halo::{Halo, HaloMode};
use crate::pipeline::{KernelInterval, Pipeline};
use crate::sim::GroupSpec;
use crate::tiling::{
    block_count, gmem_buffers, input_box, launch_config, BufferReport, LaunchConfig, StagingLayout,
    TileShape, TilingError, TransferReport, TransferVariant,
};

pub use candidates::{enumerate_candidates, evaluate_candidate, size_group, CandidateFusedKernel};
pub use cost::{predict_cost, predict_unfused, CostBreakdown, CostFeatures};
pub use solve::{solve_branch_and_bound, solve_dp, CostTable, Partition};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("forced interval {interval} is out of range: pipeline has {kernels} kernels")]
    OutOfRange {
        interval: KernelInterval,
        kernels: usize,
    },
    #[error("forced interval {0} crosses a kernel-to-kernel boundary")]
    CrossesKk(KernelInterval),
    #[error("forced intervals overlap at kernel {0}")]
    Overlap(u32),
    #[error("forced partition covers only part of segment {0}")]
    PartialSegment(KernelInterval),
    #[error("forced interval {interval} is infeasible: {source}")]
    InfeasibleForced {
        interval: KernelInterval,
        source: TilingError,
    },
    #[error("segment {0} has no feasible partition")]
    NoFeasiblePartition(KernelInterval),
    #[error("solvers disagree on segment {segment}: dp {dp}, branch-and-bound {bb}")]
    SolverDisagreement {
        segment: KernelInterval,
        dp: f64,
        bb: f64,
    },
    #[error("launch configuration for group {interval}: {source}")]
    Launch {
        interval: KernelInterval,
        source: TilingError,
    },
}

impl PlanError {
    /// Failures caused by resource limits rather than malformed input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            PlanError::InfeasibleForced { .. }
                | PlanError::NoFeasiblePartition(_)
                | PlanError::Launch { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanOptions {
    pub halo_mode: HaloMode,
    pub transfer_variant: TransferVariant,
    /// Intervals to use verbatim; segments they do not mention are optimized.
    pub forced: Option<Vec<KernelInterval>>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            halo_mode: HaloMode::Cumulative,
            transfer_variant: TransferVariant::Exact,
            forced: None,
        }
    }
}

/// One launch of the chosen partition with all of its metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannedGroup {
    pub interval: KernelInterval,
    pub kernels: Vec<String>,
    pub tile_local: bool,
    pub halo: Halo,
    pub staging: StagingLayout,
    pub tile: TileShape,
    pub input_box: TileShape,
    pub du: f64,
    pub smem_bytes: u64,
    pub launch: LaunchConfig,
    pub cost: CostBreakdown,
    pub total_cost: f64,
    pub transfers: TransferReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannedSegment {
    pub interval: KernelInterval,
    pub forced: bool,
    pub candidate_count: usize,
    pub groups: Vec<PlannedGroup>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FusionPlan {
    pub schema_version: u32,
    pub device: String,
    pub video: crate::video::VideoDims,
    pub halo_mode: HaloMode,
    pub transfer_variant: TransferVariant,
    pub segments: Vec<PlannedSegment>,
    pub total_cost: f64,
    pub buffers: BufferReport,
    pub buffers_unfused: BufferReport,
}

impl FusionPlan {
    pub fn groups(&self) -> impl Iterator<Item = &PlannedGroup> {
        self.segments.iter().flat_map(|s| s.groups.iter())
    }

    pub fn partition(&self) -> Vec<KernelInterval> {
        self.groups().map(|g| g.interval).collect()
    }

    /// Group shapes for the tiled executor.
    pub fn group_specs(&self) -> Vec<GroupSpec> {
        self.groups()
            .map(|g| GroupSpec {
                interval: g.interval,
                tile: g.tile,
                halo: g.halo,
            })
            .collect()
    }
}

fn plan_group(
    pipeline: &Pipeline,
    interval: KernelInterval,
    device: &Device,
    options: &PlanOptions,
) -> Result<PlannedGroup, PlanError> {
    let kernels = pipeline.slice(interval);
    let video = &pipeline.video;
    let (halo, staging, sized) = size_group(kernels, device, video, options.halo_mode);
    let (search, cost) =
        sized.map_err(|source| PlanError::InfeasibleForced { interval, source })?;
    let tile = search.tile;
    let blocks = block_count(video, tile);
    let smem_bytes = staging.smem_bytes(input_box(tile, &halo));
    let launch = launch_config(device, video, tile, smem_bytes)
        .map_err(|source| PlanError::Launch { interval, source })?;
    Ok(PlannedGroup {
        interval,
        kernels: kernels.iter().map(|k| k.name.clone()).collect(),
        tile_local: kernels.iter().all(|k| k.is_tile_local()),
        halo,
        staging,
        tile,
        input_box: input_box(tile, &halo),
        du: search.du,
        smem_bytes,
        launch,
        total_cost: cost.total(),
        cost,
        transfers: TransferReport::new(
            kernels.len() as u64,
            blocks,
            tile,
            &halo,
            options.transfer_variant,
        ),
    })
}

/// Minimum-cost cover of one segment, cross-checked by both solvers.
pub fn optimal_partition(
    segment: &FusibleSegment,
    device: &Device,
    video: &crate::video::VideoDims,
    mode: HaloMode,
) -> Result<(Vec<KernelInterval>, f64, usize), PlanError> {
    let cands = enumerate_candidates(segment, device, video, mode);
    let first = segment.interval.first;
    let n = segment.len();
    let table = CostTable::from_fn(n, |a, b| {
        let iv = KernelInterval::new(first + a as u32, first + b as u32);
        cands
            .iter()
            .find(|c| c.interval == iv)
            .map_or(f64::INFINITY, |c| c.cost)
    });
    let dp = solve_dp(&table);
    let bb = solve_branch_and_bound(&table);
    let (dp, bb) = match (dp, bb) {
        (Some(dp), Some(bb)) => (dp, bb),
        (None, None) => return Err(PlanError::NoFeasiblePartition(segment.interval)),
        (dp, bb) => {
            return Err(PlanError::SolverDisagreement {
                segment: segment.interval,
                dp: dp.map_or(f64::INFINITY, |p| p.cost),
                bb: bb.map_or(f64::INFINITY, |p| p.cost),
            })
        }
    };
    if dp.cost != bb.cost {
        return Err(PlanError::SolverDisagreement {
            segment: segment.interval,
            dp: dp.cost,
            bb: bb.cost,
        });
    }
    let intervals = dp
        .intervals()
        .into_iter()
        .map(|(a, b)| KernelInterval::new(first + a as u32, first + b as u32))
        .collect();
    Ok((intervals, dp.cost, cands.len()))
}

fn forced_for_segment(
    seg: &FusibleSegment,
    forced: &[KernelInterval],
) -> Result<Option<Vec<KernelInterval>>, PlanError> {
    let mut mine: Vec<KernelInterval> = forced
        .iter()
        .copied()
        .filter(|iv| iv.first <= seg.interval.last && iv.last >= seg.interval.first)
        .collect();
    if mine.is_empty() {
        return Ok(None);
    }
    for iv in &mine {
        if iv.first < seg.interval.first || iv.last > seg.interval.last {
            return Err(PlanError::CrossesKk(*iv));
        }
    }
    mine.sort();
    let mut next = seg.interval.first;
    for iv in &mine {
        if iv.first != next {
            return Err(PlanError::PartialSegment(seg.interval));
        }
        next = iv.last + 1;
    }
    if next != seg.interval.last + 1 {
        return Err(PlanError::PartialSegment(seg.interval));
    }
    Ok(Some(mine))
}

fn check_forced(pipeline: &Pipeline, forced: &[KernelInterval]) -> Result<(), PlanError> {
    let n = pipeline.len();
    let mut owner = alloc::vec![false; n + 1];
    for iv in forced {
        if iv.last as usize > n || iv.first == 0 {
            return Err(PlanError::OutOfRange {
                interval: *iv,
                kernels: n,
            });
        }
        for id in iv.ids() {
            if owner[id as usize] {
                return Err(PlanError::Overlap(id));
            }
            owner[id as usize] = true;
        }
    }
    Ok(())
}

/// Segments the pipeline, partitions each segment (optimally or as forced)
/// and attaches per-group metrics.
pub fn plan(
    pipeline: &Pipeline,
    device: &Device,
    options: &PlanOptions,
) -> Result<FusionPlan, PlanError> {
    device.validate()?;
    if let Some(forced) = &options.forced {
        check_forced(pipeline, forced)?;
    }
    let mut segments = Vec::new();
    let mut total_cost = 0.0;
    for seg in fusible_segments(pipeline) {
        let forced = match &options.forced {
            Some(f) => forced_for_segment(&seg, f)?,
            None => None,
        };
        let n = seg.len();
        let (intervals, is_forced, candidate_count) = match forced {
            Some(ivs) => (ivs, true, n * (n + 1) / 2),
            None => {
                let (ivs, _, count) =
                    optimal_partition(&seg, device, &pipeline.video, options.halo_mode)?;
                (ivs, false, count)
            }
        };
        let groups = intervals
            .iter()
            .map(|&iv| plan_group(pipeline, iv, device, options))
            .collect::<Result<Vec<_>, _>>()?;
        let cost = groups.iter().fold(0.0, |acc, g| acc + g.total_cost);
        total_cost += cost;
        segments.push(PlannedSegment {
            interval: seg.interval,
            forced: is_forced,
            candidate_count,
            groups,
            cost,
        });
    }
    let partition: Vec<KernelInterval> = segments
        .iter()
        .flat_map(|s| s.groups.iter().map(|g| g.interval))
        .collect();
    let singles: Vec<KernelInterval> = (1..=pipeline.len() as u32)
        .map(KernelInterval::single)
        .collect();
    Ok(FusionPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        device: device.name.clone(),
        video: pipeline.video,
        halo_mode: options.halo_mode,
        transfer_variant: options.transfer_variant,
        segments,
        total_cost,
        buffers: gmem_buffers(pipeline, &partition),
        buffers_unfused: gmem_buffers(pipeline, &singles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{bundled_pipeline, bundled_video, parse_partition};

    fn bundled() -> Pipeline {
        bundled_pipeline(bundled_video()).unwrap()
    }

    #[test]
    fn bundled_defaults_select_full_fusion() {
        let p = plan(&bundled(), &Device::k20_like(), &PlanOptions::default()).unwrap();
        assert_eq!(
            p.partition(),
            [KernelInterval::new(1, 5), KernelInterval::single(6)]
        );
        assert_eq!(p.schema_version, PLAN_SCHEMA_VERSION);
        assert_eq!(p.buffers.count, 3);
        assert_eq!(p.buffers_unfused.count, 7);
        assert_eq!(p.segments[0].candidate_count, 15);
    }

    #[test]
    fn paper_max_also_fuses_everything() {
        let opts = PlanOptions {
            halo_mode: HaloMode::PaperMax,
            ..Default::default()
        };
        let p = plan(&bundled(), &Device::c1060_like(), &opts).unwrap();
        assert_eq!(p.partition()[0], KernelInterval::new(1, 5));
        assert_eq!(p.groups().next().unwrap().halo, Halo::spatial(2, 2));
    }

    #[test]
    fn forced_two_fusion() {
        let opts = PlanOptions {
            forced: Some(parse_partition("1-2,3-5").unwrap()),
            ..Default::default()
        };
        let p = plan(&bundled(), &Device::k20_like(), &opts).unwrap();
        assert_eq!(
            p.partition(),
            [
                KernelInterval::new(1, 2),
                KernelInterval::new(3, 5),
                KernelInterval::single(6)
            ]
        );
        assert!(p.segments[0].forced);
        assert!(!p.segments[1].forced);
        assert_eq!(p.buffers.count, 4);
        let full = plan(&bundled(), &Device::k20_like(), &PlanOptions::default()).unwrap();
        assert!(full.total_cost <= p.total_cost);
    }

    #[test]
    fn forced_no_fusion_traffic_is_serial() {
        let opts = PlanOptions {
            forced: Some(parse_partition("1,2,3,4,5").unwrap()),
            ..Default::default()
        };
        let p = plan(&bundled(), &Device::k20_like(), &opts).unwrap();
        for g in p.groups().filter(|g| g.halo.is_zero()) {
            assert_eq!(g.transfers.fused_exact_elems, g.transfers.serial_elems);
        }
    }

    #[test]
    fn forced_errors() {
        let run = |s: &str| {
            let opts = PlanOptions {
                forced: Some(parse_partition(s).unwrap()),
                ..Default::default()
            };
            plan(&bundled(), &Device::k20_like(), &opts)
        };
        assert!(matches!(run("1-6"), Err(PlanError::CrossesKk(_))));
        assert!(matches!(run("1-3,3-5"), Err(PlanError::Overlap(3))));
        assert!(matches!(run("1-3"), Err(PlanError::PartialSegment(_))));
        assert!(matches!(run("1-9"), Err(PlanError::OutOfRange { .. })));
    }

    #[test]
    fn infeasible_forced_interval() {
        let mut d = Device::k20_like();
        d.smem_bytes = 2 * 4 * 40;
        let opts = PlanOptions {
            forced: Some(parse_partition("1-5").unwrap()),
            ..Default::default()
        };
        let err = plan(&bundled(), &d, &opts).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn plan_is_deterministic() {
        let a = plan(&bundled(), &Device::k20_like(), &PlanOptions::default()).unwrap();
        let b = plan(&bundled(), &Device::k20_like(), &PlanOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
