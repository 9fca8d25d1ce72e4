//! Box arithmetic for one thread block: halo composition, data utilization,
//! the optimal tile search, analytic transfer counts, occupancy, and GMEM
//! buffer accounting.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::Device;
use crate::halo::{Halo, HaloMode};
use crate::kernel::KernelDesc;
use crate::pipeline::{KernelInterval, Pipeline};
use crate::video::VideoDims;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TilingError {
    #[error("no feasible tile: the smallest box needs {needed} elements, budget is {budget}")]
    NoFeasibleTile { needed: u64, budget: u64 },
    #[error("block needs {needed} bytes of shared memory, device has {available}")]
    SmemOverflow { needed: u64, available: u64 },
    #[error("{threads} threads per block exceeds the device limit of {limit}")]
    TooManyThreads { threads: u32, limit: u32 },
}

/// Output box of one thread block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileShape {
    pub x: u32,
    pub y: u32,
    pub t: u32,
}

impl TileShape {
    pub const fn new(x: u32, y: u32, t: u32) -> Self {
        TileShape { x, y, t }
    }

    pub fn volume(&self) -> u64 {
        self.x as u64 * self.y as u64 * self.t as u64
    }

    pub fn dims(&self) -> [u32; 3] {
        [self.x, self.y, self.t]
    }

    /// The whole video as one tile.
    pub fn covering(video: &VideoDims) -> Self {
        TileShape::new(video.width, video.height, video.frames)
    }
}

/// Halo of a fused group.
pub fn fused_halo(kernels: &[KernelDesc], mode: HaloMode) -> Halo {
    kernels.iter().fold(Halo::ZERO, |acc, k| match mode {
        HaloMode::PaperMax => acc.max(k.halo),
        HaloMode::Cumulative => acc.sum(k.halo),
    })
}

/// Input box `(x + δx, y + δy, t + δt)`.
pub fn input_box(tile: TileShape, halo: &Halo) -> TileShape {
    TileShape::new(tile.x + halo.dx(), tile.y + halo.dy(), tile.t + halo.dt())
}

/// Ceiling cover of the video by tiles.
pub fn block_count(video: &VideoDims, tile: TileShape) -> u64 {
    let cover = |n: u32, d: u32| n.div_ceil(d) as u64;
    cover(video.width, tile.x) * cover(video.height, tile.y) * cover(video.frames, tile.t)
}

/// Exact `x·y·t / ((x+δx)(y+δy)(t+δt))` as a numerator/denominator pair.
pub fn du_ratio(tile: TileShape, halo: &Halo) -> (u128, u128) {
    (
        tile.volume() as u128,
        input_box(tile, halo).volume() as u128,
    )
}

pub fn data_utilization(tile: TileShape, halo: &Halo) -> f64 {
    let (num, den) = du_ratio(tile, halo);
    num as f64 / den as f64
}

/// Utilization with the zero-when-infeasible convention: a box whose input
/// box exceeds `budget_elems` reports `(0.0, false)`.
pub fn data_utilization_within(tile: TileShape, halo: &Halo, budget_elems: u64) -> (f64, bool) {
    if input_box(tile, halo).volume() > budget_elems {
        (0.0, false)
    } else {
        (data_utilization(tile, halo), true)
    }
}

/// `V = (x + δx)(y + δy)(t + δt)`, the quantity minimized at fixed volume.
pub fn objective_v(tile: TileShape, halo: &Halo) -> u64 {
    input_box(tile, halo).volume()
}

/// Constraints on the tile search beyond `x·y·t ≤ budget`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchLimits {
    pub max_x: u32,
    pub max_t: u32,
    /// Cap on the input-box volume (staged elements); `u64::MAX` disables it.
    pub max_input_elems: u64,
    /// Bytes per staged element, used for `smem_bytes_used`.
    pub bytes_per_elem: u64,
}

impl Default for LaunchLimits {
    fn default() -> Self {
        LaunchLimits {
            max_x: u32::MAX,
            max_t: u32::MAX,
            max_input_elems: u64::MAX,
            bytes_per_elem: 1,
        }
    }
}

/// Continuous stationary point of `V` under `x²t = budget`:
/// `x³·δt = budget·δx`, `t = budget / x²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSeed {
    pub x: f64,
    pub t: f64,
}

pub fn continuous_seed(halo: &Halo, budget_elems: u64) -> ContinuousSeed {
    let b = budget_elems as f64;
    let (dx, dt) = (halo.dx() as f64, halo.dt() as f64);
    let x_cap = libm::sqrt(b);
    let x = if dt == 0.0 {
        x_cap
    } else if dx == 0.0 {
        1.0
    } else {
        libm::cbrt(b * dx / dt).clamp(1.0, x_cap)
    };
    ContinuousSeed { x, t: b / (x * x) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSearchResult {
    pub tile: TileShape,
    pub du: f64,
    pub objective_v: u64,
    pub feasible: bool,
    pub smem_bytes_used: u64,
    pub seed: ContinuousSeed,
}

/// Ordering used to pick among tiles: higher DU, then larger `t`, then larger `x`.
pub fn compare_tiles(a: TileShape, b: TileShape, halo: &Halo) -> Ordering {
    let (an, ad) = du_ratio(a, halo);
    let (bn, bd) = du_ratio(b, halo);
    (an * bd)
        .cmp(&(bn * ad))
        .then(a.t.cmp(&b.t))
        .then(a.x.cmp(&b.x))
}

/// Largest feasible `t` for a square `x × x` tile, if any.
fn max_t_for(x: u32, halo: &Halo, budget: u64, limits: &LaunchLimits) -> Option<u32> {
    let xx = x as u64 * x as u64;
    let mut t = (budget / xx).min(limits.max_t as u64);
    let face = (x as u64 + halo.dx() as u64) * (x as u64 + halo.dy() as u64);
    if limits.max_input_elems != u64::MAX {
        let by_input = (limits.max_input_elems / face).saturating_sub(halo.dt() as u64);
        t = t.min(by_input);
    }
    (t >= 1).then(|| t.min(u32::MAX as u64) as u32)
}

/// Square tile `(x, x, t)` maximizing data utilization subject to
/// `x²t ≤ budget` and `limits`.
///
/// For a fixed `x`, DU never decreases with `t`, so the best tile at each
/// `x` uses the largest feasible `t`. The search walks outward from the
/// continuous seed over every feasible `x` (at most `√budget` of them) and
/// compares candidates exactly.
pub fn optimal_tile(
    halo: &Halo,
    budget_elems: u64,
    limits: &LaunchLimits,
) -> Result<TileSearchResult, TilingError> {
    let seed = continuous_seed(halo, budget_elems);
    let x_cap = (isqrt(budget_elems).min(limits.max_x as u64)) as u32;
    let start = (libm::round(seed.x) as u32).clamp(1, x_cap.max(1));

    let mut best: Option<TileShape> = None;
    let mut consider = |x: u32| {
        if let Some(t) = max_t_for(x, halo, budget_elems, limits) {
            let cand = TileShape::new(x, x, t);
            if best.is_none_or(|b| compare_tiles(cand, b, halo) == Ordering::Greater) {
                best = Some(cand);
            }
        }
    };
    if x_cap >= 1 {
        consider(start);
        let (mut lo, mut hi) = (start, start);
        while lo > 1 || hi < x_cap {
            if lo > 1 {
                lo -= 1;
                consider(lo);
            }
            if hi < x_cap {
                hi += 1;
                consider(hi);
            }
        }
    }
    let tile = best.ok_or(TilingError::NoFeasibleTile {
        needed: input_box(TileShape::new(1, 1, 1), halo).volume(),
        budget: budget_elems.min(limits.max_input_elems),
    })?;
    let v = objective_v(tile, halo);
    Ok(TileSearchResult {
        tile,
        du: data_utilization(tile, halo),
        objective_v: v,
        feasible: true,
        smem_bytes_used: v * limits.bytes_per_elem,
        seed,
    })
}

fn isqrt(n: u64) -> u64 {
    let mut r = libm::sqrt(n as f64) as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Which fused-transfer count to headline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferVariant {
    /// `2·B·x·y·t + (x·δy + y·δx + δx·δy)(t + δt)`, evaluated as printed.
    Paper,
    /// `B · [(x+δx)(y+δy)(t+δt) + x·y·t]`: full input box read, output box written.
    Exact,
}

impl TransferVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferVariant::Paper => "paper",
            TransferVariant::Exact => "exact",
        }
    }
}

/// GMEM elements moved by `n` unfused kernels: `2·n·B·x·y·t`.
pub fn transfer_serial(n: u64, blocks: u64, tile: TileShape) -> u64 {
    2 * n * blocks * tile.volume()
}

pub fn transfer_fused(blocks: u64, tile: TileShape, halo: &Halo, variant: TransferVariant) -> u64 {
    let (x, y, t) = (tile.x as u64, tile.y as u64, tile.t as u64);
    let (dx, dy, dt) = (halo.dx() as u64, halo.dy() as u64, halo.dt() as u64);
    match variant {
        TransferVariant::Paper => 2 * blocks * x * y * t + (x * dy + y * dx + dx * dy) * (t + dt),
        TransferVariant::Exact => blocks * (input_box(tile, halo).volume() + tile.volume()),
    }
}

/// Exact per-box count when tiles do not divide the video: edge boxes are
/// clipped to the video and read their clipped extent plus the full halo.
pub fn transfer_fused_ragged(video: &VideoDims, tile: TileShape, halo: &Halo) -> u64 {
    let extents = |n: u32, d: u32| -> Vec<u64> {
        (0..n.div_ceil(d))
            .map(|i| (d.min(n - i * d)) as u64)
            .collect()
    };
    let xs = extents(video.width, tile.x);
    let ys = extents(video.height, tile.y);
    let ts = extents(video.frames, tile.t);
    let (dx, dy, dt) = (halo.dx() as u64, halo.dy() as u64, halo.dt() as u64);
    let mut total = 0;
    for &t in &ts {
        for &y in &ys {
            for &x in &xs {
                total += (x + dx) * (y + dy) * (t + dt) + x * y * t;
            }
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub serial_elems: u64,
    pub fused_paper_elems: u64,
    pub fused_exact_elems: u64,
    /// `100 · (1 − fused / serial)` for the selected variant.
    pub reduction_pct: f64,
}

impl TransferReport {
    pub fn new(
        n: u64,
        blocks: u64,
        tile: TileShape,
        halo: &Halo,
        variant: TransferVariant,
    ) -> Self {
        let serial_elems = transfer_serial(n, blocks, tile);
        let fused_paper_elems = transfer_fused(blocks, tile, halo, TransferVariant::Paper);
        let fused_exact_elems = transfer_fused(blocks, tile, halo, TransferVariant::Exact);
        let fused = match variant {
            TransferVariant::Paper => fused_paper_elems,
            TransferVariant::Exact => fused_exact_elems,
        };
        TransferReport {
            serial_elems,
            fused_paper_elems,
            fused_exact_elems,
            reduction_pct: 100.0 * (1.0 - fused as f64 / serial_elems as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub blocks_per_sm: u32,
    pub occupancy: f64,
}

/// Resident blocks per SM and the warp-occupancy ratio.
pub fn occupancy(
    device: &Device,
    threads_per_block: u32,
    smem_per_block: u64,
) -> Result<Occupancy, TilingError> {
    if threads_per_block > device.max_threads_per_block {
        return Err(TilingError::TooManyThreads {
            threads: threads_per_block,
            limit: device.max_threads_per_block,
        });
    }
    if smem_per_block > device.smem_bytes {
        return Err(TilingError::SmemOverflow {
            needed: smem_per_block,
            available: device.smem_bytes,
        });
    }
    let threads = threads_per_block.max(1);
    let by_smem = device
        .smem_bytes
        .checked_div(smem_per_block)
        .unwrap_or(u64::MAX)
        .min(u32::MAX as u64) as u32;
    let by_threads = device.max_warps_per_sm * device.warp_size / threads;
    let blocks_per_sm = by_smem.min(device.max_blocks_per_sm).min(by_threads);
    let warps = blocks_per_sm as u64 * threads.div_ceil(device.warp_size) as u64;
    let occ = (warps as f64 / device.max_warps_per_sm as f64).clamp(0.0, 1.0);
    Ok(Occupancy {
        blocks_per_sm,
        occupancy: occ,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaunchConfig {
    /// `(Th_x, Th_y, Th_t)`.
    pub threads: [u32; 3],
    /// Serial pixels per thread along each spatial axis.
    pub pixels_per_thread: u32,
    pub blocks: u64,
    pub blocks_per_sm: u32,
    pub occupancy: f64,
}

/// One thread per output pixel column, folded into `PixelPerThread` loops
/// once the block would exceed the thread limit.
pub fn thread_layout(tile: TileShape, max_threads_per_block: u32) -> ([u32; 3], u32) {
    let mut ppt = 1u32;
    loop {
        let tx = tile.x.div_ceil(ppt);
        let ty = tile.y.div_ceil(ppt);
        if (tx as u64 * ty as u64) <= max_threads_per_block as u64 || (tx == 1 && ty == 1) {
            return ([tx, ty, 1], ppt);
        }
        ppt += 1;
    }
}

pub fn launch_config(
    device: &Device,
    video: &VideoDims,
    tile: TileShape,
    smem_per_block: u64,
) -> Result<LaunchConfig, TilingError> {
    let (threads, ppt) = thread_layout(tile, device.max_threads_per_block);
    let occ = occupancy(device, threads[0] * threads[1] * threads[2], smem_per_block)?;
    Ok(LaunchConfig {
        threads,
        pixels_per_thread: ppt,
        blocks: block_count(video, tile),
        blocks_per_sm: occ.blocks_per_sm,
        occupancy: occ.occupancy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferReport {
    pub count: u32,
    pub bytes: u64,
    pub policy: String,
}

pub const BUFFER_POLICY: &str =
    "one input buffer plus one output buffer per fused group; a group's output is the next group's input";

/// GMEM buffers for a partition of the whole pipeline.
pub fn gmem_buffers(pipeline: &Pipeline, partition: &[KernelInterval]) -> BufferReport {
    let pixels = pipeline.video.pixels();
    let first = &pipeline.kernels()[0];
    let mut bytes = pixels * first.in_bytes_per_elem as u64;
    for iv in partition {
        let last = &pipeline.kernels()[iv.last as usize - 1];
        bytes += pixels * last.out_bytes_per_elem as u64;
    }
    BufferReport {
        count: partition.len() as u32 + 1,
        bytes,
        policy: String::from(BUFFER_POLICY),
    }
}

/// How a fused group holds its box in shared memory.
///
/// Members that read neighbors cannot update the staged box in place, so a
/// group with any non-zero member halo stages into two ping-pong arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagingLayout {
    pub elem_bytes: u32,
    pub buffers: u32,
}

impl StagingLayout {
    pub fn for_group(kernels: &[KernelDesc]) -> Self {
        let elem_bytes = kernels
            .iter()
            .map(KernelDesc::max_elem_bytes)
            .max()
            .unwrap_or(1);
        let buffers = if kernels.iter().any(|k| !k.halo.is_zero()) {
            2
        } else {
            1
        };
        StagingLayout {
            elem_bytes,
            buffers,
        }
    }

    pub fn bytes_per_staged_elem(&self) -> u64 {
        self.elem_bytes as u64 * self.buffers as u64
    }

    /// Input-box elements that fit in `smem_bytes`.
    pub fn budget_elems(&self, smem_bytes: u64) -> u64 {
        smem_bytes / self.bytes_per_staged_elem()
    }

    pub fn smem_bytes(&self, input_box: TileShape) -> u64 {
        input_box.volume() * self.bytes_per_staged_elem()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::StencilOp;
    use crate::pipeline::{bundled_pipeline, bundled_video};

    fn gauss(id: u32, r: u32) -> KernelDesc {
        KernelDesc::from_op(
            id,
            "g",
            StencilOp::Gaussian {
                radius: r,
                sigma: 1.0,
            },
            4,
            4,
        )
    }

    #[test]
    fn fused_halo_modes() {
        let ks = [gauss(1, 1), gauss(2, 2)];
        assert_eq!(fused_halo(&ks, HaloMode::PaperMax), Halo::spatial(2, 2));
        assert_eq!(fused_halo(&ks, HaloMode::Cumulative), Halo::spatial(3, 3));
        assert_eq!(fused_halo(&ks[..1], HaloMode::PaperMax), ks[0].halo);
        assert_eq!(fused_halo(&ks[..1], HaloMode::Cumulative), ks[0].halo);
    }

    #[test]
    fn input_box_examples() {
        let h = Halo::from_totals(2, 2, 1);
        assert_eq!(
            input_box(TileShape::new(4, 4, 2), &h),
            TileShape::new(6, 6, 3)
        );
        let t = TileShape::new(32, 32, 16);
        assert_eq!(input_box(t, &Halo::ZERO), t);
    }

    #[test]
    fn block_count_examples() {
        let v = VideoDims::new(8, 8, 8, 1, 1).unwrap();
        assert_eq!(block_count(&v, TileShape::new(4, 4, 2)), 16);
        assert_eq!(block_count(&v, TileShape::covering(&v)), 1);
        let v = VideoDims::new(10, 10, 1, 1, 1).unwrap();
        assert_eq!(block_count(&v, TileShape::new(4, 4, 1)), 9);
    }

    #[test]
    fn du_examples() {
        assert_eq!(data_utilization(TileShape::new(7, 3, 2), &Halo::ZERO), 1.0);
        let du = data_utilization(TileShape::new(16, 16, 4), &Halo::from_totals(2, 2, 1));
        assert!((du - 1024.0 / 1620.0).abs() < 1e-12);
        assert!((du - 0.6321).abs() < 1e-4);
        let (du, ok) =
            data_utilization_within(TileShape::new(16, 16, 4), &Halo::from_totals(2, 2, 1), 1000);
        assert_eq!((du, ok), (0.0, false));
    }

    #[test]
    fn transfer_examples() {
        let tile = TileShape::new(4, 4, 2);
        let h = Halo::from_totals(2, 2, 1);
        assert_eq!(transfer_serial(2, 16, tile), 2048);
        assert_eq!(transfer_serial(1, 1, TileShape::new(1, 1, 1)), 2);
        assert_eq!(
            transfer_serial(5, 64_000, TileShape::new(32, 32, 1)),
            655_360_000
        );
        assert_eq!(transfer_fused(16, tile, &h, TransferVariant::Exact), 2240);
        assert_eq!(transfer_fused(16, tile, &h, TransferVariant::Paper), 1084);
        assert_eq!(
            transfer_fused(16, tile, &Halo::ZERO, TransferVariant::Exact),
            transfer_serial(1, 16, tile)
        );
    }

    #[test]
    fn ragged_matches_exact_when_divisible() {
        let v = VideoDims::new(8, 8, 4, 1, 1).unwrap();
        let tile = TileShape::new(4, 4, 2);
        let h = Halo::spatial(1, 1);
        assert_eq!(
            transfer_fused_ragged(&v, tile, &h),
            transfer_fused(block_count(&v, tile), tile, &h, TransferVariant::Exact)
        );
        let v = VideoDims::new(10, 10, 1, 1, 1).unwrap();
        let ragged = transfer_fused_ragged(&v, TileShape::new(4, 4, 1), &Halo::ZERO);
        assert_eq!(ragged, 200);
    }

    #[test]
    fn occupancy_examples() {
        let mut d = Device::k20_like();
        d.max_blocks_per_sm = 64;
        d.max_warps_per_sm = 1024;
        let o = occupancy(&d, 32, d.smem_bytes).unwrap();
        assert_eq!(o.blocks_per_sm, 1);
        let o = occupancy(&d, 32, d.smem_bytes / 2).unwrap();
        assert_eq!(o.blocks_per_sm, 2);
        assert!(matches!(
            occupancy(&d, 32, d.smem_bytes + 1),
            Err(TilingError::SmemOverflow { .. })
        ));
        assert!(occupancy(&d, 4096, 16).is_err());
    }

    #[test]
    fn occupancy_non_increasing_in_smem() {
        let d = Device::k20_like();
        let mut prev = f64::INFINITY;
        for smem in (0..=d.smem_bytes).step_by(512) {
            let o = occupancy(&d, 256, smem).unwrap().occupancy;
            assert!(o <= prev + 1e-15, "smem {smem}");
            prev = o;
        }
    }

    #[test]
    fn thread_layout_folds_large_tiles() {
        assert_eq!(
            thread_layout(TileShape::new(16, 16, 4), 1024),
            ([16, 16, 1], 1)
        );
        let (th, ppt) = thread_layout(TileShape::new(64, 64, 1), 1024);
        assert_eq!(ppt, 2);
        assert_eq!(th, [32, 32, 1]);
    }

    #[test]
    fn optimal_tile_zero_halo_prefers_longest_t() {
        let r = optimal_tile(&Halo::ZERO, 4096, &LaunchLimits::default()).unwrap();
        assert_eq!(r.du, 1.0);
        assert_eq!(r.tile, TileShape::new(1, 1, 4096));
        let limits = LaunchLimits {
            max_t: 16,
            ..Default::default()
        };
        let r = optimal_tile(&Halo::ZERO, 4096, &limits).unwrap();
        assert_eq!(r.tile, TileShape::new(16, 16, 16));
    }

    #[test]
    fn optimal_tile_spatial_only_maximizes_x() {
        let h = Halo::spatial(1, 1);
        let r = optimal_tile(&h, 12_288, &LaunchLimits::default()).unwrap();
        assert_eq!(r.tile.x, 110);
        assert_eq!(r.tile.t, 1);
    }

    #[test]
    fn optimal_tile_infeasible() {
        let limits = LaunchLimits {
            max_input_elems: 8,
            ..Default::default()
        };
        assert!(matches!(
            optimal_tile(&Halo::spatial(2, 2), 1024, &limits),
            Err(TilingError::NoFeasibleTile { needed: 25, .. })
        ));
    }

    #[test]
    fn buffer_policy_counts() {
        let p = bundled_pipeline(bundled_video()).unwrap();
        let singles: Vec<_> = (1..=6).map(KernelInterval::single).collect();
        assert_eq!(gmem_buffers(&p, &singles).count, 7);
        let full = [KernelInterval::new(1, 5), KernelInterval::single(6)];
        assert_eq!(gmem_buffers(&p, &full).count, 3);
        let two = [
            KernelInterval::new(1, 2),
            KernelInterval::new(3, 5),
            KernelInterval::single(6),
        ];
        let r = gmem_buffers(&p, &two);
        assert_eq!(r.count, 4);
        assert_eq!(r.bytes, 4 * p.video.pixels() * 4);
    }
}
