//! Sequential (one kernel at a time over the whole video) and tiled-fused
//! execution.
//!
//! The tiled executor stages each output box plus the group halo, runs every
//! member against staged data only, and writes the box back. Member `k`
//! computes over the box grown by the halo still owed to later members, so
//! with summed halos the result equals the sequential one exactly.
//!
//! A temporal recurrence (the IIR filter) keeps per-pixel state across
//! frames inside the thread that owns the pixel column. Boxes of one
//! `(x, y)` column therefore run in frame order and hand the last state on
//! to the next box of the column; different columns are independent.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::halo::Halo;
use crate::kernel::KernelDesc;
use crate::pipeline::Pipeline;
use crate::planner::cost::remaining_halos;
use crate::sim::stencil::Prepared;
use crate::sim::{shape_of, GroupSpec, SimError, TrafficCounters, VideoData};
use crate::video::VideoDims;

fn out_dims(kernel: &KernelDesc, input: &VideoDims) -> Result<VideoDims, SimError> {
    let channels = kernel
        .stencil_op
        .output_channels(input.channels)
        .ok_or(SimError::NotTileLocal(kernel.stencil_op.name()))?;
    Ok(input.with_channels(channels))
}

/// One kernel over the whole video with clamp-to-edge reads.
pub fn apply_stencil(kernel: &KernelDesc, input: &VideoData) -> Result<VideoData, SimError> {
    let op = Prepared::new(&kernel.stencil_op)?;
    let dims = out_dims(kernel, &input.dims)?;
    let mut out = VideoData::zeros(dims);
    let read = |x: i64, y: i64, t: i64, c: usize| input.get_clamped(x, y, t, c);
    for t in 0..dims.frames {
        for y in 0..dims.height {
            for x in 0..dims.width {
                for c in 0..dims.channels {
                    let v = if op.is_recurrent() {
                        let prev = (t > 0).then(|| out.get(x, y, t - 1, c));
                        op.step(input.get(x, y, t, c), prev)
                    } else {
                        op.eval(&read, x as i64, y as i64, t as i64, c as usize)
                    };
                    out.set(x, y, t, c, v);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequentialRun {
    /// Output of each tile-local kernel, in order.
    pub stages: Vec<VideoData>,
    pub counters: TrafficCounters,
}

impl SequentialRun {
    pub fn output(&self) -> &VideoData {
        self.stages.last().expect("at least one stage")
    }
}

fn check_shape(pipeline: &Pipeline, video: &VideoData) -> Result<(), SimError> {
    let expected = shape_of(&pipeline.video);
    if video.shape() != expected {
        return Err(SimError::DimMismatch {
            expected,
            found: video.shape(),
        });
    }
    Ok(())
}

/// Applies the kernels one after another up to the first global one.
/// Each kernel reads and writes every pixel once through GMEM.
pub fn run_sequential(pipeline: &Pipeline, video: &VideoData) -> Result<SequentialRun, SimError> {
    check_shape(pipeline, video)?;
    let mut stages: Vec<VideoData> = Vec::new();
    let mut counters = TrafficCounters::default();
    for k in pipeline.kernels().iter().take_while(|k| k.is_tile_local()) {
        let input = stages.last().unwrap_or(video);
        let out = apply_stencil(k, input)?;
        counters.gmem_reads += input.dims.pixels();
        counters.gmem_writes += out.dims.pixels();
        stages.push(out);
    }
    if stages.is_empty() {
        return Err(SimError::NotTileLocal(
            pipeline.kernels()[0].stencil_op.name(),
        ));
    }
    Ok(SequentialRun { stages, counters })
}

/// Order in which the tiled executor visits pixel columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxOrder {
    Natural,
    Reversed,
    Shuffled(u64),
}

/// Output box clipped to the video, `hi` exclusive, axes `(x, y, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxRegion {
    pub lo: [u32; 3],
    pub hi: [u32; 3],
}

impl BoxRegion {
    pub fn extent(&self) -> [u32; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn volume(&self) -> u64 {
        self.extent().iter().map(|&e| e as u64).product()
    }
}

/// The boxes sharing one `(x, y)` footprint, in frame order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub boxes: Vec<BoxRegion>,
}

/// Written boxes of one column with their traffic.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnOutput {
    /// Box data in `[t][y][x][c]` order.
    pub tiles: Vec<(BoxRegion, Vec<f32>)>,
    pub counters: TrafficCounters,
}

/// Axis-aligned block of elements held by one box, absolute coordinates.
#[derive(Clone, Debug)]
struct Region {
    lo: [i64; 3],
    hi: [i64; 3],
    ch: usize,
    data: Vec<f32>,
}

impl Region {
    fn new(lo: [i64; 3], hi: [i64; 3], ch: usize) -> Self {
        let n = (0..3)
            .map(|a| (hi[a] - lo[a]).max(0) as usize)
            .product::<usize>()
            * ch;
        Region {
            lo,
            hi,
            ch,
            data: vec![0.0; n],
        }
    }

    fn pixels(&self) -> u64 {
        (0..3).map(|a| (self.hi[a] - self.lo[a]) as u64).product()
    }

    fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }

    fn idx(&self, p: [i64; 3], c: usize) -> usize {
        let nx = (self.hi[0] - self.lo[0]) as usize;
        let ny = (self.hi[1] - self.lo[1]) as usize;
        let (x, y, t) = (
            (p[0] - self.lo[0]) as usize,
            (p[1] - self.lo[1]) as usize,
            (p[2] - self.lo[2]) as usize,
        );
        ((t * ny + y) * nx + x) * self.ch + c
    }

    fn get(&self, p: [i64; 3], c: usize) -> f32 {
        self.data[self.idx(p, c)]
    }

    fn set(&mut self, p: [i64; 3], c: usize, v: f32) {
        let i = self.idx(p, c);
        self.data[i] = v;
    }

    /// Clamp to the video, then into this region.
    fn read(&self, p: [i64; 3], c: usize, dom: &[i64; 3]) -> f32 {
        let mut q = [0i64; 3];
        for a in 0..3 {
            q[a] = p[a].clamp(0, dom[a] - 1).clamp(self.lo[a], self.hi[a] - 1);
        }
        self.get(q, c)
    }

    fn points(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        (self.lo[2]..self.hi[2]).flat_map(move |t| {
            (self.lo[1]..self.hi[1])
                .flat_map(move |y| (self.lo[0]..self.hi[0]).map(move |x| [x, y, t]))
        })
    }
}

fn grow(b: &BoxRegion, h: &Halo) -> ([i64; 3], [i64; 3]) {
    let lo = h.lo();
    let hi = h.hi();
    let mut l = [0i64; 3];
    let mut u = [0i64; 3];
    for a in 0..3 {
        l[a] = b.lo[a] as i64 - lo[a] as i64;
        u[a] = b.hi[a] as i64 + hi[a] as i64;
    }
    (l, u)
}

fn clip(lo: [i64; 3], hi: [i64; 3], dom: &[i64; 3]) -> ([i64; 3], [i64; 3]) {
    let mut l = lo;
    let mut u = hi;
    for a in 0..3 {
        l[a] = l[a].max(0);
        u[a] = u[a].min(dom[a]);
    }
    (l, u)
}

/// A fused group prepared for box-by-box execution on one input geometry.
#[derive(Clone, Debug)]
pub struct TiledGroup {
    pub spec: GroupSpec,
    ops: Vec<Prepared>,
    remaining: Vec<Halo>,
    channels: Vec<usize>,
    in_dims: VideoDims,
    out_dims: VideoDims,
}

impl TiledGroup {
    pub fn new(pipeline: &Pipeline, spec: GroupSpec, in_dims: VideoDims) -> Result<Self, SimError> {
        let kernels = pipeline.slice(spec.interval);
        let mut ops = Vec::with_capacity(kernels.len());
        let mut channels = Vec::with_capacity(kernels.len());
        let mut dims = in_dims;
        for k in kernels {
            if !k.is_tile_local() {
                return Err(SimError::NotTileLocal(k.stencil_op.name()));
            }
            ops.push(Prepared::new(&k.stencil_op)?);
            dims = out_dims(k, &dims)?;
            channels.push(dims.channels as usize);
        }
        Ok(TiledGroup {
            spec,
            ops,
            remaining: remaining_halos(kernels, &spec.halo),
            channels,
            in_dims,
            out_dims: dims,
        })
    }

    pub fn out_dims(&self) -> VideoDims {
        self.out_dims
    }

    pub fn is_recurrent(&self) -> bool {
        self.ops.iter().any(Prepared::is_recurrent)
    }

    pub fn columns(&self) -> Vec<Column> {
        let d = &self.in_dims;
        let tile = self.spec.tile;
        let span = |n: u32, s: u32| (0..n.div_ceil(s)).map(move |i| (i * s, (i * s + s).min(n)));
        let mut cols = Vec::new();
        for (y0, y1) in span(d.height, tile.y) {
            for (x0, x1) in span(d.width, tile.x) {
                let boxes = span(d.frames, tile.t)
                    .map(|(t0, t1)| BoxRegion {
                        lo: [x0, y0, t0],
                        hi: [x1, y1, t1],
                    })
                    .collect();
                cols.push(Column { boxes });
            }
        }
        cols
    }

    fn dom(&self) -> [i64; 3] {
        [
            self.in_dims.width as i64,
            self.in_dims.height as i64,
            self.in_dims.frames as i64,
        ]
    }

    /// Runs the boxes of one column. Boxes of a stateless group are
    /// independent and may run in reverse; a recurrent group always runs in
    /// frame order.
    pub fn run_column(
        &self,
        input: &VideoData,
        column: &Column,
        reverse: bool,
    ) -> Result<ColumnOutput, SimError> {
        let dom = self.dom();
        let mut counters = TrafficCounters::default();
        let mut carries: Vec<Option<Region>> = vec![None; self.ops.len()];
        let mut tiles = Vec::with_capacity(column.boxes.len());
        let boxes: Vec<&BoxRegion> = if reverse && !self.is_recurrent() {
            column.boxes.iter().rev().collect()
        } else {
            column.boxes.iter().collect()
        };
        for b in boxes {
            // Stage the input box; out-of-video elements are clamped reads.
            let (lo, hi) = grow(b, &self.spec.halo);
            let staged_volume: u64 = (0..3).map(|a| (hi[a] - lo[a]) as u64).product();
            counters.gmem_reads += staged_volume;
            counters.smem_writes += staged_volume;
            let (lo, hi) = clip(lo, hi, &dom);
            let ch_in = input.dims.channels as usize;
            let mut prev = Region::new(lo, hi, ch_in);
            for p in prev.points().collect::<Vec<_>>() {
                for c in 0..ch_in {
                    let v = input.get(p[0] as u32, p[1] as u32, p[2] as u32, c as u32);
                    prev.set(p, c, v);
                }
            }

            let mut outputs: Vec<Region> = Vec::with_capacity(self.ops.len());
            for (k, op) in self.ops.iter().enumerate() {
                let (lo, hi) = grow(b, &self.remaining[k]);
                let (lo, hi) = clip(lo, hi, &dom);
                let ch = self.channels[k];
                let mut out = Region::new(lo, hi, ch);
                let src = outputs.last().unwrap_or(&prev);
                let read = |x: i64, y: i64, t: i64, c: usize| src.read([x, y, t], c, &dom);
                if op.is_recurrent() {
                    for y in lo[1]..hi[1] {
                        for x in lo[0]..hi[0] {
                            for t in lo[2]..hi[2] {
                                for c in 0..ch {
                                    let before = if t == 0 {
                                        None
                                    } else if t == lo[2] {
                                        let carry = carries[k]
                                            .as_ref()
                                            .filter(|r| r.contains([x, y, t - 1]))
                                            .ok_or(SimError::MissingCarry { frame: t - 1 })?;
                                        Some(carry.get([x, y, t - 1], c))
                                    } else {
                                        Some(out.get([x, y, t - 1], c))
                                    };
                                    out.set([x, y, t], c, op.step(read(x, y, t, c), before));
                                }
                            }
                        }
                    }
                } else {
                    for p in out.points().collect::<Vec<_>>() {
                        for c in 0..ch {
                            out.set(p, c, op.eval(&read, p[0], p[1], p[2], c));
                        }
                    }
                }
                counters.smem_reads += op.reads_per_elem() * out.pixels();
                counters.smem_writes += out.pixels();
                outputs.push(out);
            }

            let last = outputs.last().unwrap_or(&prev);
            let ch = last.ch;
            let mut data = Vec::with_capacity(b.volume() as usize * ch);
            for t in b.lo[2]..b.hi[2] {
                for y in b.lo[1]..b.hi[1] {
                    for x in b.lo[0]..b.hi[0] {
                        for c in 0..ch {
                            data.push(last.get([x as i64, y as i64, t as i64], c));
                        }
                    }
                }
            }
            counters.smem_reads += b.volume();
            counters.gmem_writes += b.volume();
            tiles.push((*b, data));
            for (slot, out) in carries.iter_mut().zip(outputs) {
                *slot = Some(out);
            }
        }
        Ok(ColumnOutput { tiles, counters })
    }

    /// Writes column results into a fresh output video.
    pub fn assemble(
        &self,
        parts: impl IntoIterator<Item = ColumnOutput>,
    ) -> (VideoData, TrafficCounters) {
        let mut out = VideoData::zeros(self.out_dims);
        let mut counters = TrafficCounters::default();
        let ch = self.out_dims.channels;
        for part in parts {
            counters += part.counters;
            for (b, data) in part.tiles {
                let mut i = 0;
                for t in b.lo[2]..b.hi[2] {
                    for y in b.lo[1]..b.hi[1] {
                        for x in b.lo[0]..b.hi[0] {
                            for c in 0..ch {
                                out.set(x, y, t, c, data[i]);
                                i += 1;
                            }
                        }
                    }
                }
            }
        }
        (out, counters)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TiledRun {
    pub output: VideoData,
    pub counters: TrafficCounters,
    pub per_group: Vec<TrafficCounters>,
}

/// Checks that `groups` cover `1..` in order and returns the tile-local prefix.
pub fn tile_local_groups(
    pipeline: &Pipeline,
    groups: &[GroupSpec],
) -> Result<Vec<GroupSpec>, SimError> {
    let mut next = 1;
    let mut out = Vec::new();
    for g in groups {
        if g.interval.first != next || g.interval.last as usize > pipeline.len() {
            return Err(SimError::Schedule(next));
        }
        let ks = pipeline.slice(g.interval);
        if !ks[0].is_tile_local() {
            break;
        }
        if let Some(k) = ks.iter().find(|k| !k.is_tile_local()) {
            return Err(SimError::Schedule(k.id));
        }
        out.push(*g);
        next = g.interval.last + 1;
    }
    let local = pipeline
        .kernels()
        .iter()
        .take_while(|k| k.is_tile_local())
        .count() as u32;
    if next != local + 1 {
        return Err(SimError::Schedule(next));
    }
    Ok(out)
}

pub fn order_columns(mut cols: Vec<Column>, order: BoxOrder) -> Vec<Column> {
    match order {
        BoxOrder::Natural => {}
        BoxOrder::Reversed => cols.reverse(),
        BoxOrder::Shuffled(seed) => cols.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
    }
    cols
}

/// Tiled-fused execution of the tile-local groups.
pub fn run_tiled(
    pipeline: &Pipeline,
    groups: &[GroupSpec],
    video: &VideoData,
    order: BoxOrder,
) -> Result<TiledRun, SimError> {
    check_shape(pipeline, video)?;
    let groups = tile_local_groups(pipeline, groups)?;
    let mut current: Option<VideoData> = None;
    let mut counters = TrafficCounters::default();
    let mut per_group = Vec::with_capacity(groups.len());
    for spec in groups {
        let input = current.as_ref().unwrap_or(video);
        let group = TiledGroup::new(pipeline, spec, input.dims)?;
        let reverse = order != BoxOrder::Natural;
        let parts = order_columns(group.columns(), order)
            .iter()
            .map(|col| group.run_column(input, col, reverse))
            .collect::<Result<Vec<_>, _>>()?;
        let (out, c) = group.assemble(parts);
        counters += c;
        per_group.push(c);
        current = Some(out);
    }
    let output = current.ok_or(SimError::Schedule(1))?;
    Ok(TiledRun {
        output,
        counters,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halo::HaloMode;
    use crate::kernel::StencilOp;
    use crate::pipeline::KernelInterval;
    use crate::tiling::{fused_halo, TileShape};

    fn ramp_video(w: u32, h: u32, f: u32, ch: u32) -> VideoData {
        let d = VideoDims::new(w, h, f, 30, ch).unwrap();
        VideoData::from_fn(d, |x, y, t, c| {
            ((x * 7 + y * 13 + t * 29 + c * 3) % 251) as f32
        })
    }

    fn pipeline(ops: &[StencilOp], dims: VideoDims) -> Pipeline {
        let ks = ops
            .iter()
            .enumerate()
            .map(|(i, op)| KernelDesc::from_op(i as u32 + 1, op.name(), op.clone(), 4, 4))
            .collect();
        Pipeline::new(dims, ks).unwrap()
    }

    #[test]
    fn identity_pipeline_round_trips() {
        let v = ramp_video(8, 8, 4, 1);
        let p = pipeline(&[StencilOp::Identity, StencilOp::Identity], v.dims);
        let run = run_sequential(&p, &v).unwrap();
        assert_eq!(run.output(), &v);
        assert_eq!(run.counters.gmem_total(), 2 * 2 * 8 * 8 * 4);
    }

    #[test]
    fn cumulative_tiling_matches_sequential() {
        let v = ramp_video(20, 18, 7, 4);
        let ops = [
            StencilOp::Rgba2Gray,
            StencilOp::IirTemporal { alpha: 0.5 },
            StencilOp::Gaussian {
                radius: 2,
                sigma: 1.0,
            },
            StencilOp::Gradient,
            StencilOp::Threshold { level: 100.0 },
        ];
        let p = pipeline(&ops, v.dims);
        let seq = run_sequential(&p, &v).unwrap();
        let spec = GroupSpec {
            interval: KernelInterval::new(1, 5),
            tile: TileShape::new(6, 5, 3),
            halo: fused_halo(p.kernels(), HaloMode::Cumulative),
        };
        for order in [BoxOrder::Natural, BoxOrder::Reversed, BoxOrder::Shuffled(3)] {
            let tiled = run_tiled(&p, &[spec], &v, order).unwrap();
            assert_eq!(&tiled.output, seq.output(), "{order:?}");
        }
    }

    #[test]
    fn fused_gmem_matches_exact_volume() {
        let v = ramp_video(16, 16, 4, 1);
        let p = pipeline(
            &[
                StencilOp::Gaussian {
                    radius: 1,
                    sigma: 1.0,
                },
                StencilOp::Gradient,
            ],
            v.dims,
        );
        let halo = fused_halo(p.kernels(), HaloMode::Cumulative);
        let tile = TileShape::new(4, 4, 2);
        let spec = GroupSpec {
            interval: KernelInterval::new(1, 2),
            tile,
            halo,
        };
        let run = run_tiled(&p, &[spec], &v, BoxOrder::Natural).unwrap();
        let blocks = 4 * 4 * 2;
        assert_eq!(run.counters.gmem_reads, blocks * 8 * 8 * 2);
        assert_eq!(run.counters.gmem_writes, blocks * 4 * 4 * 2);
    }

    #[test]
    fn boxes_must_cover_in_order() {
        let v = ramp_video(8, 8, 2, 1);
        let p = pipeline(&[StencilOp::Identity, StencilOp::Identity], v.dims);
        let spec = GroupSpec {
            interval: KernelInterval::single(2),
            tile: TileShape::new(4, 4, 1),
            halo: Halo::ZERO,
        };
        assert!(matches!(
            run_tiled(&p, &[spec], &v, BoxOrder::Natural),
            Err(SimError::Schedule(1))
        ));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let v = ramp_video(8, 8, 2, 1);
        let p = pipeline(
            &[StencilOp::Identity],
            VideoDims::new(8, 8, 3, 30, 1).unwrap(),
        );
        assert!(matches!(
            run_sequential(&p, &v),
            Err(SimError::DimMismatch { .. })
        ));
    }
}
