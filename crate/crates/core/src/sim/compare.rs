use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::halo::{Halo, HaloMode};
use crate::pipeline::Pipeline;
use crate::sim::{GroupSpec, SimError, VideoData};
use crate::tiling::{fused_halo, TileShape};
use crate::video::VideoDims;

/// Erode `erode` (per side) from every boundary of a `tile` grid laid over
/// the video, including the video border.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileMask {
    pub tile: TileShape,
    pub erode: Halo,
}

impl TileMask {
    fn axis_interior(pos: u32, tile: u32, dim: u32, lo: u32, hi: u32) -> bool {
        let start = pos / tile * tile;
        let end = (start + tile).min(dim);
        pos - start >= lo && end - 1 - pos >= hi
    }

    pub fn is_interior(&self, dims: &VideoDims, x: u32, y: u32, t: u32) -> bool {
        let e = &self.erode;
        Self::axis_interior(x, self.tile.x, dims.width, e.x_lo, e.x_hi)
            && Self::axis_interior(y, self.tile.y, dims.height, e.y_lo, e.y_hi)
            && Self::axis_interior(t, self.tile.t, dims.frames, e.t_lo, e.t_hi)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub max_abs_diff: f64,
    pub differing: u64,
    pub interior_differing: u64,
    pub boundary_differing: u64,
    pub interior_elems: u64,
    pub boundary_elems: u64,
}

impl CompareReport {
    pub fn identical(&self) -> bool {
        self.differing == 0
    }
}

/// Exact element-wise difference; a pixel is interior when it is interior
/// under every mask.
pub fn compare_outputs(
    a: &VideoData,
    b: &VideoData,
    masks: &[TileMask],
) -> Result<CompareReport, SimError> {
    if a.shape() != b.shape() {
        return Err(SimError::DimMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let d = a.dims;
    let mut r = CompareReport::default();
    for t in 0..d.frames {
        for y in 0..d.height {
            for x in 0..d.width {
                let interior = masks.iter().all(|m| m.is_interior(&d, x, y, t));
                for c in 0..d.channels {
                    let (u, v) = (a.get(x, y, t, c), b.get(x, y, t, c));
                    let differs = u.to_bits() != v.to_bits();
                    if interior {
                        r.interior_elems += 1;
                    } else {
                        r.boundary_elems += 1;
                    }
                    if differs {
                        r.differing += 1;
                        if interior {
                            r.interior_differing += 1;
                        } else {
                            r.boundary_differing += 1;
                        }
                        let diff = (u as f64 - v as f64).abs();
                        if diff > r.max_abs_diff || diff.is_nan() {
                            r.max_abs_diff = diff;
                        }
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Masks bounding where a tiled run with staged `groups` halos can differ
/// from the sequential run.
///
/// A group staged with less than its summed halo is exact except within
/// `summed − staged` of its tile edges; every later group then spreads that
/// band by its own summed halo.
pub fn paper_max_masks(pipeline: &Pipeline, groups: &[GroupSpec]) -> Vec<TileMask> {
    let local: Vec<&GroupSpec> = groups
        .iter()
        .filter(|g| pipeline.slice(g.interval).iter().all(|k| k.is_tile_local()))
        .collect();
    let summed: Vec<Halo> = local
        .iter()
        .map(|g| fused_halo(pipeline.slice(g.interval), HaloMode::Cumulative))
        .collect();
    local
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let spread = summed[i + 1..]
                .iter()
                .fold(Halo::ZERO, |acc, h| acc.sum(*h));
            TileMask {
                tile: g.tile,
                erode: summed[i].saturating_sub(g.halo).sum(spread),
            }
        })
        .collect()
}
