//! Multi-threaded tiled execution: box columns of a group run on the rayon
//! pool and their tallies are merged afterwards.

use fuseplan_core::sim::{
    tile_local_groups, GroupSpec, SimError, TiledGroup, TiledRun, TrafficCounters, VideoData,
};
use fuseplan_core::Pipeline;
use rayon::prelude::*;

pub fn run_tiled_parallel(
    pipeline: &Pipeline,
    groups: &[GroupSpec],
    video: &VideoData,
) -> Result<TiledRun, SimError> {
    let expected = fuseplan_core::sim::shape_of(&pipeline.video);
    if video.shape() != expected {
        return Err(SimError::DimMismatch {
            expected,
            found: video.shape(),
        });
    }
    let groups = tile_local_groups(pipeline, groups)?;
    let mut current: Option<VideoData> = None;
    let mut counters = TrafficCounters::default();
    let mut per_group = Vec::with_capacity(groups.len());
    for spec in groups {
        let input = current.as_ref().unwrap_or(video);
        let group = TiledGroup::new(pipeline, spec, input.dims)?;
        let parts = group
            .columns()
            .par_iter()
            .map(|col| group.run_column(input, col, false))
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
