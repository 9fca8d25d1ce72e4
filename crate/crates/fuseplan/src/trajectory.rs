//! Trajectory CSV: one row per (frame, marker).

use std::io::Write;

use fuseplan_core::sim::Trajectory;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub frame: u32,
    pub marker_id: usize,
    pub meas_x: Option<f64>,
    pub meas_y: Option<f64>,
    pub est_x: f64,
    pub est_y: f64,
    pub est_vx: f64,
    pub est_vy: f64,
}

/// Rows ordered by frame, then marker.
pub fn rows(trajectories: &[Trajectory]) -> Vec<TrajectoryRow> {
    let mut out: Vec<TrajectoryRow> = trajectories
        .iter()
        .flat_map(|tr| {
            tr.points.iter().map(move |p| TrajectoryRow {
                frame: p.frame,
                marker_id: tr.marker_id,
                meas_x: p.measured.map(|m| m[0]),
                meas_y: p.measured.map(|m| m[1]),
                est_x: p.state[0],
                est_y: p.state[1],
                est_vx: p.state[2],
                est_vy: p.state[3],
            })
        })
        .collect();
    out.sort_by_key(|r| (r.frame, r.marker_id));
    out
}

pub fn write_csv(w: impl Write, trajectories: &[Trajectory]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows(trajectories) {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv(text: &str) -> csv::Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}
