//! Least-squares fit of the linear cost coefficients to measured launches.

use fuseplan_core::planner::cost::calibration_features;
use fuseplan_core::{CostParams, Halo, TileShape};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One timed launch: `n_kernels` fused kernels over `blocks` boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub n_kernels: u32,
    pub blocks: u64,
    pub tile_x: u32,
    pub tile_y: u32,
    pub tile_t: u32,
    pub halo_dx: u32,
    pub halo_dy: u32,
    pub halo_dt: u32,
    pub measured_time: f64,
}

impl Measurement {
    pub fn design_row(&self) -> [f64; 4] {
        let tile = TileShape::new(self.tile_x, self.tile_y, self.tile_t);
        let halo = Halo::from_totals(self.halo_dx, self.halo_dy, self.halo_dt);
        calibration_features(self.n_kernels, self.blocks, tile, &halo).design_row()
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(
        "design matrix has rank {rank} < 4 ({rows} rows); add rows varying kernels, tile and halo"
    )]
    RankDeficient { rank: usize, rows: usize },
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: &'static str },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub params: CostParams,
    pub rows: usize,
    pub rank: usize,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
    /// RMS of `residual / measured` over rows with non-zero time.
    pub rms_relative_residual: f64,
}

pub fn read_measurements(text: &str) -> Result<Vec<Measurement>, CalibrationError> {
    let rows: Vec<Measurement> = csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()?;
    Ok(rows)
}

pub fn write_measurements(rows: &[Measurement]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

/// Fits `CostParams` minimizing `Σ (row · params − measured)²`.
///
/// Columns are scaled to unit norm before the SVD; the features span many
/// orders of magnitude and the scaling keeps the solve well conditioned.
pub fn fit(rows: &[Measurement]) -> Result<Calibration, CalibrationError> {
    for (i, r) in rows.iter().enumerate() {
        if !r.measured_time.is_finite() {
            return Err(CalibrationError::BadRow {
                row: i + 1,
                reason: "measured_time is not finite",
            });
        }
        if r.tile_x == 0 || r.tile_y == 0 || r.tile_t == 0 || r.n_kernels == 0 {
            return Err(CalibrationError::BadRow {
                row: i + 1,
                reason: "tile extents and n_kernels must be positive",
            });
        }
    }
    let m = rows.len();
    let design: Vec<[f64; 4]> = rows.iter().map(Measurement::design_row).collect();
    let a = DMatrix::from_fn(m, 4, |i, j| design[i][j]);
    let b = DVector::from_iterator(m, rows.iter().map(|r| r.measured_time));
    let scale: Vec<f64> = (0..4)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(m, 4, |i, j| a[(i, j)] / scale[j]);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * m.max(4) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 4 {
        return Err(CalibrationError::RankDeficient { rank, rows: m });
    }
    let y = svd.solve(&b, tol).expect("U and V were computed");
    let params = CostParams::from_array([
        y[0] / scale[0],
        y[1] / scale[1],
        y[2] / scale[2],
        y[3] / scale[3],
    ]);
    let p = params.as_array();
    let residuals: Vec<f64> = design
        .iter()
        .zip(rows)
        .map(|(d, r)| d.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() - r.measured_time)
        .collect();
    let rms = (residuals.iter().map(|e| e * e).sum::<f64>() / m as f64).sqrt();
    let rel: Vec<f64> = residuals
        .iter()
        .zip(rows)
        .filter(|(_, r)| r.measured_time != 0.0)
        .map(|(e, r)| e / r.measured_time)
        .collect();
    let rms_rel = if rel.is_empty() {
        0.0
    } else {
        (rel.iter().map(|e| e * e).sum::<f64>() / rel.len() as f64).sqrt()
    };
    Ok(Calibration {
        params,
        rows: m,
        rank,
        residuals,
        rms_residual: rms,
        rms_relative_residual: rms_rel,
    })
}

/// Rows timed exactly by `params`: a grid over kernel counts, tiles and halos.
pub fn synthetic_measurements(params: &CostParams) -> Vec<Measurement> {
    let mut rows = Vec::new();
    for n in [1u32, 2, 3, 5] {
        for (tx, tt) in [(8u32, 1u32), (16, 4), (32, 2)] {
            for d in [0u32, 2, 4] {
                let blocks = 4096 / (tx as u64 * tx as u64 / 16).max(1) + n as u64;
                let mut r = Measurement {
                    n_kernels: n,
                    blocks,
                    tile_x: tx,
                    tile_y: tx,
                    tile_t: tt,
                    halo_dx: d,
                    halo_dy: d,
                    halo_dt: d / 2,
                    measured_time: 0.0,
                };
                let row = r.design_row();
                r.measured_time = row.iter().zip(params.as_array()).map(|(a, b)| a * b).sum();
                rows.push(r);
            }
        }
    }
    rows
}
