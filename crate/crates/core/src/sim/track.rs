//! Centroid measurement inside a moving region of interest, filtered by a
//! constant-velocity Kalman filter (state `x, y, vx, vy`, one step per frame).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kernel::{KalmanParams, WHITE};
use crate::sim::{SimError, VideoData};

type M4 = [[f64; 4]; 4];

/// Axis-aligned rectangle, top-left corner plus size, pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
}

impl Roi {
    pub fn centered(cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Roi {
            x: libm::round(cx - (width as f64 - 1.0) / 2.0) as i64,
            y: libm::round(cy - (height as f64 - 1.0) / 2.0) as i64,
            width,
            height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub frame: u32,
    pub measured: Option<[f64; 2]>,
    pub state: [f64; 4],
    pub covariance: M4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub marker_id: usize,
    pub points: Vec<TrajectoryPoint>,
}

/// Mean position of WHITE pixels of frame `t` inside `roi`.
pub fn centroid(mask: &VideoData, t: u32, roi: &Roi) -> Option<[f64; 2]> {
    let d = &mask.dims;
    let x0 = roi.x.max(0);
    let y0 = roi.y.max(0);
    let x1 = (roi.x + roi.width as i64).min(d.width as i64);
    let y1 = (roi.y + roi.height as i64).min(d.height as i64);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            if mask.get(x as u32, y as u32, t, 0) >= WHITE / 2.0 {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn transpose(a: &M4) -> M4 {
    let mut t = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn identity() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Constant-velocity filter with `Δt = 1`, `Q = q·I`, `R = r·I`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kalman {
    pub x: [f64; 4],
    pub p: M4,
    q: f64,
    r: f64,
}

impl Kalman {
    pub fn new(position: [f64; 2], params: &KalmanParams) -> Self {
        let mut p = identity();
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = params.initial_covariance;
        }
        Kalman {
            x: [position[0], position[1], 0.0, 0.0],
            p,
            q: params.process_noise,
            r: params.measurement_noise,
        }
    }

    pub fn predict(&mut self) {
        let mut f = identity();
        f[0][2] = 1.0;
        f[1][3] = 1.0;
        let x = self.x;
        self.x = [x[0] + x[2], x[1] + x[3], x[2], x[3]];
        let mut p = mul(&mul(&f, &self.p), &transpose(&f));
        for (i, row) in p.iter_mut().enumerate() {
            row[i] += self.q;
        }
        self.p = p;
    }

    /// Position measurement update in Joseph form.
    pub fn update(&mut self, z: [f64; 2]) {
        let p = &self.p;
        // S = H P Hᵀ + R, the top-left 2×2 block plus R.
        let s = [[p[0][0] + self.r, p[0][1]], [p[1][0], p[1][1] + self.r]];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let si = [
            [s[1][1] / det, -s[0][1] / det],
            [-s[1][0] / det, s[0][0] / det],
        ];
        // K = P Hᵀ S⁻¹ (4×2).
        let mut k = [[0.0; 2]; 4];
        for i in 0..4 {
            for j in 0..2 {
                k[i][j] = p[i][0] * si[0][j] + p[i][1] * si[1][j];
            }
        }
        let y = [z[0] - self.x[0], z[1] - self.x[1]];
        for (i, row) in k.iter().enumerate() {
            self.x[i] += row[0] * y[0] + row[1] * y[1];
        }
        let mut a = identity();
        for i in 0..4 {
            a[i][0] -= k[i][0];
            a[i][1] -= k[i][1];
        }
        let mut np = mul(&mul(&a, p), &transpose(&a));
        for i in 0..4 {
            for j in 0..4 {
                np[i][j] += self.r * (k[i][0] * k[j][0] + k[i][1] * k[j][1]);
            }
        }
        let mut sym = np;
        for (i, row) in sym.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = 0.5 * (np[i][j] + np[j][i]);
            }
        }
        self.p = sym;
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.p[i][i]).sum()
    }
}

/// One trajectory per ROI. The ROI follows the filter's prediction; a frame
/// with no WHITE pixels in it is a prediction-only step.
pub fn track_features(
    mask: &VideoData,
    rois: &[Roi],
    params: &KalmanParams,
) -> Result<Vec<Trajectory>, SimError> {
    if rois.is_empty() {
        return Err(SimError::EmptyRois);
    }
    let frames = mask.dims.frames;
    let mut out = Vec::with_capacity(rois.len());
    for (id, roi) in rois.iter().enumerate() {
        let first = centroid(mask, 0, roi);
        let start = first.unwrap_or([
            roi.x as f64 + (roi.width as f64 - 1.0) / 2.0,
            roi.y as f64 + (roi.height as f64 - 1.0) / 2.0,
        ]);
        let mut kf = Kalman::new(start, params);
        let mut points = Vec::with_capacity(frames as usize);
        points.push(TrajectoryPoint {
            frame: 0,
            measured: first,
            state: kf.x,
            covariance: kf.p,
        });
        for t in 1..frames {
            kf.predict();
            let window = Roi::centered(kf.x[0], kf.x[1], roi.width, roi.height);
            let z = centroid(mask, t, &window);
            if let Some(z) = z {
                kf.update(z);
            }
            points.push(TrajectoryPoint {
                frame: t,
                measured: z,
                state: kf.x,
                covariance: kf.p,
            });
        }
        out.push(Trajectory {
            marker_id: id,
            points,
        });
    }
    Ok(out)
}
