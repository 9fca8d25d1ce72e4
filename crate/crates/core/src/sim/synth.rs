//! Seeded synthetic scenes: bright antialiased discs moving at constant
//! velocity over a noisy dark background.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sim::{SimError, VideoData};
use crate::video::VideoDims;

const SUPERSAMPLE: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    /// Center at frame 0, pixel units; pixel centers sit on integers.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    pub radius: f64,
    /// Disc brightness on the 0–255 scale.
    pub intensity: f64,
}

/// What happens when a disc would cross the frame edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Generation fails.
    #[default]
    Error,
    /// The disc bounces off the edge (velocity component flips).
    Reflect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub dims: VideoDims,
    pub markers: Vec<Marker>,
    /// Standard deviation of additive Gaussian noise as a fraction of 255.
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub video: VideoData,
    /// `truth[marker][frame]` = exact center.
    pub truth: Vec<Vec<[f64; 2]>>,
}

fn fold(p: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let period = 2.0 * span;
    let m = (p - lo) - period * libm::floor((p - lo) / period);
    lo + if m <= span { m } else { 2.0 * span - m }
}

/// Center of `m` at frame `t` under `boundary`, or `None` if it leaves the frame.
pub fn marker_center(m: &Marker, dims: &VideoDims, t: u32, boundary: Boundary) -> Option<[f64; 2]> {
    let lim = [
        dims.width as f64 - 1.0 - m.radius,
        dims.height as f64 - 1.0 - m.radius,
    ];
    let mut c = [0.0; 2];
    for a in 0..2 {
        let p = m.start[a] + m.velocity[a] * t as f64;
        c[a] = match boundary {
            Boundary::Reflect => fold(p, m.radius, lim[a]),
            Boundary::Error => p,
        };
        if c[a] < m.radius || c[a] > lim[a] {
            return None;
        }
    }
    Some(c)
}

fn coverage(cx: f64, cy: f64, r: f64, px: u32, py: u32) -> f64 {
    let n = SUPERSAMPLE;
    let mut hits = 0;
    for j in 0..n {
        for i in 0..n {
            let sx = px as f64 + (i as f64 + 0.5) / n as f64 - 0.5;
            let sy = py as f64 + (j as f64 + 0.5) / n as f64 - 0.5;
            let (dx, dy) = (sx - cx, sy - cy);
            if dx * dx + dy * dy <= r * r {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}

pub fn synth_video(spec: &SyntheticSceneSpec) -> Result<SyntheticScene, SimError> {
    let dims = spec.dims;
    dims.validate()
        .map_err(|_| SimError::InvalidScene("invalid video dims"))?;
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(SimError::InvalidScene(
            "noise_sigma must be finite and non-negative",
        ));
    }
    let mut truth = Vec::with_capacity(spec.markers.len());
    for (i, m) in spec.markers.iter().enumerate() {
        if !(m.radius > 0.0 && m.intensity.is_finite()) {
            return Err(SimError::InvalidScene("marker radius must be positive"));
        }
        let track = (0..dims.frames)
            .map(|t| {
                marker_center(m, &dims, t, spec.boundary).ok_or(SimError::MarkerLeavesFrame {
                    marker: i,
                    frame: t,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        truth.push(track);
    }

    let noise = Normal::new(0.0, spec.noise_sigma * 255.0)
        .map_err(|_| SimError::InvalidScene("noise_sigma"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut video = VideoData::zeros(dims);
    for t in 0..dims.frames {
        for y in 0..dims.height {
            for x in 0..dims.width {
                let mut v = 0.0;
                for (m, track) in spec.markers.iter().zip(&truth) {
                    let [cx, cy] = track[t as usize];
                    if (x as f64 - cx).abs() <= m.radius + 1.0
                        && (y as f64 - cy).abs() <= m.radius + 1.0
                    {
                        v += coverage(cx, cy, m.radius, x, y) * m.intensity;
                    }
                }
                if spec.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                let v = libm::round(v.clamp(0.0, 255.0)) as f32;
                for c in 0..dims.channels {
                    let alpha = dims.channels == 4 && c == 3;
                    video.set(x, y, t, c, if alpha { 255.0 } else { v });
                }
            }
        }
    }
    Ok(SyntheticScene { video, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(f: u32) -> VideoDims {
        VideoDims::new(32, 32, f, 30, 4).unwrap()
    }

    #[test]
    fn empty_scene_is_black() {
        let s = synth_video(&SyntheticSceneSpec {
            dims: dims(3),
            markers: Vec::new(),
            noise_sigma: 0.0,
            seed: 1,
            boundary: Boundary::Error,
        })
        .unwrap();
        for t in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    assert_eq!(s.video.get(x, y, t, 0), 0.0);
                    assert_eq!(s.video.get(x, y, t, 3), 255.0);
                }
            }
        }
    }

    #[test]
    fn static_marker_centroid() {
        let m = Marker {
            start: [14.3, 17.6],
            velocity: [0.0, 0.0],
            radius: 5.0,
            intensity: 255.0,
        };
        let s = synth_video(&SyntheticSceneSpec {
            dims: dims(3),
            markers: alloc::vec![m],
            noise_sigma: 0.0,
            seed: 1,
            boundary: Boundary::Error,
        })
        .unwrap();
        assert_eq!(s.video.frame(0), s.video.frame(2));
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..32 {
            for x in 0..32 {
                if s.video.get(x, y, 0, 0) >= 128.0 {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        assert!((sx / n - 14.3).abs() <= 0.5);
        assert!((sy / n - 17.6).abs() <= 0.5);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = SyntheticSceneSpec {
            dims: dims(2),
            markers: Vec::new(),
            noise_sigma: 8.0 / 255.0,
            seed: 42,
            boundary: Boundary::Error,
        };
        assert_eq!(synth_video(&spec).unwrap(), synth_video(&spec).unwrap());
    }

    #[test]
    fn leaving_the_frame() {
        let m = Marker {
            start: [10.0, 10.0],
            velocity: [1.0, 0.0],
            radius: 3.0,
            intensity: 255.0,
        };
        let mut spec = SyntheticSceneSpec {
            dims: dims(40),
            markers: alloc::vec![m],
            noise_sigma: 0.0,
            seed: 0,
            boundary: Boundary::Error,
        };
        assert!(matches!(
            synth_video(&spec),
            Err(SimError::MarkerLeavesFrame {
                marker: 0,
                frame: 19
            })
        ));
        spec.boundary = Boundary::Reflect;
        let s = synth_video(&spec).unwrap();
        assert_eq!(s.truth[0][18], [28.0, 10.0]);
        assert_eq!(s.truth[0][19], [27.0, 10.0]);
    }
}
