use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineError;

/// Extent of a video volume: `width × height` pixels over `frames` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoDims {
    pub width: u32,
    pub height: u32,
    pub frames: u32,
    pub fps: u32,
    pub channels: u32,
}

/// Number of frames captured in `duration_seconds` at `fps`.
pub fn frame_count(duration_seconds: u64, fps: u64) -> u64 {
    duration_seconds * fps
}

impl VideoDims {
    pub fn new(
        width: u32,
        height: u32,
        frames: u32,
        fps: u32,
        channels: u32,
    ) -> Result<Self, PipelineError> {
        let dims = VideoDims {
            width,
            height,
            frames,
            fps,
            channels,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// Builds dimensions for a clip of `duration_seconds` captured at `fps`.
    pub fn from_duration(
        width: u32,
        height: u32,
        duration_seconds: u32,
        fps: u32,
        channels: u32,
    ) -> Result<Self, PipelineError> {
        let frames = frame_count(duration_seconds as u64, fps as u64);
        let frames = u32::try_from(frames).map_err(|_| PipelineError::InvalidVideo {
            field: "frames",
            reason: "frame count overflows u32",
        })?;
        Self::new(width, height, frames, fps, channels)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let check = |v: u32, field: &'static str| {
            if v == 0 {
                Err(PipelineError::InvalidVideo {
                    field,
                    reason: "must be at least 1",
                })
            } else {
                Ok(())
            }
        };
        check(self.width, "width")?;
        check(self.height, "height")?;
        check(self.frames, "frames")?;
        check(self.fps, "fps")?;
        if !matches!(self.channels, 1 | 3 | 4) {
            return Err(PipelineError::InvalidVideo {
                field: "channels",
                reason: "must be 1, 3 or 4",
            });
        }
        Ok(())
    }

    /// Pixel sites `N·M·F` (channels not counted).
    pub fn pixels(&self) -> u64 {
        self.width as u64 * self.height as u64 * self.frames as u64
    }

    pub fn elements(&self) -> u64 {
        self.pixels() * self.channels as u64
    }

    pub fn storage_bytes(&self, bytes_per_channel: u64) -> u64 {
        self.elements() * bytes_per_channel
    }

    pub fn with_channels(self, channels: u32) -> Self {
        VideoDims { channels, ..self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_examples() {
        assert_eq!(frame_count(1, 600), 600);
        assert_eq!(frame_count(0, 1000), 0);
        assert_eq!(frame_count(2, 1000), 2000);
    }

    #[test]
    fn hsdv_clip_storage_is_about_190_mb() {
        let dims = VideoDims::from_duration(192, 432, 1, 600, 4).unwrap();
        assert_eq!(dims.frames, 600);
        let bytes = dims.storage_bytes(1);
        assert_eq!(bytes, 192 * 432 * 600 * 4);
        let mib = bytes as f64 / (1024.0 * 1024.0);
        assert!((mib - 190.0).abs() / 190.0 < 0.05, "{mib} MiB");
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(VideoDims::new(0, 1, 1, 1, 1).is_err());
        assert!(VideoDims::new(1, 1, 1, 0, 1).is_err());
        assert!(VideoDims::new(1, 1, 1, 1, 2).is_err());
        assert!(VideoDims::new(4, 4, 4, 30, 3).is_ok());
    }
}
