//! Raw video files: a little-endian header followed by planar frames.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FPVD"
//!      4     4  version (1)
//!      8     4  width
//!     12     4  height
//!     16     4  frames
//!     20     4  channels
//!     24     1  element type (0 = u8, 1 = f32)
//!     25     3  zero
//!     28        frame 0 channel 0 (height × width), frame 0 channel 1, ...
//! ```

use std::io::{Read, Write};

use fuseplan_core::sim::VideoData;
use fuseplan_core::VideoDims;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FPVD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    U8,
    F32,
}

impl ElementType {
    fn code(self) -> u8 {
        match self {
            ElementType::U8 => 0,
            ElementType::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::F32 => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum FpvdError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an FPVD file")]
    BadMagic,
    #[error("unsupported FPVD version {0}")]
    Version(u32),
    #[error("unknown element type code {0}")]
    ElementType(u8),
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("file holds {found} data bytes, header implies {expected}")]
    Length { expected: u64, found: u64 },
    #[error("value {value} at element {index} is not representable as u8")]
    NotU8 { index: usize, value: f32 },
}

fn le(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Reads a whole file. The format carries no frame rate; `fps` fills it in.
pub fn read_video(mut r: impl Read, fps: u32) -> Result<(VideoData, ElementType), FpvdError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes, fps)
}

pub fn decode(bytes: &[u8], fps: u32) -> Result<(VideoData, ElementType), FpvdError> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err(FpvdError::BadMagic);
    }
    let version = le(bytes, 4);
    if version != VERSION {
        return Err(FpvdError::Version(version));
    }
    let elem = match bytes[24] {
        0 => ElementType::U8,
        1 => ElementType::F32,
        c => return Err(FpvdError::ElementType(c)),
    };
    let dims = VideoDims::new(
        le(bytes, 8),
        le(bytes, 12),
        le(bytes, 16),
        fps.max(1),
        le(bytes, 20),
    )
    .map_err(|e| FpvdError::Dims(e.to_string()))?;
    let n = dims.elements() as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = (n * elem.width()) as u64;
    if body.len() as u64 != expected {
        return Err(FpvdError::Length {
            expected,
            found: body.len() as u64,
        });
    }
    let (w, h, ch) = (
        dims.width as usize,
        dims.height as usize,
        dims.channels as usize,
    );
    let mut video = VideoData::zeros(dims);
    let data = video.data_mut();
    for (p, chunk) in body.chunks_exact(elem.width()).enumerate() {
        let v = match elem {
            ElementType::U8 => chunk[0] as f32,
            ElementType::F32 => f32::from_le_bytes(chunk.try_into().expect("4 bytes")),
        };
        // planar position p = ((t·ch + c)·h + y)·w + x
        let x = p % w;
        let y = p / w % h;
        let c = p / (w * h) % ch;
        let t = p / (w * h * ch);
        data[((t * h + y) * w + x) * ch + c] = v;
    }
    Ok((video, elem))
}

pub fn encode(video: &VideoData, elem: ElementType) -> Result<Vec<u8>, FpvdError> {
    let d = video.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + d.elements() as usize * elem.width());
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, d.width, d.height, d.frames, d.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[elem.code(), 0, 0, 0]);
    let data = video.data();
    let (w, h, ch) = (d.width as usize, d.height as usize, d.channels as usize);
    for t in 0..d.frames as usize {
        for c in 0..ch {
            for y in 0..h {
                for x in 0..w {
                    let index = ((t * h + y) * w + x) * ch + c;
                    let v = data[index];
                    match elem {
                        ElementType::U8 => {
                            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                                return Err(FpvdError::NotU8 { index, value: v });
                            }
                            out.push(v as u8);
                        }
                        ElementType::F32 => out.extend_from_slice(&v.to_le_bytes()),
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn write_video(
    mut w: impl Write,
    video: &VideoData,
    elem: ElementType,
) -> Result<(), FpvdError> {
    w.write_all(&encode(video, elem)?)?;
    Ok(())
}
