//! Binary and JSON file formats.
//!
//! Every binary file starts with a 4-byte ASCII magic and a little-endian u32
//! version (currently 1), followed by u32 shape fields and a dense
//! little-endian payload:
//!
//! ```text
//! XSFM  version n_frames dim            f32 * n_frames*dim
//! XSSG  version n_frames height width   u16 * n_frames*height*width
//! XSFR  version n_frames height width   u8  * n_frames*height*width*3
//! ```
//!
//! Fragment files are JSON arrays of inclusive `[start, end]` pairs.

use std::path::Path;

use super::{Fragment, Fragmentation, FrameFeatures, RawFrames, SegmentationMaps};
use crate::error::{Error, Result};

const FEATURES_MAGIC: &[u8; 4] = b"XSFM";
const SEGMENTATION_MAGIC: &[u8; 4] = b"XSSG";
const FRAMES_MAGIC: &[u8; 4] = b"XSFR";
const VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.bytes.len(),
                format!(
                    "truncated {what}: needed {n} bytes at offset {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(Error::format(
                4,
                format!("unsupported version {version}, expected {VERSION}"),
            ));
        }
        Ok(())
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u32(what)? as usize;
        if v == 0 {
            return Err(Error::format(at, format!("{what} must be positive")));
        }
        Ok(v)
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::format(
                self.offset,
                format!("{} trailing bytes", self.bytes.len() - self.offset),
            ));
        }
        Ok(())
    }
}

fn payload_len(offset: usize, dims: &[usize], elem: usize) -> Result<usize> {
    dims.iter()
        .try_fold(elem, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(offset, "declared shape overflows"))
}

fn header_bytes(magic: &[u8; 4], dims: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * dims.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FrameFeatures> {
    let mut cur = Cursor::new(bytes);
    cur.header(FEATURES_MAGIC)?;
    let n_frames = cur.dim("n_frames")?;
    let dim = cur.dim("dim")?;
    let start = cur.offset;
    let payload = cur.take(payload_len(start, &[n_frames, dim], 4)?, "feature payload")?;
    cur.finish()?;
    let mut data = Vec::with_capacity(n_frames * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::format(start + 4 * i, format!("non-finite feature value {v}")));
        }
        data.push(v);
    }
    FrameFeatures::new(n_frames, dim, data)
}

pub fn encode_features(features: &FrameFeatures) -> Vec<u8> {
    let mut out = header_bytes(FEATURES_MAGIC, &[features.n_frames(), features.dim()]);
    out.reserve(features.as_slice().len() * 4);
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_segmentation(bytes: &[u8]) -> Result<SegmentationMaps> {
    let mut cur = Cursor::new(bytes);
    cur.header(SEGMENTATION_MAGIC)?;
    let n_frames = cur.dim("n_frames")?;
    let height = cur.dim("height")?;
    let width = cur.dim("width")?;
    let start = cur.offset;
    let payload = cur.take(
        payload_len(start, &[n_frames, height, width], 2)?,
        "label payload",
    )?;
    cur.finish()?;
    let labels = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    SegmentationMaps::new(n_frames, height, width, labels)
}

pub fn encode_segmentation(seg: &SegmentationMaps) -> Vec<u8> {
    let mut out = header_bytes(
        SEGMENTATION_MAGIC,
        &[seg.n_frames(), seg.height(), seg.width()],
    );
    out.reserve(seg.as_slice().len() * 2);
    for v in seg.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frames(bytes: &[u8]) -> Result<RawFrames> {
    let mut cur = Cursor::new(bytes);
    cur.header(FRAMES_MAGIC)?;
    let n_frames = cur.dim("n_frames")?;
    let height = cur.dim("height")?;
    let width = cur.dim("width")?;
    let start = cur.offset;
    let payload = cur.take(
        payload_len(start, &[n_frames, height, width, 3], 1)?,
        "pixel payload",
    )?;
    cur.finish()?;
    RawFrames::new(n_frames, height, width, payload.to_vec())
}

pub fn encode_frames(frames: &RawFrames) -> Vec<u8> {
    let mut out = header_bytes(
        FRAMES_MAGIC,
        &[frames.n_frames(), frames.height(), frames.width()],
    );
    out.extend_from_slice(frames.as_slice());
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FrameFeatures> {
    let path = path.as_ref();
    with_path(path, decode_features(&read(path)?))
}

pub fn save_features(path: impl AsRef<Path>, features: &FrameFeatures) -> Result<()> {
    write(path.as_ref(), &encode_features(features))
}

pub fn load_segmentation(path: impl AsRef<Path>) -> Result<SegmentationMaps> {
    let path = path.as_ref();
    with_path(path, decode_segmentation(&read(path)?))
}

pub fn save_segmentation(path: impl AsRef<Path>, seg: &SegmentationMaps) -> Result<()> {
    write(path.as_ref(), &encode_segmentation(seg))
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<RawFrames> {
    let path = path.as_ref();
    with_path(path, decode_frames(&read(path)?))
}

pub fn save_frames(path: impl AsRef<Path>, frames: &RawFrames) -> Result<()> {
    write(path.as_ref(), &encode_frames(frames))
}

pub fn load_fragments(path: impl AsRef<Path>) -> Result<Fragmentation> {
    let path = path.as_ref();
    let pairs: Vec<Fragment> = serde_json::from_slice(&read(path)?)?;
    Fragmentation::new(pairs)
}

pub fn save_fragments(path: impl AsRef<Path>, frag: &Fragmentation) -> Result<()> {
    let bytes = serde_json::to_vec(frag)?;
    write(path.as_ref(), &bytes)
}
