//! Domain types shared by every stage of the pipeline.
//!
//! Frame indices are 0-based everywhere and fragment ends are inclusive.
//! All types are immutable once constructed and can be shared freely across
//! worker threads.

mod io;
mod validate;

pub use io::{
    decode_features, decode_frames, decode_segmentation, encode_features, encode_frames,
    encode_segmentation, load_features, load_fragments, load_frames, load_segmentation,
    save_features, save_fragments, save_frames, save_segmentation,
};
pub use validate::{validate_bundle, Finding};

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame feature matrix, one row per frame, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    n_frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FrameFeatures {
    pub fn new(n_frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if n_frames == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty, got {n_frames}x{dim}"
            )));
        }
        if data.len() != n_frames * dim {
            return Err(Error::Validation(format!(
                "feature matrix {n_frames}x{dim} needs {} values, got {}",
                n_frames * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at frame {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            n_frames,
            dim,
            data,
        })
    }

    /// Build from rows; every row must share the same length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("ragged feature rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copy with the listed frames replaced by the zero vector.
    pub fn with_zeroed_frames(&self, frames: impl IntoIterator<Item = usize>) -> Self {
        let mut data = self.data.clone();
        for f in frames {
            data[f * self.dim..(f + 1) * self.dim].fill(0.0);
        }
        Self {
            n_frames: self.n_frames,
            dim: self.dim,
            data,
        }
    }
}

/// Per-frame importance scores produced by a summarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreSequence(pub Vec<f64>);

impl ScoreSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Number of scores outside `[0, 1]`. Such scores are tolerated, since an
    /// external oracle may be uncalibrated, but they are worth reporting.
    pub fn out_of_range(&self) -> usize {
        self.0.iter().filter(|s| !(0.0..=1.0).contains(*s)).count()
    }

    /// Mean over the inclusive frame range `[start, end]`.
    pub fn mean_over(&self, start: usize, end: usize) -> f64 {
        let span = &self.0[start..=end];
        span.iter().sum::<f64>() / span.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.mean_over(0, self.0.len() - 1)
    }

    /// Check length and finiteness against the video it scores.
    pub fn check(&self, n_frames: usize) -> Result<()> {
        if self.0.len() != n_frames {
            return Err(Error::Oracle(format!(
                "score sequence has {} entries for a {n_frames}-frame video",
                self.0.len()
            )));
        }
        if let Some(i) = self.0.iter().position(|s| !s.is_finite()) {
            return Err(Error::Oracle(format!("non-finite score at frame {i}")));
        }
        let bad = self.out_of_range();
        if bad > 0 {
            log::warn!("{bad} score(s) outside [0, 1]; oracle may be uncalibrated");
        }
        Ok(())
    }
}

/// Inclusive frame range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
}

impl Fragment {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl Serialize for Fragment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fragment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        if start > end {
            return Err(serde::de::Error::custom(format!(
                "fragment start {start} after end {end}"
            )));
        }
        Ok(Self { start, end })
    }
}

/// Ordered partition of a video into consecutive, non-overlapping fragments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Fragmentation {
    fragments: Vec<Fragment>,
}

impl Fragmentation {
    /// Validate contiguity: the first fragment starts at frame 0 and each
    /// fragment starts right after its predecessor ends.
    pub fn new(fragments: Vec<Fragment>) -> Result<Self> {
        let first = fragments
            .first()
            .ok_or_else(|| Error::Validation("fragmentation is empty".into()))?;
        if first.start != 0 {
            return Err(Error::Validation(format!(
                "first fragment starts at frame {} instead of 0",
                first.start
            )));
        }
        for (i, pair) in fragments.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            if b.start > a.end + 1 {
                return Err(Error::Validation(format!(
                    "gap after fragment {i}: fragment {} starts at {} but fragment {i} ends at {}",
                    i + 1,
                    b.start,
                    a.end
                )));
            }
            if b.start <= a.end {
                return Err(Error::Validation(format!(
                    "overlap between fragments {i} and {}: [{}, {}] and [{}, {}]",
                    i + 1,
                    a.start,
                    a.end,
                    b.start,
                    b.end
                )));
            }
        }
        Ok(Self { fragments })
    }

    /// Validate contiguity and exact coverage of `n_frames`.
    pub fn covering(fragments: Vec<Fragment>, n_frames: usize) -> Result<Self> {
        let frag = Self::new(fragments)?;
        if frag.n_frames() != n_frames {
            return Err(Error::Validation(format!(
                "fragmentation ends at frame {} but the video has {n_frames} frames",
                frag.n_frames() - 1
            )));
        }
        Ok(frag)
    }

    /// A single fragment spanning the whole video.
    pub fn whole(n_frames: usize) -> Self {
        Self {
            fragments: vec![Fragment::new(0, n_frames - 1)],
        }
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn get(&self, index: usize) -> Option<Fragment> {
        self.fragments.get(index).copied()
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// Number of frames covered.
    pub fn n_frames(&self) -> usize {
        self.fragments.last().map_or(0, |f| f.end + 1)
    }

    pub fn as_pairs(&self) -> Vec<[usize; 2]> {
        self.fragments.iter().map(|f| [f.start, f.end]).collect()
    }
}

impl<'de> Deserialize<'de> for Fragmentation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let fragments = Vec::<Fragment>::deserialize(d)?;
        Fragmentation::new(fragments).map_err(serde::de::Error::custom)
    }
}

/// Per-frame panoptic label grids. ID 0 means void/unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMaps {
    n_frames: usize,
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

pub const VOID_ID: u16 = 0;

impl SegmentationMaps {
    pub fn new(n_frames: usize, height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if n_frames == 0 || height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "segmentation must be non-empty, got {n_frames}x{height}x{width}"
            )));
        }
        if labels.len() != n_frames * height * width {
            return Err(Error::Validation(format!(
                "segmentation {n_frames}x{height}x{width} needs {} labels, got {}",
                n_frames * height * width,
                labels.len()
            )));
        }
        Ok(Self {
            n_frames,
            height,
            width,
            labels,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self, frame: usize) -> &[u16] {
        let px = self.height * self.width;
        &self.labels[frame * px..(frame + 1) * px]
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.labels
    }
}

/// Raw RGB frames, interleaved 8-bit channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrames {
    n_frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RawFrames {
    pub fn new(n_frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if n_frames == 0 || height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "frames must be non-empty, got {n_frames}x{height}x{width}"
            )));
        }
        if data.len() != n_frames * height * width * 3 {
            return Err(Error::Validation(format!(
                "frames {n_frames}x{height}x{width}x3 need {} bytes, got {}",
                n_frames * height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            n_frames,
            height,
            width,
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self, frame: usize) -> &[u8] {
        let bytes = self.height * self.width * 3;
        &self.data[frame * bytes..(frame + 1) * bytes]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

/// Declarative description of what a perturbation masks out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PerturbationSpec {
    None,
    Fragments {
        masked_fragments: BTreeSet<usize>,
    },
    Objects {
        fragment: usize,
        masked_objects: BTreeSet<u16>,
    },
}

impl PerturbationSpec {
    pub fn fragments(indices: impl IntoIterator<Item = usize>) -> Self {
        PerturbationSpec::Fragments {
            masked_fragments: indices.into_iter().collect(),
        }
    }

    pub fn objects(fragment: usize, ids: impl IntoIterator<Item = u16>) -> Self {
        PerturbationSpec::Objects {
            fragment,
            masked_objects: ids.into_iter().collect(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PerturbationSpec::None => "none",
            PerturbationSpec::Fragments { .. } => "fragments",
            PerturbationSpec::Objects { .. } => "objects",
        }
    }

    /// Check indices against the bundle and that masked sets are non-empty.
    pub fn validate(&self, bundle: &VideoBundle) -> Result<()> {
        let n_frag = bundle.fragmentation.len();
        match self {
            PerturbationSpec::None => Ok(()),
            PerturbationSpec::Fragments { masked_fragments } => {
                if masked_fragments.is_empty() {
                    return Err(Error::Validation("fragment mask is empty".into()));
                }
                match masked_fragments.iter().find(|&&k| k >= n_frag) {
                    Some(k) => Err(Error::Validation(format!(
                        "masked fragment {k} out of range ({n_frag} fragments)"
                    ))),
                    None => Ok(()),
                }
            }
            PerturbationSpec::Objects {
                fragment,
                masked_objects,
            } => {
                if *fragment >= n_frag {
                    return Err(Error::Validation(format!(
                        "target fragment {fragment} out of range ({n_frag} fragments)"
                    )));
                }
                if masked_objects.is_empty() {
                    return Err(Error::Validation("object mask is empty".into()));
                }
                if masked_objects.contains(&VOID_ID) {
                    return Err(Error::Validation("void id 0 cannot be masked".into()));
                }
                if bundle.segmentation.is_none() {
                    return Err(Error::Validation(format!(
                        "video {} has no segmentation maps",
                        bundle.video_id
                    )));
                }
                Ok(())
            }
        }
    }
}

/// On-disk locations a bundle was loaded from; external oracles need them to
/// load the same data on their side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BundleSources {
    pub features: PathBuf,
    pub frames: Option<PathBuf>,
    pub segmentation: Option<PathBuf>,
}

/// All per-video inputs.
#[derive(Debug, Clone)]
pub struct VideoBundle {
    pub video_id: String,
    pub features: FrameFeatures,
    pub fragmentation: Fragmentation,
    pub frames: Option<RawFrames>,
    pub segmentation: Option<SegmentationMaps>,
    pub sources: Option<BundleSources>,
}

impl VideoBundle {
    pub fn new(video_id: impl Into<String>, features: FrameFeatures, fragmentation: Fragmentation) -> Self {
        Self {
            video_id: video_id.into(),
            features,
            fragmentation,
            frames: None,
            segmentation: None,
            sources: None,
        }
    }

    pub fn with_frames(mut self, frames: RawFrames) -> Self {
        self.frames = Some(frames);
        self
    }

    pub fn with_segmentation(mut self, seg: SegmentationMaps) -> Self {
        self.segmentation = Some(seg);
        self
    }

    pub fn with_sources(mut self, sources: BundleSources) -> Self {
        self.sources = Some(sources);
        self
    }

    pub fn n_frames(&self) -> usize {
        self.features.n_frames()
    }

    pub fn n_fragments(&self) -> usize {
        self.fragmentation.len()
    }

    pub fn fragment(&self, index: usize) -> Result<Fragment> {
        self.fragmentation.get(index).ok_or_else(|| {
            Error::Validation(format!(
                "fragment {index} out of range ({} fragments)",
                self.fragmentation.len()
            ))
        })
    }

    pub fn segmentation(&self) -> Result<&SegmentationMaps> {
        self.segmentation.as_ref().ok_or_else(|| {
            Error::Validation(format!("video {} has no segmentation maps", self.video_id))
        })
    }

    pub fn frames(&self) -> Result<&RawFrames> {
        self.frames
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("video {} has no raw frames", self.video_id)))
    }
}
