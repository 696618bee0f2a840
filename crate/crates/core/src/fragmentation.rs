//! Temporal fragmentation when none is supplied.
//!
//! Shot boundaries are detected by thresholding the cosine distance between
//! consecutive feature rows. If that yields fewer than `min_fragments`
//! fragments the video is re-partitioned uniformly, so that a top-3 summary
//! still condenses the video.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fragment, Fragmentation, FrameFeatures, ScoreSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmenterConfig {
    /// A boundary is placed between frames whose cosine distance exceeds this.
    pub distance_threshold: f64,
    /// Fragmentations with fewer fragments than this get subdivided.
    pub min_fragments: usize,
    /// Number of near-equal fragments produced by the subdivision.
    pub fallback_fragment_count: usize,
}

impl Default for FragmenterConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.5,
            min_fragments: 10,
            fallback_fragment_count: 12,
        }
    }
}

impl FragmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0) {
            return Err(Error::Validation("distance threshold must be positive".into()));
        }
        if self.min_fragments == 0 {
            return Err(Error::Validation("min_fragments must be at least 1".into()));
        }
        if self.fallback_fragment_count < self.min_fragments {
            return Err(Error::Validation(format!(
                "fallback_fragment_count {} below min_fragments {}",
                self.fallback_fragment_count, self.min_fragments
            )));
        }
        Ok(())
    }
}

/// Cosine similarity of two rows. Two zero rows are identical (1); a zero
/// row against a non-zero one shares nothing (0).
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => dot / (na.sqrt() * nb.sqrt()),
    }
}

pub fn detect_shots(features: &FrameFeatures, cfg: &FragmenterConfig) -> Fragmentation {
    let n = features.n_frames();
    let mut fragments = Vec::new();
    let mut start = 0;
    for i in 0..n.saturating_sub(1) {
        let distance = 1.0 - cosine_similarity(features.row(i), features.row(i + 1));
        if distance > cfg.distance_threshold {
            fragments.push(Fragment::new(start, i));
            start = i + 1;
        }
    }
    fragments.push(Fragment::new(start, n - 1));
    Fragmentation::new(fragments).expect("boundaries are contiguous by construction")
}

/// Split `n_frames` into `count` contiguous runs whose lengths differ by at
/// most one; the earliest runs take the remainder frames.
pub fn uniform_fragmentation(n_frames: usize, count: usize) -> Fragmentation {
    let count = count.clamp(1, n_frames);
    let (base, extra) = (n_frames / count, n_frames % count);
    let mut start = 0;
    let fragments = (0..count)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let f = Fragment::new(start, start + len - 1);
            start += len;
            f
        })
        .collect();
    Fragmentation::new(fragments).expect("uniform runs are contiguous")
}

pub fn subdivide_if_needed(frag: &Fragmentation, cfg: &FragmenterConfig) -> Fragmentation {
    if frag.len() >= cfg.min_fragments {
        return frag.clone();
    }
    // Videos shorter than the target count end up with one fragment per frame.
    uniform_fragmentation(frag.n_frames(), cfg.fallback_fragment_count)
}

/// Mean frame score of each fragment.
pub fn fragment_scores(scores: &ScoreSequence, frag: &Fragmentation) -> Vec<f64> {
    frag.fragments()
        .iter()
        .map(|f| scores.mean_over(f.start, f.end))
        .collect()
}
