//! Seeded synthetic corpora with known ground truth.
//!
//! Feature track: every fragment points in its own basis direction, so shot
//! detection recovers the fragments. Frames of the planted fragment have a
//! high RMS feature value; all other frames have a low one that grows slowly
//! with the frame index, which keeps every frame score distinct.
//!
//! Pixel track: 16x16 frames split into a 4x4 grid of 4x4-pixel cells, one
//! object ID per cell. The planted object covers four cells and darkens by
//! one level per frame, the void background reddens by one level per frame,
//! and the dim object is constant. Under a mean-brightness summarizer the
//! planted object dominates every frame score and its removal reverses the
//! frame order, while removing the dim object changes nothing but the level.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::fragmentation::FragmenterConfig;
use crate::model::{
    save_features, save_fragments, save_frames, save_segmentation, Fragment, Fragmentation, FrameFeatures, RawFrames,
    SegmentationMaps, VideoBundle, VOID_ID,
};

pub const GRID: usize = 4;
pub const CELL: usize = 4;
pub const SIDE: usize = GRID * CELL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub n_fragments: usize,
    pub min_fragment_len: usize,
    pub max_fragment_len: usize,
    pub dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_videos: 20,
            n_fragments: 12,
            min_fragment_len: 8,
            max_fragment_len: 14,
            dim: 16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 {
            return Err(Error::Validation("n_videos must be positive".into()));
        }
        if self.n_fragments < 2 {
            return Err(Error::Validation("need at least 2 fragments per video".into()));
        }
        if self.dim < self.n_fragments {
            return Err(Error::Validation(format!(
                "dim {} cannot give {} fragments distinct directions",
                self.dim, self.n_fragments
            )));
        }
        if self.min_fragment_len < 2 || self.max_fragment_len < self.min_fragment_len {
            return Err(Error::Validation("fragment lengths must satisfy 2 <= min <= max".into()));
        }
        // Frame colours move by one level per frame.
        if self.n_fragments * self.max_fragment_len > 200 {
            return Err(Error::Validation("videos are limited to 200 frames".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub video_id: String,
    pub planted_fragment: usize,
    pub planted_object: u16,
    pub bottom_object: u16,
    pub object_ids: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub videos: Vec<VideoTruth>,
}

/// RMS feature value of the planted fragment's frames at relative position `t`.
pub fn planted_level(t: f64) -> f64 {
    0.85 + 0.05 * t
}

/// RMS feature value of every other frame.
pub fn background_level(t: f64) -> f64 {
    0.1 + 0.1 * t
}

fn fragment_lengths(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Fragmentation {
    let mut frags = Vec::with_capacity(cfg.n_fragments);
    let mut start = 0;
    for _ in 0..cfg.n_fragments {
        let len = rng.random_range(cfg.min_fragment_len..=cfg.max_fragment_len);
        frags.push(Fragment::new(start, start + len - 1));
        start += len;
    }
    Fragmentation::new(frags).expect("contiguous by construction")
}

fn features(rng: &mut ChaCha8Rng, cfg: &SynthConfig, frag: &Fragmentation, planted: usize) -> FrameFeatures {
    let n = frag.n_frames();
    let mut axes: Vec<usize> = (0..cfg.dim).collect();
    axes.shuffle(rng);
    let mut data = Vec::with_capacity(n * cfg.dim);
    for (k, f) in frag.fragments().iter().enumerate() {
        for i in f.frames() {
            let t = i as f64 / (n - 1) as f64;
            let level = if k == planted { planted_level(t) } else { background_level(t) };
            let mut dir: Vec<f64> = (0..cfg.dim).map(|_| rng.random_range(-0.05..0.05)).collect();
            dir[axes[k]] += 1.0;
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = level * (cfg.dim as f64).sqrt() / norm;
            data.extend(dir.iter().map(|v| (v * scale) as f32));
        }
    }
    FrameFeatures::new(n, cfg.dim, data).expect("finite by construction")
}

struct Scene {
    /// Object ID per grid cell, row-major.
    cells: Vec<u16>,
    planted: u16,
    dim: u16,
    ids: Vec<u16>,
    /// Constant brightness of the remaining objects.
    levels: Vec<(u16, u8)>,
}

fn scene(rng: &mut ChaCha8Rng) -> Scene {
    let mut pool: Vec<u16> = (1..=60).collect();
    pool.shuffle(rng);
    let ids: Vec<u16> = pool[..6].to_vec();
    let (planted, dim) = (ids[0], ids[5]);
    let mut cells = vec![planted; 4];
    cells.extend(&ids[1..]);
    cells.resize(GRID * GRID, VOID_ID);
    cells.shuffle(rng);
    let levels = ids[1..5].iter().map(|&id| (id, rng.random_range(60..=140u8))).collect();
    let mut sorted = ids.clone();
    sorted.sort_unstable();
    Scene {
        cells,
        planted,
        dim,
        ids: sorted,
        levels,
    }
}

fn cell_color(s: &Scene, id: u16, frame: usize) -> [u8; 3] {
    let i = frame as u8;
    if id == VOID_ID {
        [20 + i, 30, 30]
    } else if id == s.planted {
        [240 - i, 230 - i, 220 - i]
    } else if id == s.dim {
        [8, 8, 8]
    } else {
        let v = s.levels.iter().find(|(o, _)| *o == id).map(|&(_, v)| v).unwrap_or(100);
        [v, v.saturating_add(20), v.saturating_add(10)]
    }
}

fn pixels(s: &Scene, n_frames: usize) -> (RawFrames, SegmentationMaps) {
    let mut labels = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            labels.push(s.cells[(y / CELL) * GRID + x / CELL]);
        }
    }
    let mut data = Vec::with_capacity(n_frames * SIDE * SIDE * 3);
    for i in 0..n_frames {
        for &id in &labels {
            data.extend(cell_color(s, id, i));
        }
    }
    (
        RawFrames::new(n_frames, SIDE, SIDE, data).expect("sized by construction"),
        SegmentationMaps::new(n_frames, SIDE, SIDE, labels.repeat(n_frames)).expect("sized by construction"),
    )
}

pub fn video_id(index: usize) -> String {
    format!("v{index:03}")
}

/// Generate the corpus in memory.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<VideoBundle>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bundles = Vec::with_capacity(cfg.n_videos);
    let mut videos = Vec::with_capacity(cfg.n_videos);
    for v in 0..cfg.n_videos {
        let frag = fragment_lengths(&mut rng, cfg);
        let planted = rng.random_range(0..cfg.n_fragments);
        let feats = features(&mut rng, cfg, &frag, planted);
        let s = scene(&mut rng);
        let (frames, seg) = pixels(&s, frag.n_frames());
        let id = video_id(v);
        videos.push(VideoTruth {
            video_id: id.clone(),
            planted_fragment: planted,
            planted_object: s.planted,
            bottom_object: s.dim,
            object_ids: s.ids,
        });
        bundles.push(VideoBundle::new(id, feats, frag).with_frames(frames).with_segmentation(seg));
    }
    Ok((bundles, GroundTruth { config: cfg.clone(), videos }))
}

/// Generate the corpus and write it under `dir`: one sub-directory per video,
/// plus `manifest.json` and `ground_truth.json`.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<GroundTruth> {
    let (bundles, truth) = generate(cfg)?;
    let mut entries = Vec::with_capacity(bundles.len());
    for b in &bundles {
        let sub = dir.join("videos").join(&b.video_id);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let rel = |name: &str| Path::new("videos").join(&b.video_id).join(name);
        let entry = ManifestEntry {
            video_id: b.video_id.clone(),
            features: rel("features.bin"),
            fragments: Some(rel("fragments.json")),
            frames: Some(rel("frames.bin")),
            segmentation: Some(rel("segmentation.bin")),
        };
        save_features(dir.join(&entry.features), &b.features)?;
        save_fragments(dir.join(entry.fragments.as_ref().unwrap()), &b.fragmentation)?;
        save_frames(dir.join(entry.frames.as_ref().unwrap()), b.frames()?)?;
        save_segmentation(dir.join(entry.segmentation.as_ref().unwrap()), b.segmentation()?)?;
        entries.push(entry);
    }
    Manifest {
        videos: entries,
        fragmenter: FragmenterConfig::default(),
    }
    .save(&dir.join("manifest.json"))?;
    let path = dir.join("ground_truth.json");
    let mut json = serde_json::to_string_pretty(&truth)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(truth)
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join("ground_truth.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
