//! Corpus directories: a `manifest.json` listing per-video files, with paths
//! relative to the directory.
//!
//! ```json
//! {"videos": [{"video_id": "v000", "features": "videos/v000/features.bin",
//!              "fragments": "videos/v000/fragments.json"}]}
//! ```
//!
//! `fragments`, `frames` and `segmentation` are optional. Videos without a
//! fragments file are fragmented by shot detection.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragmentation::{detect_shots, subdivide_if_needed, FragmenterConfig};
use crate::model::{
    load_features, load_fragments, load_frames, load_segmentation, validate_bundle, BundleSources, VideoBundle,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragments: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub videos: Vec<ManifestEntry>,
    #[serde(default)]
    pub fragmenter: FragmenterConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

fn load_entry(dir: &Path, entry: &ManifestEntry, fragmenter: &FragmenterConfig) -> Result<VideoBundle> {
    let at = |p: &Path| dir.join(p);
    let features = load_features(at(&entry.features))?;
    let fragmentation = match &entry.fragments {
        Some(p) => load_fragments(at(p))?,
        None => subdivide_if_needed(&detect_shots(&features, fragmenter), fragmenter),
    };
    let sources = BundleSources {
        features: at(&entry.features),
        frames: entry.frames.as_deref().map(at),
        segmentation: entry.segmentation.as_deref().map(at),
    };
    let mut bundle = VideoBundle::new(entry.video_id.clone(), features, fragmentation);
    if let Some(p) = &sources.frames {
        bundle = bundle.with_frames(load_frames(p)?);
    }
    if let Some(p) = &sources.segmentation {
        bundle = bundle.with_segmentation(load_segmentation(p)?);
    }
    let findings = validate_bundle(&bundle);
    if !findings.is_empty() {
        let all: Vec<String> = findings.iter().map(ToString::to_string).collect();
        return Err(Error::Validation(format!("video {}: {}", entry.video_id, all.join("; "))));
    }
    Ok(bundle.with_sources(sources))
}

/// Load every video listed in `dir/manifest.json`, in manifest order.
pub fn load_corpus(dir: &Path) -> Result<Vec<VideoBundle>> {
    let manifest = Manifest::load(&dir.join("manifest.json"))?;
    manifest.fragmenter.validate()?;
    let mut seen = HashSet::new();
    for e in &manifest.videos {
        if !seen.insert(e.video_id.as_str()) {
            return Err(Error::Validation(format!("duplicate video id {} in manifest", e.video_id)));
        }
    }
    manifest
        .videos
        .iter()
        .map(|e| load_entry(dir, e, &manifest.fragmenter))
        .collect()
}
