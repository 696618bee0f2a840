//! Pixel-space oracle: black out pixels, re-extract features, re-score.

use super::{masked_frames, AttentionDiagonal, FeatureScorer, Oracle, OracleCapabilities};
use crate::error::{Error, Result};
use crate::model::{FrameFeatures, PerturbationSpec, RawFrames, ScoreSequence, VideoBundle};

/// Turns one RGB frame into a feature row.
pub trait FrameExtractor: Send + Sync {
    fn dim(&self) -> usize;

    fn extract(&self, rgb: &[u8], height: usize, width: usize) -> Vec<f32>;

    fn extract_all(&self, frames: &RawFrames) -> FrameFeatures {
        let (h, w) = (frames.height(), frames.width());
        let data = (0..frames.n_frames())
            .flat_map(|i| self.extract(frames.frame(i), h, w))
            .collect();
        FrameFeatures::new(frames.n_frames(), self.dim(), data)
            .expect("extractor rows have the declared dimension")
    }
}

/// Mean RGB over a `cells x cells` grid, scaled to `[0, 1]`. Feature layout
/// is cell-major (row, then column), then channel; a 4x4 grid gives 48 values.
#[derive(Debug, Clone, Copy)]
pub struct GridMeanRgb {
    pub cells: usize,
}

impl Default for GridMeanRgb {
    fn default() -> Self {
        Self { cells: 4 }
    }
}

impl GridMeanRgb {
    /// Pixel rows (or columns) covered by cell `c` along an axis of `len` pixels.
    pub fn cell_span(&self, c: usize, len: usize) -> std::ops::Range<usize> {
        (c * len / self.cells)..((c + 1) * len / self.cells)
    }
}

impl FrameExtractor for GridMeanRgb {
    fn dim(&self) -> usize {
        self.cells * self.cells * 3
    }

    fn extract(&self, rgb: &[u8], height: usize, width: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim());
        for cr in 0..self.cells {
            for cc in 0..self.cells {
                let mut sum = [0u64; 3];
                let mut count = 0u64;
                for y in self.cell_span(cr, height) {
                    for x in self.cell_span(cc, width) {
                        let p = (y * width + x) * 3;
                        for ch in 0..3 {
                            sum[ch] += u64::from(rgb[p + ch]);
                        }
                        count += 1;
                    }
                }
                for s in sum {
                    out.push(if count == 0 {
                        0.0
                    } else {
                        (s as f64 / count as f64 / 255.0) as f32
                    });
                }
            }
        }
        out
    }
}

/// Composes a frame extractor with a feature-space scorer. Fragment masks
/// black out whole frames; object masks black out the pixels carrying the
/// masked IDs in every frame of the target fragment.
#[derive(Debug, Clone, Default)]
pub struct PixelOracle<E, S> {
    extractor: E,
    scorer: S,
}

impl<E: FrameExtractor, S: FeatureScorer> PixelOracle<E, S> {
    pub fn new(extractor: E, scorer: S) -> Self {
        Self { extractor, scorer }
    }

    pub fn extractor(&self) -> &E {
        &self.extractor
    }

    /// Features of the perturbed video.
    pub fn perturbed_features(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<FrameFeatures> {
        let frames = bundle.frames()?;
        let (h, w) = (frames.height(), frames.width());
        let n = frames.n_frames();
        let mut rows: Vec<Option<Vec<f32>>> = vec![None; n];

        match spec {
            PerturbationSpec::None => {}
            PerturbationSpec::Fragments { .. } => {
                let black = self.extractor.extract(&vec![0u8; h * w * 3], h, w);
                for i in masked_frames(bundle, spec) {
                    rows[i] = Some(black.clone());
                }
            }
            PerturbationSpec::Objects {
                fragment,
                masked_objects,
            } => {
                let seg = bundle.segmentation()?;
                if (seg.height(), seg.width()) != (h, w) {
                    return Err(Error::Validation(format!(
                        "label grid {}x{} does not match frames {h}x{w}",
                        seg.height(),
                        seg.width()
                    )));
                }
                for i in bundle.fragment(*fragment)?.frames() {
                    let labels = seg.frame(i);
                    if !labels.iter().any(|l| masked_objects.contains(l)) {
                        continue;
                    }
                    let mut pixels = frames.frame(i).to_vec();
                    for (p, l) in labels.iter().enumerate() {
                        if masked_objects.contains(l) {
                            pixels[p * 3..p * 3 + 3].fill(0);
                        }
                    }
                    rows[i] = Some(self.extractor.extract(&pixels, h, w));
                }
            }
        }

        let data = rows
            .into_iter()
            .enumerate()
            .flat_map(|(i, r)| r.unwrap_or_else(|| self.extractor.extract(frames.frame(i), h, w)))
            .collect();
        FrameFeatures::new(n, self.extractor.dim(), data)
    }
}

impl<E: FrameExtractor, S: FeatureScorer> Oracle for PixelOracle<E, S> {
    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            supports_fragment_masks: true,
            supports_object_masks: true,
            supports_attention: self.scorer.supports_attention(),
            batch_limit: 64,
        }
    }

    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
        let features = self.perturbed_features(bundle, spec)?;
        Ok(ScoreSequence(self.scorer.score_features(&features)))
    }

    fn attention_diagonal(&self, bundle: &VideoBundle) -> Result<AttentionDiagonal> {
        let features = self.extractor.extract_all(bundle.frames()?);
        self.scorer
            .attention(&features)
            .map(AttentionDiagonal)
            .ok_or_else(|| Error::Unsupported("scorer does not expose attention".into()))
    }
}
