//! Small deterministic stand-ins for a real summarizer.

use super::{masked_frames, FeatureScorer, Oracle, OracleCapabilities};
use crate::error::{Error, Result};
use crate::model::{FrameFeatures, PerturbationSpec, ScoreSequence, VideoBundle};

/// Test oracle that is exactly linear in the fragment-mask indicator:
/// `score_i = clamp(base - sum(weights[k] for masked k) + frame_slope * i)`.
///
/// A non-zero `frame_slope` gives every frame a distinct score so rank
/// statistics are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMaskOracle {
    pub base: f64,
    pub weights: Vec<f64>,
    pub frame_slope: f64,
}

impl LinearMaskOracle {
    pub fn new(base: f64, weights: Vec<f64>) -> Result<Self> {
        if !base.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("linear oracle parameters must be finite".into()));
        }
        Ok(Self {
            base,
            weights,
            frame_slope: 0.0,
        })
    }

    pub fn with_frame_slope(mut self, slope: f64) -> Self {
        self.frame_slope = slope;
        self
    }
}

impl Oracle for LinearMaskOracle {
    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            supports_fragment_masks: true,
            supports_object_masks: false,
            supports_attention: false,
            batch_limit: 1024,
        }
    }

    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
        if self.weights.len() != bundle.n_fragments() {
            return Err(Error::Oracle(format!(
                "linear oracle has {} weights for {} fragments",
                self.weights.len(),
                bundle.n_fragments()
            )));
        }
        let removed: f64 = match spec {
            PerturbationSpec::None => 0.0,
            PerturbationSpec::Fragments { masked_fragments } => {
                masked_fragments.iter().map(|&k| self.weights[k]).sum()
            }
            PerturbationSpec::Objects { .. } => {
                return Err(Error::Unsupported("linear oracle cannot mask objects".into()))
            }
        };
        let level = self.base - removed;
        Ok(ScoreSequence(
            (0..bundle.n_frames())
                .map(|i| (level + self.frame_slope * i as f64).clamp(0.0, 1.0))
                .collect(),
        ))
    }
}

fn norms(features: &FrameFeatures) -> Vec<f64> {
    (0..features.n_frames())
        .map(|i| {
            features
                .row(i)
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Frame L2 norms divided by `sqrt(dim)` (the root mean square of the row),
/// capped at 1. Each frame is normalized on its own, so masking one frame
/// never changes another frame's value.
pub fn normalized_norms(features: &FrameFeatures) -> Vec<f64> {
    let scale = (features.dim() as f64).sqrt();
    norms(features).into_iter().map(|v| (v / scale).min(1.0)).collect()
}

/// Self-attention summarizer: `A = softmax_rows(F Fᵀ / sqrt(dim))`, and each
/// frame scores `sum_j A[i][j] * s_j` with `s` the normalized frame norms.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyAttentionScorer;

impl ToyAttentionScorer {
    /// Row-major `n x n` attention matrix.
    pub fn attention_matrix(features: &FrameFeatures) -> Vec<f64> {
        let n = features.n_frames();
        let scale = 1.0 / (features.dim() as f64).sqrt();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| features.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let logits = &mut a[i * n..(i + 1) * n];
            for j in 0..n {
                logits[j] = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum::<f64>() * scale;
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            for l in logits.iter_mut() {
                *l /= total;
            }
        }
        a
    }
}

impl FeatureScorer for ToyAttentionScorer {
    fn score_features(&self, features: &FrameFeatures) -> Vec<f64> {
        let n = features.n_frames();
        let a = Self::attention_matrix(features);
        let s = normalized_norms(features);
        (0..n)
            .map(|i| {
                a[i * n..(i + 1) * n]
                    .iter()
                    .zip(&s)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            })
            .collect()
    }

    fn attention(&self, features: &FrameFeatures) -> Option<Vec<f64>> {
        let n = features.n_frames();
        let a = Self::attention_matrix(features);
        Some((0..n).map(|i| a[i * n + i]).collect())
    }

    fn supports_attention(&self) -> bool {
        true
    }
}

/// Normalized frame norm smoothed by a centred moving average. Windows are
/// truncated at the ends of the video.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedNormScorer {
    pub window: usize,
}

impl Default for SmoothedNormScorer {
    fn default() -> Self {
        Self { window: 5 }
    }
}

impl FeatureScorer for SmoothedNormScorer {
    fn score_features(&self, features: &FrameFeatures) -> Vec<f64> {
        let s = normalized_norms(features);
        let half = self.window / 2;
        let n = s.len();
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(n - 1);
                s[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect()
    }
}

/// Frame score = mean feature value, clamped to `[0, 1]`. Over mean-colour
/// grid features this is the frame's mean brightness.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanFeatureScorer;

impl FeatureScorer for MeanFeatureScorer {
    fn score_features(&self, features: &FrameFeatures) -> Vec<f64> {
        (0..features.n_frames())
            .map(|i| {
                let row = features.row(i);
                (row.iter().map(|&v| f64::from(v)).sum::<f64>() / row.len() as f64).clamp(0.0, 1.0)
            })
            .collect()
    }
}

/// Fragment masks as a feature-space transform, for scorers that are not
/// wrapped in an oracle.
pub fn apply_fragment_mask(bundle: &VideoBundle, spec: &PerturbationSpec) -> FrameFeatures {
    bundle.features.with_zeroed_frames(masked_frames(bundle, spec))
}
