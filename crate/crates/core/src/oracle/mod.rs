//! Black-box summarizer abstraction.
//!
//! An [`Oracle`] scores a video under a declarative [`PerturbationSpec`]; the
//! oracle itself applies the masking, since only the component that computes
//! features can turn "black frames" or "black pixels" into model inputs.
//! In-process toys live in [`toy`] and [`pixel`]; [`client`] talks to an
//! external model server over the newline-delimited JSON protocol in
//! [`protocol`].

pub mod client;
pub mod pixel;
pub mod protocol;
pub mod selector;
pub mod server;
pub mod toy;

pub use client::ExternalOracle;
pub use pixel::{FrameExtractor, GridMeanRgb, PixelOracle};
pub use selector::OracleSelector;
pub use toy::{LinearMaskOracle, MeanFeatureScorer, SmoothedNormScorer, ToyAttentionScorer};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameFeatures, PerturbationSpec, ScoreSequence, VideoBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCapabilities {
    #[serde(rename = "fragment_masks")]
    pub supports_fragment_masks: bool,
    #[serde(rename = "object_masks")]
    pub supports_object_masks: bool,
    #[serde(rename = "attention")]
    pub supports_attention: bool,
    pub batch_limit: usize,
}

impl OracleCapabilities {
    pub fn supports(&self, spec: &PerturbationSpec) -> bool {
        match spec {
            PerturbationSpec::None => true,
            PerturbationSpec::Fragments { .. } => self.supports_fragment_masks,
            PerturbationSpec::Objects { .. } => self.supports_object_masks,
        }
    }
}

/// Per-frame self-attention weights, `A[i][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttentionDiagonal(pub Vec<f64>);

/// A frame-importance scorer treated as a black box.
///
/// Implementations may assume the spec has been validated against the bundle
/// and the capabilities; callers should go through [`score`] and
/// [`score_many`], which do that.
pub trait Oracle: Send + Sync {
    fn capabilities(&self) -> OracleCapabilities;

    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence>;

    /// Score several perturbations of one video. Results come back in input
    /// order whatever the completion order.
    fn score_batch(
        &self,
        bundle: &VideoBundle,
        specs: &[PerturbationSpec],
    ) -> Result<Vec<ScoreSequence>> {
        specs.par_iter().map(|s| self.score(bundle, s)).collect()
    }

    fn attention_diagonal(&self, _bundle: &VideoBundle) -> Result<AttentionDiagonal> {
        Err(Error::Unsupported("oracle does not expose attention".into()))
    }
}

fn check_request(caps: &OracleCapabilities, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<()> {
    spec.validate(bundle)?;
    if !caps.supports(spec) {
        return Err(Error::Unsupported(format!(
            "oracle does not support {} masks",
            spec.kind_name()
        )));
    }
    Ok(())
}

/// Validated single call.
pub fn score(oracle: &dyn Oracle, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
    check_request(&oracle.capabilities(), bundle, spec)?;
    let out = oracle.score(bundle, spec)?;
    out.check(bundle.n_frames())?;
    Ok(out)
}

/// Validated batch call.
pub fn score_many(
    oracle: &dyn Oracle,
    bundle: &VideoBundle,
    specs: &[PerturbationSpec],
) -> Result<Vec<ScoreSequence>> {
    let caps = oracle.capabilities();
    for spec in specs {
        check_request(&caps, bundle, spec)?;
    }
    let out = oracle.score_batch(bundle, specs)?;
    if out.len() != specs.len() {
        return Err(Error::Oracle(format!(
            "{} score sequences for {} requests",
            out.len(),
            specs.len()
        )));
    }
    for s in &out {
        s.check(bundle.n_frames())?;
    }
    Ok(out)
}

/// Validated attention call.
pub fn attention_diagonal(oracle: &dyn Oracle, bundle: &VideoBundle) -> Result<AttentionDiagonal> {
    if !oracle.capabilities().supports_attention {
        return Err(Error::Unsupported("oracle does not expose attention".into()));
    }
    let diag = oracle.attention_diagonal(bundle)?;
    if diag.0.len() != bundle.n_frames() {
        return Err(Error::Oracle(format!(
            "attention diagonal has {} entries for {} frames",
            diag.0.len(),
            bundle.n_frames()
        )));
    }
    if diag.0.iter().any(|w| !w.is_finite()) {
        return Err(Error::Oracle("non-finite attention weight".into()));
    }
    Ok(diag)
}

/// Frames blacked out by a fragment mask.
pub fn masked_frames(bundle: &VideoBundle, spec: &PerturbationSpec) -> Vec<usize> {
    match spec {
        PerturbationSpec::Fragments { masked_fragments } => masked_fragments
            .iter()
            .filter_map(|&k| bundle.fragmentation.get(k))
            .flat_map(|f| f.frames())
            .collect(),
        _ => Vec::new(),
    }
}

/// A model that maps a feature matrix to per-frame scores.
pub trait FeatureScorer: Send + Sync {
    fn score_features(&self, features: &FrameFeatures) -> Vec<f64>;

    fn attention(&self, _features: &FrameFeatures) -> Option<Vec<f64>> {
        None
    }

    fn supports_attention(&self) -> bool {
        false
    }
}

/// Oracle over a feature-space scorer. Masked frames become the zero vector,
/// the image of a black frame under a mean-colour extractor; object masks
/// need pixels and are therefore not supported here.
#[derive(Debug, Clone, Default)]
pub struct FeatureOracle<S> {
    scorer: S,
}

impl<S: FeatureScorer> FeatureOracle<S> {
    pub fn new(scorer: S) -> Self {
        Self { scorer }
    }

    pub fn scorer(&self) -> &S {
        &self.scorer
    }
}

impl<S: FeatureScorer> Oracle for FeatureOracle<S> {
    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            supports_fragment_masks: true,
            supports_object_masks: false,
            supports_attention: self.scorer.supports_attention(),
            batch_limit: 64,
        }
    }

    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
        let scores = match spec {
            PerturbationSpec::None => self.scorer.score_features(&bundle.features),
            PerturbationSpec::Fragments { .. } => {
                let masked = bundle.features.with_zeroed_frames(masked_frames(bundle, spec));
                self.scorer.score_features(&masked)
            }
            PerturbationSpec::Objects { .. } => {
                return Err(Error::Unsupported(
                    "feature-space oracle cannot mask objects".into(),
                ))
            }
        };
        Ok(ScoreSequence(scores))
    }

    fn attention_diagonal(&self, bundle: &VideoBundle) -> Result<AttentionDiagonal> {
        self.scorer
            .attention(&bundle.features)
            .map(AttentionDiagonal)
            .ok_or_else(|| Error::Unsupported("scorer does not expose attention".into()))
    }
}

impl<T: Oracle + ?Sized> Oracle for Box<T> {
    fn capabilities(&self) -> OracleCapabilities {
        (**self).capabilities()
    }
    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
        (**self).score(bundle, spec)
    }
    fn score_batch(&self, bundle: &VideoBundle, specs: &[PerturbationSpec]) -> Result<Vec<ScoreSequence>> {
        (**self).score_batch(bundle, specs)
    }
    fn attention_diagonal(&self, bundle: &VideoBundle) -> Result<AttentionDiagonal> {
        (**self).attention_diagonal(bundle)
    }
}
