//! Fragment-level explanations.
//!
//! The model-agnostic route blacks out random subsets of fragments, scores
//! each perturbed video, and regresses the mean frame score on the mask bits.
//! The model-specific route averages the summarizer's attention diagonal
//! inside each fragment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragmentation::fragment_scores;
use crate::lime::{bottom_of, explain_with, rank_descending, top_of, LimeConfig, TOP_K};
use crate::model::{PerturbationSpec, ScoreSequence, VideoBundle};
use crate::oracle::{self, Oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lime,
    Attention,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lime => "lime",
            Method::Attention => "attention",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lime" => Ok(Method::Lime),
            "attention" => Ok(Method::Attention),
            _ => Err(Error::Validation(format!("unknown method `{s}`"))),
        }
    }
}

/// Serialized as `<video_id>.fragments.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentExplanation {
    pub video_id: String,
    pub method: Method,
    pub weights: Vec<f64>,
    pub ranking: Vec<usize>,
    pub top: Vec<usize>,
    /// Least influential first.
    pub bottom: Vec<usize>,
    pub config_echo: Option<LimeConfig>,
    pub r2: Option<f64>,
    pub n_perturbations: usize,
    pub exhaustive: bool,
}

impl FragmentExplanation {
    fn from_weights(video_id: &str, method: Method, weights: Vec<f64>) -> Self {
        let ranking = rank_descending(&weights);
        Self {
            video_id: video_id.to_string(),
            method,
            top: top_of(&ranking, TOP_K),
            bottom: bottom_of(&ranking, TOP_K),
            ranking,
            weights,
            config_echo: None,
            r2: None,
            n_perturbations: 0,
            exhaustive: false,
        }
    }
}

fn fragment_spec(mask: &[bool]) -> PerturbationSpec {
    let hidden: Vec<usize> = mask.iter().enumerate().filter(|(_, &b)| !b).map(|(k, _)| k).collect();
    if hidden.is_empty() {
        PerturbationSpec::None
    } else {
        PerturbationSpec::fragments(hidden)
    }
}

pub fn lime_fragment_explain(oracle: &dyn Oracle, bundle: &VideoBundle, cfg: &LimeConfig) -> Result<FragmentExplanation> {
    if !oracle.capabilities().supports_fragment_masks {
        return Err(Error::Unsupported("oracle cannot mask fragments".into()));
    }
    let n = bundle.n_fragments();
    if n < 2 {
        return Err(Error::Fit(format!(
            "video {} has {n} fragment(s); fragment-level LIME needs at least 2",
            bundle.video_id
        )));
    }
    let fit = explain_with(n, cfg, |k| format!("fragment {k}"), |masks| {
        let specs: Vec<PerturbationSpec> = masks.iter().map(|m| fragment_spec(m)).collect();
        let scores = oracle::score_many(oracle, bundle, &specs)?;
        Ok(scores.iter().map(ScoreSequence::mean).collect())
    })?;
    let mut out = FragmentExplanation::from_weights(&bundle.video_id, Method::Lime, fit.coefficients);
    out.config_echo = Some(cfg.clone());
    out.r2 = Some(fit.r2);
    out.n_perturbations = fit.n_perturbations;
    out.exhaustive = fit.exhaustive;
    Ok(out)
}

pub fn attention_fragment_explain(oracle: &dyn Oracle, bundle: &VideoBundle) -> Result<FragmentExplanation> {
    let diag = oracle::attention_diagonal(oracle, bundle)?;
    let weights = fragment_scores(&ScoreSequence(diag.0), &bundle.fragmentation);
    Ok(FragmentExplanation::from_weights(&bundle.video_id, Method::Attention, weights))
}
