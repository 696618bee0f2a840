//! Object-level explanations inside selected fragments.
//!
//! For each selected fragment the top-scoring frame becomes the keyframe, the
//! objects visible in it become the surrogate's items, and each perturbation
//! blacks out a subset of them in every frame of the fragment. The surrogate
//! target is the mean score over the fragment's frames only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment_explainer::FragmentExplanation;
use crate::fragmentation::fragment_scores;
use crate::lime::{bottom_of, explain_with, rank_descending, top_of, LimeConfig, TOP_K};
use crate::model::{Finding, Fragment, Fragmentation, PerturbationSpec, ScoreSequence, SegmentationMaps, VideoBundle, VOID_ID};
use crate::oracle::{self, Oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    FromExplanation,
    FromSummarizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSelection {
    pub source: SelectionSource,
    pub fragment_indices: Vec<usize>,
}

/// Top-`k` fragments by mean baseline score; ties go to the lower index.
pub fn select_fragments_by_summarizer(baseline: &ScoreSequence, frag: &Fragmentation, k: usize) -> FragmentSelection {
    let means = fragment_scores(baseline, frag);
    FragmentSelection {
        source: SelectionSource::FromSummarizer,
        fragment_indices: top_of(&rank_descending(&means), k),
    }
}

/// The explanation's most influential fragments.
pub fn select_fragments_from_explanation(expl: &FragmentExplanation, k: usize) -> FragmentSelection {
    FragmentSelection {
        source: SelectionSource::FromExplanation,
        fragment_indices: top_of(&expl.ranking, k),
    }
}

/// Highest-scoring frame in the fragment, earliest on ties.
pub fn select_keyframe(baseline: &ScoreSequence, fragment: Fragment) -> usize {
    let s = baseline.as_slice();
    fragment
        .frames()
        .fold(fragment.start, |best, i| if s[i] > s[best] { i } else { best })
}

/// Non-void IDs in the keyframe covering at least `min_area_fraction` of it,
/// ascending.
pub fn enumerate_objects(seg: &SegmentationMaps, keyframe: usize, min_area_fraction: f64) -> Vec<u16> {
    let labels = seg.frame(keyframe);
    let mut area: BTreeMap<u16, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l != VOID_ID) {
        *area.entry(l).or_default() += 1;
    }
    let threshold = min_area_fraction * labels.len() as f64;
    area.into_iter()
        .filter(|&(_, count)| count as f64 >= threshold)
        .map(|(id, _)| id)
        .collect()
}

/// Serialized as `<video_id>.objects.<fragment>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectExplanation {
    pub video_id: String,
    pub fragment_index: usize,
    pub keyframe_index: usize,
    pub object_weights: BTreeMap<u16, f64>,
    pub ranking: Vec<u16>,
    pub top: Vec<u16>,
    /// Least influential first.
    pub bottom: Vec<u16>,
    pub r2: f64,
    pub n_perturbations: usize,
    pub exhaustive: bool,
    pub config_echo: LimeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectOutcome {
    Explained(ObjectExplanation),
    Skipped(Finding),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectExplainConfig {
    pub lime: LimeConfig,
    pub min_area_fraction: f64,
}

impl Default for ObjectExplainConfig {
    fn default() -> Self {
        Self {
            lime: LimeConfig::object_default(),
            min_area_fraction: 0.0,
        }
    }
}

pub fn lime_object_explain(
    oracle: &dyn Oracle,
    bundle: &VideoBundle,
    fragment_index: usize,
    cfg: &ObjectExplainConfig,
) -> Result<ObjectOutcome> {
    if !oracle.capabilities().supports_object_masks {
        return Err(Error::Unsupported("oracle cannot mask objects".into()));
    }
    let fragment = bundle.fragment(fragment_index)?;
    let seg = bundle.segmentation()?;
    let baseline = oracle::score(oracle, bundle, &PerturbationSpec::None)?;
    let keyframe = select_keyframe(&baseline, fragment);
    let objects = enumerate_objects(seg, keyframe, cfg.min_area_fraction);
    if objects.len() < 2 {
        return Ok(ObjectOutcome::Skipped(Finding::new(
            "object-explainer",
            format!(
                "video {} fragment {fragment_index}: keyframe {keyframe} has {} object(s), need at least 2",
                bundle.video_id,
                objects.len()
            ),
        )));
    }

    let fit = explain_with(
        objects.len(),
        &cfg.lime,
        |k| format!("object {}", objects[k]),
        |masks| {
            let specs: Vec<PerturbationSpec> = masks
                .iter()
                .map(|m| {
                    let hidden: BTreeSet<u16> =
                        m.iter().zip(&objects).filter(|(&b, _)| !b).map(|(_, &id)| id).collect();
                    if hidden.is_empty() {
                        PerturbationSpec::None
                    } else {
                        PerturbationSpec::Objects {
                            fragment: fragment_index,
                            masked_objects: hidden,
                        }
                    }
                })
                .collect();
            let scores = oracle::score_many(oracle, bundle, &specs)?;
            Ok(scores.iter().map(|s| s.mean_over(fragment.start, fragment.end)).collect())
        },
    )?;

    let ranking: Vec<u16> = rank_descending(&fit.coefficients).into_iter().map(|k| objects[k]).collect();
    Ok(ObjectOutcome::Explained(ObjectExplanation {
        video_id: bundle.video_id.clone(),
        fragment_index,
        keyframe_index: keyframe,
        object_weights: objects.iter().copied().zip(fit.coefficients.iter().copied()).collect(),
        top: top_of(&ranking, TOP_K),
        bottom: bottom_of(&ranking, TOP_K),
        ranking,
        r2: fit.r2,
        n_perturbations: fit.n_perturbations,
        exhaustive: fit.exhaustive,
        config_echo: cfg.lime.clone(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmentation::uniform_fragmentation;
    use crate::model::FrameFeatures;
    use crate::oracle::OracleCapabilities;
    use rand::{Rng, SeedableRng};

    #[test]
    fn summarizer_selection_sorts_fragment_means() {
        let scores = ScoreSequence(vec![0.3, 0.3, 0.8, 0.8, 0.5, 0.5, 0.9, 0.9]);
        let frag = uniform_fragmentation(8, 4);
        assert_eq!(select_fragments_by_summarizer(&scores, &frag, 3).fragment_indices, vec![3, 1, 2]);
        let flat = ScoreSequence(vec![0.5; 8]);
        assert_eq!(select_fragments_by_summarizer(&flat, &frag, 3).fragment_indices, vec![0, 1, 2]);
        let two = uniform_fragmentation(8, 2);
        assert_eq!(select_fragments_by_summarizer(&scores, &two, 3).fragment_indices.len(), 2);
    }

    #[test]
    fn keyframe_prefers_earliest_maximum() {
        let s = ScoreSequence(vec![0.1, 0.9, 0.9]);
        assert_eq!(select_keyframe(&s, Fragment::new(0, 2)), 1);
        assert_eq!(select_keyframe(&s, Fragment::new(2, 2)), 2);
    }

    #[test]
    fn keyframe_matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            // coarse values so ties actually occur
            let s: Vec<f64> = (0..30).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect();
            let scores = ScoreSequence(s.clone());
            let mut best = 0;
            for i in 0..30 {
                if s[i] > s[best] {
                    best = i;
                }
            }
            assert_eq!(select_keyframe(&scores, Fragment::new(0, 29)), best);
        }
    }

    #[test]
    fn objects_are_enumerated_with_area_filter() {
        let mut labels = vec![0u16; 100];
        labels[..10].fill(1);
        labels[10..20].fill(4);
        labels[20..30].fill(7);
        let seg = SegmentationMaps::new(1, 10, 10, labels.clone()).unwrap();
        assert_eq!(enumerate_objects(&seg, 0, 0.0), vec![1, 4, 7]);
        let void = SegmentationMaps::new(1, 10, 10, vec![0; 100]).unwrap();
        assert!(enumerate_objects(&void, 0, 0.0).is_empty());
        labels[30..32].fill(3);
        let seg = SegmentationMaps::new(1, 10, 10, labels).unwrap();
        assert_eq!(enumerate_objects(&seg, 0, 0.05), vec![1, 4, 7]);
        assert_eq!(enumerate_objects(&seg, 0, 0.0), vec![1, 3, 4, 7]);
    }

    /// Scores frames inside the target fragment linearly in the masked
    /// objects, and returns noise elsewhere.
    struct LinearObjects {
        weights: BTreeMap<u16, f64>,
        fragment: Fragment,
        garbage: bool,
    }

    impl Oracle for LinearObjects {
        fn capabilities(&self) -> OracleCapabilities {
            OracleCapabilities {
                supports_fragment_masks: false,
                supports_object_masks: true,
                supports_attention: false,
                batch_limit: 16,
            }
        }

        fn score(&self, b: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
            let removed: f64 = match spec {
                PerturbationSpec::Objects { masked_objects, .. } => {
                    masked_objects.iter().map(|id| self.weights[id]).sum()
                }
                _ => 0.0,
            };
            let salt = format!("{spec:?}").len() as f64;
            Ok(ScoreSequence(
                (0..b.n_frames())
                    .map(|i| {
                        if self.fragment.contains(i) {
                            0.9 - removed + 0.001 * i as f64
                        } else if self.garbage {
                            ((salt * 7.3 + i as f64).sin() + 1.0) / 2.0
                        } else {
                            0.5
                        }
                    })
                    .collect(),
            ))
        }
    }

    fn seg_bundle() -> VideoBundle {
        let n = 12;
        let features = FrameFeatures::new(n, 1, vec![1.0; n]).unwrap();
        // objects 2, 5, 9 in every frame, plus void
        let frame: Vec<u16> = [0, 2, 2, 5, 9, 9, 9, 0].to_vec();
        let labels = frame.repeat(n);
        VideoBundle::new("v", features, uniform_fragmentation(n, 3))
            .with_segmentation(SegmentationMaps::new(n, 2, 4, labels).unwrap())
    }

    fn exact() -> ObjectExplainConfig {
        ObjectExplainConfig {
            lime: LimeConfig {
                ridge_lambda: 0.0,
                ..LimeConfig::object_default()
            },
            min_area_fraction: 0.0,
        }
    }

    #[test]
    fn linear_object_oracle_is_recovered_and_scope_is_fragment_only() {
        let b = seg_bundle();
        let weights: BTreeMap<u16, f64> = [(2, 0.05), (5, 0.3), (9, -0.1)].into_iter().collect();
        let mut outs = Vec::new();
        for garbage in [false, true] {
            let o = LinearObjects {
                weights: weights.clone(),
                fragment: b.fragment(1).unwrap(),
                garbage,
            };
            let ObjectOutcome::Explained(e) = lime_object_explain(&o, &b, 1, &exact()).unwrap() else {
                panic!("expected an explanation");
            };
            for (id, w) in &weights {
                assert!((e.object_weights[id] - w).abs() < 1e-9);
            }
            assert_eq!(e.ranking, vec![5, 2, 9]);
            assert!(e.exhaustive);
            assert_eq!(e.n_perturbations, 8);
            assert!(b.fragment(1).unwrap().contains(e.keyframe_index));
            outs.push(e);
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn too_few_objects_is_skipped_with_finding() {
        let n = 4;
        let b = VideoBundle::new("v", FrameFeatures::new(n, 1, vec![1.0; n]).unwrap(), uniform_fragmentation(n, 2))
            .with_segmentation(SegmentationMaps::new(n, 1, 2, vec![3, 0].repeat(n)).unwrap());
        let o = LinearObjects {
            weights: [(3, 0.1)].into_iter().collect(),
            fragment: b.fragment(0).unwrap(),
            garbage: false,
        };
        match lime_object_explain(&o, &b, 0, &exact()).unwrap() {
            ObjectOutcome::Skipped(f) => assert!(f.message.contains("1 object")),
            other => panic!("{other:?}"),
        }
    }
}
