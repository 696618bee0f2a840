//! Faithfulness measures for explanations.
//!
//! ΔE is Kendall's tau between baseline and perturbed scores. Disc+ masks the
//! explanation's top items and Disc− its bottom items, either one at a time
//! (the k-th item alone) or cumulatively (items 1..k). A reliable explanation
//! gives a low Disc+ and a high Disc−; the sanity violation rate counts the
//! cases where Disc+ ≥ Disc−.

mod kendall;
mod report;

pub use kendall::{kendall_tau, pair_counts, KendallTau, PairCounts};
pub use report::{evaluate_corpus, EntryResult, EvalConfig, EvalEntry, EvaluationReport, MethodGroup, MethodReport, TierReport, TierRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PerturbationSpec, ScoreSequence, VideoBundle};
use crate::oracle::{self, Oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaScope {
    WholeVideo,
    FragmentOnly { fragment_index: usize },
}

impl DeltaScope {
    fn restrict<'a>(&self, bundle: &VideoBundle, scores: &'a [f64]) -> Result<&'a [f64]> {
        match *self {
            DeltaScope::WholeVideo => Ok(scores),
            DeltaScope::FragmentOnly { fragment_index } => {
                let f = bundle.fragment(fragment_index)?;
                Ok(&scores[f.start..=f.end])
            }
        }
    }
}

/// ΔE between two already computed score sequences.
pub fn delta_between(
    bundle: &VideoBundle,
    baseline: &ScoreSequence,
    perturbed: &ScoreSequence,
    scope: DeltaScope,
) -> Result<KendallTau> {
    kendall_tau(
        scope.restrict(bundle, baseline.as_slice())?,
        scope.restrict(bundle, perturbed.as_slice())?,
    )
}

pub fn delta_e(oracle: &dyn Oracle, bundle: &VideoBundle, spec: &PerturbationSpec, scope: DeltaScope) -> Result<KendallTau> {
    let scores = oracle::score_many(oracle, bundle, &[PerturbationSpec::None, spec.clone()])?;
    delta_between(bundle, &scores[0], &scores[1], scope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneByOne,
    Sequential,
}

/// Positions in a ranking of `n_items` that get masked, or `None` when the
/// ranking is too short. Bottom-1 is the last ranked item.
pub fn masked_positions(n_items: usize, sign: Sign, mode: Mode, k: usize) -> Option<Vec<usize>> {
    if k == 0 || k > n_items {
        return None;
    }
    let at = |j: usize| match sign {
        Sign::Plus => j - 1,
        Sign::Minus => n_items - j,
    };
    Some(match mode {
        Mode::OneByOne => vec![at(k)],
        Mode::Sequential => (1..=k).map(at).collect(),
    })
}

/// What an explanation ranks, and how masking its items is expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Fragments { ranking: Vec<usize> },
    Objects { fragment_index: usize, ranking: Vec<u16> },
}

impl Target {
    pub fn n_items(&self) -> usize {
        match self {
            Target::Fragments { ranking } => ranking.len(),
            Target::Objects { ranking, .. } => ranking.len(),
        }
    }

    pub fn spec(&self, positions: &[usize]) -> PerturbationSpec {
        match self {
            Target::Fragments { ranking } => PerturbationSpec::fragments(positions.iter().map(|&p| ranking[p])),
            Target::Objects {
                fragment_index,
                ranking,
            } => PerturbationSpec::objects(*fragment_index, positions.iter().map(|&p| ranking[p])),
        }
    }

    /// Object explanations are always judged on their own fragment.
    pub fn scope(&self, fragment_scope: DeltaScope) -> DeltaScope {
        match self {
            Target::Fragments { .. } => fragment_scope,
            Target::Objects { fragment_index, .. } => DeltaScope::FragmentOnly {
                fragment_index: *fragment_index,
            },
        }
    }
}

pub fn discoverability(
    oracle: &dyn Oracle,
    bundle: &VideoBundle,
    target: &Target,
    sign: Sign,
    mode: Mode,
    k: usize,
    fragment_scope: DeltaScope,
) -> Result<Option<KendallTau>> {
    match masked_positions(target.n_items(), sign, mode, k) {
        None => Ok(None),
        Some(pos) => delta_e(oracle, bundle, &target.spec(&pos), target.scope(fragment_scope)).map(Some),
    }
}

/// Disc values for k = 1..=max_k, `None` where the ranking is too short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscProfile {
    pub disc_plus: Vec<Option<f64>>,
    pub disc_plus_seq: Vec<Option<f64>>,
    pub disc_minus: Vec<Option<f64>>,
    pub disc_minus_seq: Vec<Option<f64>>,
    /// ΔE computations where a sequence was constant.
    pub degenerate: usize,
}

/// All Disc cells for one explanation, scoring the perturbations in one batch.
pub fn disc_profile(
    oracle: &dyn Oracle,
    bundle: &VideoBundle,
    target: &Target,
    max_k: usize,
    fragment_scope: DeltaScope,
) -> Result<DiscProfile> {
    let cells = [
        (Sign::Plus, Mode::OneByOne),
        (Sign::Plus, Mode::Sequential),
        (Sign::Minus, Mode::OneByOne),
        (Sign::Minus, Mode::Sequential),
    ];
    let mut specs = vec![PerturbationSpec::None];
    let mut slots = Vec::new();
    for &(sign, mode) in &cells {
        for k in 1..=max_k {
            match masked_positions(target.n_items(), sign, mode, k) {
                Some(pos) => {
                    slots.push(Some(specs.len()));
                    specs.push(target.spec(&pos));
                }
                None => slots.push(None),
            }
        }
    }
    let scores = oracle::score_many(oracle, bundle, &specs)?;
    let scope = target.scope(fragment_scope);
    let mut degenerate = 0;
    let mut values = Vec::with_capacity(slots.len());
    for slot in slots {
        values.push(match slot {
            Some(i) => {
                let t = delta_between(bundle, &scores[0], &scores[i], scope)?;
                degenerate += usize::from(t.degenerate);
                Some(t.tau)
            }
            None => None,
        });
    }
    let mut chunks = values.chunks(max_k).map(<[_]>::to_vec);
    Ok(DiscProfile {
        disc_plus: chunks.next().unwrap_or_default(),
        disc_plus_seq: chunks.next().unwrap_or_default(),
        disc_minus: chunks.next().unwrap_or_default(),
        disc_minus_seq: chunks.next().unwrap_or_default(),
        degenerate,
    })
}

/// Fraction of `(disc_plus, disc_minus)` pairs with `disc_plus >= disc_minus`;
/// `None` without pairs.
pub fn sanity_violation(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let bad = pairs.iter().filter(|(p, m)| p >= m).count();
    Some(bad as f64 / pairs.len() as f64)
}

pub(crate) fn require_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Eval(format!("no {what} to evaluate")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmentation::uniform_fragmentation;
    use crate::model::FrameFeatures;
    use crate::oracle::{LinearMaskOracle, OracleCapabilities};

    fn bundle(n_frames: usize, n_frag: usize) -> VideoBundle {
        VideoBundle::new("v", FrameFeatures::new(n_frames, 1, vec![1.0; n_frames]).unwrap(), uniform_fragmentation(n_frames, n_frag))
    }

    #[test]
    fn unperturbed_delta_is_one() {
        let b = bundle(12, 3);
        let o = LinearMaskOracle::new(0.5, vec![0.1, 0.2, 0.3]).unwrap().with_frame_slope(0.001);
        let t = delta_e(&o, &b, &PerturbationSpec::None, DeltaScope::WholeVideo).unwrap();
        assert_eq!(t.tau, 1.0);
    }

    #[test]
    fn constant_shift_keeps_order() {
        let b = bundle(12, 3);
        let o = LinearMaskOracle::new(0.5, vec![0.1, 0.2, 0.3]).unwrap().with_frame_slope(0.001);
        for k in 0..3 {
            let t = delta_e(&o, &b, &PerturbationSpec::fragments([k]), DeltaScope::WholeVideo).unwrap();
            assert_eq!(t.tau, 1.0);
        }
    }

    /// Reverses the frame order of its scores whenever anything is masked.
    struct Reverser;

    impl Oracle for Reverser {
        fn capabilities(&self) -> OracleCapabilities {
            OracleCapabilities {
                supports_fragment_masks: true,
                supports_object_masks: false,
                supports_attention: false,
                batch_limit: 8,
            }
        }
        fn score(&self, b: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
            let n = b.n_frames();
            Ok(ScoreSequence(
                (0..n)
                    .map(|i| match spec {
                        PerturbationSpec::None => i as f64 / n as f64,
                        _ => (n - i) as f64 / n as f64,
                    })
                    .collect(),
            ))
        }
    }

    #[test]
    fn reversed_scores_give_minus_one() {
        let b = bundle(10, 2);
        assert_eq!(delta_e(&Reverser, &b, &PerturbationSpec::fragments([0]), DeltaScope::WholeVideo).unwrap().tau, -1.0);
        let frag = delta_e(&Reverser, &b, &PerturbationSpec::fragments([0]), DeltaScope::FragmentOnly { fragment_index: 1 });
        assert_eq!(frag.unwrap().tau, -1.0);
    }

    #[test]
    fn positions_follow_sign_and_mode() {
        assert_eq!(masked_positions(5, Sign::Plus, Mode::OneByOne, 2), Some(vec![1]));
        assert_eq!(masked_positions(5, Sign::Plus, Mode::Sequential, 3), Some(vec![0, 1, 2]));
        assert_eq!(masked_positions(5, Sign::Minus, Mode::OneByOne, 1), Some(vec![4]));
        assert_eq!(masked_positions(5, Sign::Minus, Mode::Sequential, 2), Some(vec![4, 3]));
        assert_eq!(masked_positions(2, Sign::Plus, Mode::OneByOne, 3), None);
        for sign in [Sign::Plus, Sign::Minus] {
            assert_eq!(
                masked_positions(4, sign, Mode::OneByOne, 1),
                masked_positions(4, sign, Mode::Sequential, 1)
            );
        }
    }

    #[test]
    fn sequential_masks_are_nested() {
        let t = Target::Fragments {
            ranking: vec![4, 2, 0, 1, 3, 5],
        };
        for sign in [Sign::Plus, Sign::Minus] {
            for k in 2..=3 {
                let prev = t.spec(&masked_positions(6, sign, Mode::Sequential, k - 1).unwrap());
                let cur = t.spec(&masked_positions(6, sign, Mode::Sequential, k).unwrap());
                let (
                    PerturbationSpec::Fragments { masked_fragments: p },
                    PerturbationSpec::Fragments { masked_fragments: c },
                ) = (prev, cur)
                else {
                    panic!("fragment specs expected");
                };
                assert!(p.is_subset(&c) && c.len() == p.len() + 1);
            }
        }
    }

    #[test]
    fn sequential_disc_plus_is_non_increasing_with_nested_masks() {
        // Masking shifts a fragment's frames down by its weight, so frames of
        // masked fragments fall below the rest and the tau keeps dropping.
        let b = bundle(30, 3);
        let o = LinearMaskOracle::new(0.8, vec![0.5, 0.1, 0.01]).unwrap().with_frame_slope(0.001);
        let target = Target::Fragments { ranking: vec![0, 1, 2] };
        let p = disc_profile(&o, &b, &target, 3, DeltaScope::WholeVideo).unwrap();
        let seq: Vec<f64> = p.disc_plus_seq.iter().map(|v| v.unwrap()).collect();
        assert!(seq[0] >= seq[1] && seq[1] >= seq[2], "{seq:?}");
        assert_eq!(p.disc_plus[0], p.disc_plus_seq[0]);
    }

    #[test]
    fn short_rankings_are_ineligible() {
        let b = bundle(10, 2);
        let o = LinearMaskOracle::new(0.8, vec![0.5, 0.1]).unwrap();
        let target = Target::Fragments { ranking: vec![0, 1] };
        assert_eq!(
            discoverability(&o, &b, &target, Sign::Plus, Mode::OneByOne, 3, DeltaScope::WholeVideo).unwrap(),
            None
        );
        let p = disc_profile(&o, &b, &target, 3, DeltaScope::WholeVideo).unwrap();
        assert!(p.disc_plus[2].is_none() && p.disc_minus[1].is_some());
    }

    #[test]
    fn sanity_violation_counts() {
        assert_eq!(sanity_violation(&[(-0.5, 0.9); 4]), Some(0.0));
        assert_eq!(sanity_violation(&[(0.4, 0.4); 4]), Some(1.0));
        let mixed: Vec<(f64, f64)> = (0..10).map(|i| if i < 3 { (0.9, 0.2) } else { (0.1, 0.8) }).collect();
        assert_eq!(sanity_violation(&mixed), Some(0.3));
        assert_eq!(sanity_violation(&[]), None);
    }
}
