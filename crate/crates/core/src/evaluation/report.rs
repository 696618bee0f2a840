//! Corpus-level aggregation in the layout of the published result tables.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{disc_profile, require_nonempty, sanity_violation, DeltaScope, Target};
use crate::error::{Error, Result};
use crate::fragment_explainer::FragmentExplanation;
use crate::model::{Finding, VideoBundle};
use crate::object_explainer::ObjectExplanation;
use crate::oracle::Oracle;

/// Eligibility tiers: at least this many top and this many bottom items.
pub const TIERS: [usize; 2] = [1, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Scope for fragment explanations; object explanations always use
    /// their own fragment.
    pub fragment_scope: DeltaScope,
    pub max_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fragment_scope: DeltaScope::WholeVideo,
            max_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub video_id: String,
    pub target: Target,
}

impl From<&FragmentExplanation> for EvalEntry {
    fn from(e: &FragmentExplanation) -> Self {
        Self {
            video_id: e.video_id.clone(),
            target: Target::Fragments {
                ranking: e.ranking.clone(),
            },
        }
    }
}

impl From<&ObjectExplanation> for EvalEntry {
    fn from(e: &ObjectExplanation) -> Self {
        Self {
            video_id: e.video_id.clone(),
            target: Target::Objects {
                fragment_index: e.fragment_index,
                ranking: e.ranking.clone(),
            },
        }
    }
}

/// Explanations produced by one method, evaluated as one table row group.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodGroup {
    pub method: String,
    pub entries: Vec<EvalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    /// `video_id`, or `video_id#fragment` for object explanations.
    pub id: String,
    pub video_id: String,
    pub fragment_index: Option<usize>,
    pub n_items: usize,
    pub disc_plus: Vec<Option<f64>>,
    pub disc_plus_seq: Vec<Option<f64>>,
    pub disc_minus: Vec<Option<f64>>,
    pub disc_minus_seq: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRow {
    pub k: usize,
    pub disc_plus: Option<f64>,
    /// Absent at k = 1, where it equals `disc_plus`.
    pub disc_plus_seq: Option<f64>,
    pub disc_minus: Option<f64>,
    pub disc_minus_seq: Option<f64>,
    pub sv: Option<f64>,
    pub sv_seq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub min_items: usize,
    pub eligible_ids: Vec<String>,
    pub rows: Vec<TierRow>,
    /// Pooled over every (entry, k) pair of the tier.
    pub sv: Option<f64>,
    /// Pooled over k >= 2.
    pub sv_seq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub entries: Vec<EntryResult>,
    pub tiers: Vec<TierReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvalConfig,
    pub methods: Vec<MethodReport>,
    pub findings: Vec<Finding>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn pairs_at(entries: &[&EntryResult], k: usize, seq: bool) -> Vec<(f64, f64)> {
    entries
        .iter()
        .filter_map(|e| {
            let (p, m) = if seq {
                (e.disc_plus_seq[k - 1], e.disc_minus_seq[k - 1])
            } else {
                (e.disc_plus[k - 1], e.disc_minus[k - 1])
            };
            Some((p?, m?))
        })
        .collect()
}

fn tier(entries: &[EntryResult], min_items: usize) -> TierReport {
    let eligible: Vec<&EntryResult> = entries.iter().filter(|e| e.n_items >= 2 * min_items).collect();
    let at = |k: usize, pick: fn(&EntryResult) -> &Vec<Option<f64>>| mean(eligible.iter().map(|e| pick(e)[k - 1]));
    let mut rows = Vec::new();
    let (mut pooled, mut pooled_seq) = (Vec::new(), Vec::new());
    for k in 1..=min_items {
        let one = pairs_at(&eligible, k, false);
        let seq = if k > 1 { pairs_at(&eligible, k, true) } else { Vec::new() };
        rows.push(TierRow {
            k,
            disc_plus: at(k, |e| &e.disc_plus),
            disc_plus_seq: if k > 1 { at(k, |e| &e.disc_plus_seq) } else { None },
            disc_minus: at(k, |e| &e.disc_minus),
            disc_minus_seq: if k > 1 { at(k, |e| &e.disc_minus_seq) } else { None },
            sv: sanity_violation(&one),
            sv_seq: sanity_violation(&seq),
        });
        pooled.extend(one);
        pooled_seq.extend(seq);
    }
    TierReport {
        min_items,
        eligible_ids: eligible.iter().map(|e| e.id.clone()).collect(),
        rows,
        sv: sanity_violation(&pooled),
        sv_seq: sanity_violation(&pooled_seq),
    }
}

fn evaluate_entry(
    oracle: &dyn Oracle,
    bundle: &VideoBundle,
    entry: &EvalEntry,
    cfg: &EvalConfig,
) -> Result<(Option<EntryResult>, Vec<Finding>)> {
    let (id, fragment_index) = match &entry.target {
        Target::Fragments { .. } => (entry.video_id.clone(), None),
        Target::Objects { fragment_index, .. } => (format!("{}#{fragment_index}", entry.video_id), Some(*fragment_index)),
    };
    let profile = match disc_profile(oracle, bundle, &entry.target, cfg.max_k, cfg.fragment_scope) {
        Ok(p) => p,
        Err(Error::Eval(msg)) => return Ok((None, vec![Finding::new("evaluation", format!("{id}: skipped, {msg}"))])),
        Err(e) => return Err(e),
    };
    let mut findings = Vec::new();
    if profile.degenerate > 0 {
        findings.push(Finding::new(
            "evaluation",
            format!("{id}: {} constant score sequence(s), tau taken as 0", profile.degenerate),
        ));
    }
    Ok((
        Some(EntryResult {
            id,
            video_id: entry.video_id.clone(),
            fragment_index,
            n_items: entry.target.n_items(),
            disc_plus: profile.disc_plus,
            disc_plus_seq: profile.disc_plus_seq,
            disc_minus: profile.disc_minus,
            disc_minus_seq: profile.disc_minus_seq,
        }),
        findings,
    ))
}

/// Evaluate every explanation against its bundle. Entries are processed in
/// parallel; results keep the input order.
pub fn evaluate_corpus(
    oracle: &dyn Oracle,
    bundles: &[VideoBundle],
    groups: &[MethodGroup],
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    require_nonempty(groups, "explanation groups")?;
    if cfg.max_k < TIERS[TIERS.len() - 1] {
        return Err(Error::Validation(format!("max_k {} is below the largest tier", cfg.max_k)));
    }
    let by_id: HashMap<&str, &VideoBundle> = bundles.iter().map(|b| (b.video_id.as_str(), b)).collect();
    let mut findings = Vec::new();
    let mut methods = Vec::new();
    for group in groups {
        require_nonempty(&group.entries, "explanations")?;
        let outcomes = group
            .entries
            .par_iter()
            .map(|entry| {
                let bundle = by_id
                    .get(entry.video_id.as_str())
                    .ok_or_else(|| Error::Validation(format!("no bundle for video {}", entry.video_id)))?;
                evaluate_entry(oracle, bundle, entry, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut entries = Vec::new();
        for (result, f) in outcomes {
            entries.extend(result);
            findings.extend(f);
        }
        let tiers = TIERS.iter().map(|&t| tier(&entries, t)).collect();
        methods.push(MethodReport {
            method: group.method.clone(),
            entries,
            tiers,
        });
    }
    Ok(EvaluationReport {
        config: cfg.clone(),
        methods,
        findings,
    })
}

pub const COLUMNS: [&str; 6] = [
    "Disc+ (↓)",
    "Disc+ Seq (↓)",
    "Disc- (↑)",
    "Disc- Seq (↑)",
    "SV (↓)",
    "SV Seq (↓)",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn pad(s: &str, width: usize) -> String {
    let n = s.chars().count();
    format!("{s}{}", " ".repeat(width.saturating_sub(n)))
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Plain-text tables, one block per eligibility tier, one row per
    /// (k, method).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, &min_items) in TIERS.iter().enumerate() {
            let mut lines: Vec<Vec<String>> = Vec::new();
            let mut header = vec![String::new(), String::new()];
            header.extend(COLUMNS.iter().map(|c| c.to_string()));
            lines.push(header);
            for k in 1..=min_items {
                for m in &self.methods {
                    let r = &m.tiers[t].rows[k - 1];
                    lines.push(vec![
                        format!("Top/Bottom-{k}"),
                        m.method.clone(),
                        cell(r.disc_plus),
                        cell(r.disc_plus_seq),
                        cell(r.disc_minus),
                        cell(r.disc_minus_seq),
                        cell(r.sv),
                        cell(r.sv_seq),
                    ]);
                }
            }
            let widths: Vec<usize> = (0..lines[0].len())
                .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
                .collect();
            let _ = writeln!(
                out,
                "Eligible: at least {min_items} top and {min_items} bottom item(s); {}",
                self.methods
                    .iter()
                    .map(|m| format!("{} {}", m.method, m.tiers[t].eligible_ids.len()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            for line in &lines {
                let cells: Vec<String> = line.iter().zip(&widths).map(|(s, &w)| pad(s, w)).collect();
                let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmentation::uniform_fragmentation;
    use crate::model::FrameFeatures;
    use crate::oracle::LinearMaskOracle;

    fn bundle(id: &str, n_frames: usize, n_frag: usize) -> VideoBundle {
        VideoBundle::new(id, FrameFeatures::new(n_frames, 1, vec![1.0; n_frames]).unwrap(), uniform_fragmentation(n_frames, n_frag))
    }

    fn entry(id: &str, ranking: Vec<usize>) -> EvalEntry {
        EvalEntry {
            video_id: id.into(),
            target: Target::Fragments { ranking },
        }
    }

    fn oracle(n: usize) -> LinearMaskOracle {
        LinearMaskOracle::new(0.9, (0..n).map(|k| 0.3 / (k + 1) as f64).collect())
            .unwrap()
            .with_frame_slope(0.0005)
    }

    #[test]
    fn single_video_report_equals_its_values() {
        let b = bundle("a", 24, 6);
        let o = oracle(6);
        let groups = vec![MethodGroup {
            method: "lime".into(),
            entries: vec![entry("a", (0..6).collect())],
        }];
        let r = evaluate_corpus(&o, std::slice::from_ref(&b), &groups, &EvalConfig::default()).unwrap();
        let e = &r.methods[0].entries[0];
        let t3 = &r.methods[0].tiers[1];
        assert_eq!(t3.eligible_ids, vec!["a"]);
        for k in 1..=3 {
            assert_eq!(t3.rows[k - 1].disc_plus, e.disc_plus[k - 1]);
            assert_eq!(t3.rows[k - 1].disc_minus, e.disc_minus[k - 1]);
        }
        assert_eq!(t3.rows[0].disc_plus_seq, None);
        assert_eq!(t3.rows[2].disc_minus_seq, e.disc_minus_seq[2]);
    }

    #[test]
    fn five_items_reach_tier_one_only() {
        let bundles = vec![bundle("a", 20, 5), bundle("b", 24, 6)];
        let o = oracle(5);
        let o6 = oracle(6);
        let g = |id: &str, n| MethodGroup {
            method: "lime".into(),
            entries: vec![entry(id, (0..n).collect())],
        };
        let r5 = evaluate_corpus(&o, &bundles, &[g("a", 5)], &EvalConfig::default()).unwrap();
        assert_eq!(r5.methods[0].tiers[0].eligible_ids, vec!["a"]);
        assert!(r5.methods[0].tiers[1].eligible_ids.is_empty());
        assert_eq!(r5.methods[0].tiers[1].rows[0].disc_plus, None);
        let r6 = evaluate_corpus(&o6, &bundles, &[g("b", 6)], &EvalConfig::default()).unwrap();
        assert_eq!(r6.methods[0].tiers[1].eligible_ids, vec!["b"]);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let bundles = vec![bundle("a", 24, 6), bundle("b", 30, 6)];
        let o = oracle(6);
        let groups = vec![
            MethodGroup {
                method: "attention".into(),
                entries: vec![entry("a", vec![5, 4, 3, 2, 1, 0]), entry("b", (0..6).collect())],
            },
            MethodGroup {
                method: "lime".into(),
                entries: vec![entry("a", (0..6).collect()), entry("b", vec![1, 0, 2, 3, 5, 4])],
            },
        ];
        let r = evaluate_corpus(&o, &bundles, &groups, &EvalConfig::default()).unwrap();
        let s = r.to_json().unwrap();
        let back = EvaluationReport::from_json(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn text_table_has_expected_columns() {
        let b = bundle("a", 24, 6);
        let groups = vec![MethodGroup {
            method: "lime".into(),
            entries: vec![entry("a", (0..6).collect())],
        }];
        let r = evaluate_corpus(&oracle(6), std::slice::from_ref(&b), &groups, &EvalConfig::default()).unwrap();
        let text = r.to_text();
        let header = text.lines().nth(1).unwrap();
        let mut at = 0;
        for c in COLUMNS {
            let pos = header[at..].find(c).expect(c) + at;
            at = pos + c.len();
        }
        assert_eq!(text.matches("Top/Bottom-1").count(), 2);
        assert!(text.contains("Top/Bottom-3"));
    }

    #[test]
    fn empty_and_unknown_inputs_fail() {
        let b = bundle("a", 12, 3);
        let o = oracle(3);
        assert!(evaluate_corpus(&o, std::slice::from_ref(&b), &[], &EvalConfig::default()).is_err());
        let g = MethodGroup {
            method: "lime".into(),
            entries: vec![entry("zzz", vec![0, 1, 2])],
        };
        assert!(matches!(
            evaluate_corpus(&o, std::slice::from_ref(&b), &[g], &EvalConfig::default()),
            Err(Error::Validation(_))
        ));
    }
}
