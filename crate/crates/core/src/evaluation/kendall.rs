//! Kendall's tau-b in O(n log n): sort by the first sequence, then count the
//! discordant pairs as inversions while merge-sorting by the second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    pub tau: f64,
    /// One of the sequences is constant; `tau` is reported as 0.
    pub degenerate: bool,
}

/// Pair counts behind tau-b. `concordant_minus_discordant` is `C - D`;
/// the two denominators are the pairs not tied in `a` and not tied in `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub concordant_minus_discordant: i64,
    pub untied_a: u64,
    pub untied_b: u64,
}

impl PairCounts {
    pub fn tau(&self) -> KendallTau {
        if self.untied_a == 0 || self.untied_b == 0 {
            return KendallTau {
                tau: 0.0,
                degenerate: true,
            };
        }
        let denom = (self.untied_a as f64 * self.untied_b as f64).sqrt();
        KendallTau {
            tau: (self.concordant_minus_discordant as f64 / denom).clamp(-1.0, 1.0),
            degenerate: false,
        }
    }
}

fn pairs(run: u64) -> u64 {
    run * run.saturating_sub(1) / 2
}

/// Sum of pairs within runs of equal keys, `v` already sorted by `eq`.
fn tied_pairs<T>(v: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for i in 1..v.len() {
        if eq(&v[i - 1], &v[i]) {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Merge sort by the second component, returning the number of strict
/// inversions.
fn sort_counting_inversions(v: &mut [(f64, f64)], buf: &mut Vec<(f64, f64)>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_inversions(&mut v[..mid], buf) + sort_counting_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].1 < v[i].1 {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

pub fn pair_counts(a: &[f64], b: &[f64]) -> Result<PairCounts> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!("kendall tau on sequences of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Eval(format!("kendall tau needs at least 2 values, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Eval("kendall tau on NaN input".into()));
    }
    // +0.0 folds -0.0 into 0.0 so total_cmp treats them as tied.
    let mut v: Vec<(f64, f64)> = a.iter().zip(b).map(|(&x, &y)| (x + 0.0, y + 0.0)).collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    let n = v.len() as u64;
    let n0 = pairs(n);
    let ties_a = tied_pairs(&v, |p, q| p.0 == q.0);
    let ties_ab = tied_pairs(&v, |p, q| p == q);
    let mut buf = Vec::with_capacity(v.len());
    let discordant = sort_counting_inversions(&mut v, &mut buf);
    let ties_b = tied_pairs(&v, |p, q| p.1 == q.1);

    // Pairs untied in both: n0 - ties_a - ties_b + ties_ab = C + D.
    let c_plus_d = n0 + ties_ab - ties_a - ties_b;
    Ok(PairCounts {
        concordant_minus_discordant: c_plus_d as i64 - 2 * discordant as i64,
        untied_a: n0 - ties_a,
        untied_b: n0 - ties_b,
    })
}

/// Tie-corrected Kendall tau between two equal-length sequences.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<KendallTau> {
    Ok(pair_counts(a, b)?.tau())
}
