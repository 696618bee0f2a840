//! Weighted ridge regression of perturbation targets on binary mask bits.
//!
//! Minimizes `sum_r w_r (y_r - b0 - sum_k x_rk b_k)^2 + lambda * sum_k b_k^2`
//! through the normal equations; the intercept is not penalized. Designs here
//! are tall and narrow (thousands of rows, a few dozen columns at most), so
//! accumulating `XᵀWX` directly and solving with Cholesky is both cheap and
//! accurate.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Weighted coefficient of determination; 0 when the targets are constant.
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignIssue {
    /// The column never varies across the design.
    ConstantColumn(usize),
    /// The normal equations are not positive definite.
    Singular,
    /// Row count, target count and weight count disagree, or there are no rows.
    Shape,
}

pub fn fit_weighted_ridge(
    masks: &[Vec<bool>],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<SurrogateFit, DesignIssue> {
    let rows = masks.len();
    if rows == 0 || targets.len() != rows || weights.len() != rows {
        return Err(DesignIssue::Shape);
    }
    let n = masks[0].len();
    if masks.iter().any(|m| m.len() != n) {
        return Err(DesignIssue::Shape);
    }
    for k in 0..n {
        let first = masks[0][k];
        if masks.iter().all(|m| m[k] == first) {
            return Err(DesignIssue::ConstantColumn(k));
        }
    }

    // Shifting targets by the first one leaves slopes unchanged and makes a
    // constant target produce exactly zero coefficients.
    let shift = targets[0];
    let p = n + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut active = Vec::with_capacity(p);
    for ((mask, &y), &w) in masks.iter().zip(targets).zip(weights) {
        active.clear();
        active.push(0);
        active.extend(mask.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k + 1));
        let y = y - shift;
        for (ai, &i) in active.iter().enumerate() {
            rhs[i] += w * y;
            for &j in &active[ai..] {
                gram[(i, j)] += w;
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    for k in 1..p {
        gram[(k, k)] += lambda;
    }

    let solution = gram
        .cholesky()
        .ok_or(DesignIssue::Singular)?
        .solve(&rhs);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(DesignIssue::Singular);
    }

    let intercept = solution[0] + shift;
    let coefficients: Vec<f64> = solution.iter().skip(1).copied().collect();

    // Goodness of fit on the shifted targets, where constants are exact.
    let wsum: f64 = weights.iter().sum();
    let mean = targets.iter().zip(weights).map(|(y, w)| (y - shift) * w).sum::<f64>() / wsum;
    let (mut ss_tot, mut ss_res) = (0.0, 0.0);
    for ((mask, &y), &w) in masks.iter().zip(targets).zip(weights) {
        let y = y - shift;
        let pred = solution[0]
            + mask
                .iter()
                .zip(&coefficients)
                .filter(|(&b, _)| b)
                .map(|(_, c)| c)
                .sum::<f64>();
        ss_tot += w * (y - mean).powi(2);
        ss_res += w * (y - pred).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };

    Ok(SurrogateFit {
        intercept,
        coefficients,
        r2,
    })
}
