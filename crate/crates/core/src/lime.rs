//! Perturbation sampling and surrogate fitting shared by the fragment- and
//! object-level explainers.
//!
//! Masks use bit 1 = item present, 0 = item masked out, so the all-ones mask
//! is the unperturbed input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::{fit_weighted_ridge, DesignIssue};

/// Perturbations for fragment-level explanations.
pub const DEFAULT_FRAGMENT_PERTURBATIONS: usize = 20_000;
/// Perturbations for object-level explanations.
pub const DEFAULT_OBJECT_PERTURBATIONS: usize = 2_000;
/// Number of items reported at each end of a ranking.
pub const TOP_K: usize = 3;

/// Masks are scored in chunks of this many so memory stays bounded.
const SCORING_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Uniform,
    Exponential,
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Kernel::Uniform),
            "exponential" => Ok(Kernel::Exponential),
            _ => Err(Error::Validation(format!("unknown kernel `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub num_perturbations: usize,
    /// Probability that a sampled mask hides a given item.
    pub mask_probability: f64,
    pub ridge_lambda: f64,
    pub kernel: Kernel,
    pub kernel_width: f64,
    pub rng_seed: u64,
    pub exhaustive_when_possible: bool,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self::fragment_default()
    }
}

impl LimeConfig {
    pub fn fragment_default() -> Self {
        Self {
            num_perturbations: DEFAULT_FRAGMENT_PERTURBATIONS,
            mask_probability: 0.5,
            ridge_lambda: 1e-8,
            kernel: Kernel::Uniform,
            kernel_width: 0.25,
            rng_seed: 0,
            exhaustive_when_possible: true,
        }
    }

    pub fn object_default() -> Self {
        Self {
            num_perturbations: DEFAULT_OBJECT_PERTURBATIONS,
            ..Self::fragment_default()
        }
    }

    pub fn validate(&self, n_items: usize) -> Result<()> {
        if !(self.mask_probability > 0.0 && self.mask_probability < 1.0) {
            return Err(Error::Validation(format!(
                "mask probability {} outside (0, 1)",
                self.mask_probability
            )));
        }
        if !(self.ridge_lambda >= 0.0) || !self.ridge_lambda.is_finite() {
            return Err(Error::Validation(format!("ridge lambda {} must be >= 0", self.ridge_lambda)));
        }
        if self.kernel == Kernel::Exponential && !(self.kernel_width > 0.0) {
            return Err(Error::Validation("kernel width must be positive".into()));
        }
        if self.num_perturbations < n_items + 2 {
            return Err(Error::Validation(format!(
                "{} perturbations cannot determine a fit over {n_items} items (need at least {})",
                self.num_perturbations,
                n_items + 2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub masks: Vec<Vec<bool>>,
    /// Every one of the 2^n masks appears exactly once.
    pub exhaustive: bool,
    /// Fewer than two items: no fit is possible.
    pub degenerate: bool,
}

fn exhaustive_fits(n_items: usize, budget: usize) -> bool {
    n_items < usize::BITS as usize - 1 && (1usize << n_items) <= budget
}

pub fn sample_masks(n_items: usize, cfg: &LimeConfig) -> MaskSet {
    assert!(n_items >= 1, "cannot sample masks over zero items");
    if n_items == 1 {
        // The only informative alternative is the all-masked input, which the
        // sampler never produces.
        return MaskSet {
            masks: vec![vec![true]],
            exhaustive: false,
            degenerate: true,
        };
    }
    if cfg.exhaustive_when_possible && exhaustive_fits(n_items, cfg.num_perturbations) {
        let total = 1usize << n_items;
        // Descending so the unperturbed mask comes first.
        let masks = (0..total)
            .rev()
            .map(|code| (0..n_items).map(|k| code >> k & 1 == 1).collect())
            .collect();
        return MaskSet {
            masks,
            exhaustive: true,
            degenerate: false,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let keep = 1.0 - cfg.mask_probability;
    let mut masks = Vec::with_capacity(cfg.num_perturbations);
    masks.push(vec![true; n_items]);
    while masks.len() < cfg.num_perturbations {
        let m: Vec<bool> = (0..n_items).map(|_| rng.random_bool(keep)).collect();
        if m.iter().any(|&b| b) {
            masks.push(m);
        }
    }
    MaskSet {
        masks,
        exhaustive: false,
        degenerate: false,
    }
}

/// Proximity weight of a mask to the unperturbed input.
pub fn kernel_weight(mask: &[bool], cfg: &LimeConfig) -> f64 {
    match cfg.kernel {
        Kernel::Uniform => 1.0,
        Kernel::Exponential => {
            // Cosine similarity to all-ones is sqrt(present / n).
            let present = mask.iter().filter(|&&b| b).count() as f64;
            let distance = 1.0 - (present / mask.len() as f64).sqrt();
            (-(distance * distance) / (cfg.kernel_width * cfg.kernel_width)).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub n_perturbations: usize,
    pub exhaustive: bool,
}

/// Sample masks, score them through `targets` (one target per mask, in
/// order), and fit the surrogate. `label` names an item in error messages.
pub fn explain_with<F>(n_items: usize, cfg: &LimeConfig, label: impl Fn(usize) -> String, targets: F) -> Result<LimeFit>
where
    F: Fn(&[Vec<bool>]) -> Result<Vec<f64>>,
{
    cfg.validate(n_items)?;
    let set = sample_masks(n_items, cfg);
    if set.degenerate {
        return Err(Error::Fit(format!("only {n_items} item(s); a surrogate needs at least 2")));
    }
    let mut ys = Vec::with_capacity(set.masks.len());
    for chunk in set.masks.chunks(SCORING_CHUNK) {
        let got = targets(chunk)?;
        if got.len() != chunk.len() {
            return Err(Error::Oracle(format!("{} targets for {} masks", got.len(), chunk.len())));
        }
        ys.extend(got);
    }
    let weights: Vec<f64> = set.masks.iter().map(|m| kernel_weight(m, cfg)).collect();
    let fit = fit_weighted_ridge(&set.masks, &ys, &weights, cfg.ridge_lambda).map_err(|issue| match issue {
        DesignIssue::ConstantColumn(k) => Error::Fit(format!("{} is never varied across perturbations", label(k))),
        DesignIssue::Singular => Error::Fit("normal equations are singular".into()),
        DesignIssue::Shape => Error::Fit("inconsistent design shape".into()),
    })?;
    Ok(LimeFit {
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        r2: fit.r2,
        n_perturbations: set.masks.len(),
        exhaustive: set.exhaustive,
    })
}

/// Indices ordered by weight, largest first; ties go to the lower index.
pub fn rank_descending(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// First `k` of a ranking (most influential first).
pub fn top_of<T: Copy>(ranking: &[T], k: usize) -> Vec<T> {
    ranking.iter().take(k).copied().collect()
}

/// Last `k` of a ranking, least influential first.
pub fn bottom_of<T: Copy>(ranking: &[T], k: usize) -> Vec<T> {
    ranking.iter().rev().take(k).copied().collect()
}
