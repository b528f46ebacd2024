//! Normative conjugate updating and the comparisons built on it.

use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::summation::stable_mean;

/// Presented binomial data: success and failure counts plus display metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedData {
    pub successes: u64,
    pub failures: u64,
    #[serde(default)]
    pub label: String,
    /// People represented by one icon in the stimulus.
    #[serde(default = "default_icon_unit")]
    pub icon_unit: u32,
}

fn default_icon_unit() -> u32 {
    1
}

impl ObservedData {
    pub fn new(successes: u64, failures: u64) -> Result<Self> {
        let d = Self {
            successes,
            failures,
            label: String::new(),
            icon_unit: 1,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn labeled(mut self, label: impl Into<String>, icon_unit: u32) -> Self {
        self.label = label.into();
        self.icon_unit = icon_unit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.successes.checked_add(self.failures).is_none_or(|n| n == 0) {
            return Err(Error::validation("data", "successes + failures must be positive"));
        }
        if self.icon_unit == 0 {
            return Err(Error::validation("data.icon_unit", "must be positive"));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.successes + self.failures
    }

    pub fn display_proportion(&self) -> f64 {
        self.successes as f64 / self.total() as f64
    }
}

/// Conjugate update: `Beta(alpha + successes, beta + failures)`.
pub fn normative_update<T: Scalar>(prior: &Beta<T>, data: &ObservedData) -> Beta<T> {
    Beta::new(
        prior.alpha() + T::from_count(data.successes),
        prior.beta() + T::from_count(data.failures),
    )
    .expect("adding nonnegative counts keeps parameters positive")
}

/// Component-wise mean of the alphas and of the betas.
pub fn aggregate<T: Scalar>(params: &[Beta<T>]) -> Result<Beta<T>> {
    let alphas: Vec<T> = params.iter().map(Beta::alpha).collect();
    let betas: Vec<T> = params.iter().map(Beta::beta).collect();
    match (stable_mean(&alphas), stable_mean(&betas)) {
        (Some(a), Some(b)) => Beta::new(a, b),
        _ => Err(Error::Empty("aggregate")),
    }
}

/// Counts a Bayesian would have had to observe to move from the prior to
/// the participant's posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceivedData<T> {
    pub alpha_perceived: T,
    pub beta_perceived: T,
    pub n_perceived: T,
    /// Either component is negative, i.e. the posterior moved against the data
    /// on that side. Values are reported unclamped.
    pub negative_flag: bool,
}

/// Reverses the conjugate update.
///
/// Differences within a few ulps of the posterior parameter of an integer are
/// snapped to it, so that `perceived_data(p, normative_update(p, d))` recovers
/// the counts of `d` exactly despite the rounding of the forward sum.
pub fn perceived_data<T: Scalar>(prior: &Beta<T>, posterior: &Beta<T>) -> PerceivedData<T> {
    let snap = |post: T, pre: T| -> T {
        let diff = post - pre;
        let nearest = diff.round();
        let scale = post.abs().max(pre.abs());
        if (diff - nearest).abs() <= c::<T>(4.0) * T::epsilon() * scale {
            nearest
        } else {
            diff
        }
    };
    let a = snap(posterior.alpha(), prior.alpha());
    let b = snap(posterior.beta(), prior.beta());
    PerceivedData {
        alpha_perceived: a,
        beta_perceived: b,
        n_perceived: a + b,
        negative_flag: a < T::zero() || b < T::zero(),
    }
}

/// Where a participant's posterior mode sits relative to the normative one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingClass {
    /// Closer to the observed proportion than the normative posterior is.
    OverweightData,
    /// Between the normative posterior and the prior.
    OverweightPrior,
    /// Farther from the observed proportion than the prior is.
    BeyondPrior,
    /// Within `tol` of the normative posterior mode.
    Aligned,
}

pub const DEFAULT_ALIGNMENT_TOL: f64 = 0.01;

/// Classifies how the participant weighted prior against data.
///
/// Rules apply in order: aligned, overweighting the data, moving beyond the
/// prior, otherwise overweighting the prior. The data's location is its
/// observed proportion and `tol` is in absolute proportion points.
pub fn classify_weighting<T: Scalar>(
    prior: &Beta<T>,
    data: &ObservedData,
    participant_posterior: &Beta<T>,
    tol: T,
) -> Result<WeightingClass> {
    let d = T::lit(data.display_proportion());
    let n = normative_update(prior, data).mode()?;
    let x = participant_posterior.mode()?;
    let p = prior.mode()?;
    Ok(classify_modes(p, d, n, x, tol))
}

/// The classification rules on already-computed modes: prior `p`, data `d`,
/// normative `n`, participant `x`.
pub fn classify_modes<T: Scalar>(p: T, d: T, n: T, x: T, tol: T) -> WeightingClass {
    if (x - n).abs() <= tol {
        WeightingClass::Aligned
    } else if (x - d).abs() < (n - d).abs() {
        WeightingClass::OverweightData
    } else if (x - d).abs() > (p - d).abs() {
        WeightingClass::BeyondPrior
    } else {
        WeightingClass::OverweightPrior
    }
}

/// Observed minus predicted mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals<T> {
    pub mean: T,
    pub sd: T,
}

pub fn residuals<T: Scalar>(participant_posterior: &Beta<T>, normative_posterior: &Beta<T>) -> Residuals<T> {
    Residuals {
        mean: participant_posterior.mean() - normative_posterior.mean(),
        sd: participant_posterior.sd() - normative_posterior.sd(),
    }
}
