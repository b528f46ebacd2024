//! Fitting Beta distributions to elicited belief responses.
//!
//! Three response formats are supported:
//!
//! * a small set of sampled proportions with per-sample confidence,
//!   fitted by weighted Method of Moments;
//! * a 20-bin histogram of exactly 100 balls, fitted by Method of Moments
//!   over ball positions;
//! * a mode plus the subjective probability of the ±25% interval around it,
//!   fitted by least squares over (mode, interval mass).

use serde::{Deserialize, Serialize};

use crate::beta::{Beta, Interval};
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, SimplexOptions};
use crate::scalar::{c, Scalar};

pub const MAX_SAMPLES: usize = 5;
pub const MAX_CONFIDENCE: u32 = 100;
pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_BALLS: u32 = 100;
pub const BIN_WIDTH: f64 = 0.05;
/// Half-width of the mode interval, relative to the mode.
pub const MODE_INTERVAL_HALF_WIDTH: f64 = 0.25;

/// Multistart values of `ln(alpha + beta - 2)` for the mode+interval fit.
const MULTISTART_LOG_EXCESS: [f64; 5] = [0.0, 2.0, 4.0, 6.0, 8.0];
const LOG_EXCESS_RANGE: (f64, f64) = (-20.0, 30.0);

/// Warnings attached to a fitted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The deviant-case policy replaced a degenerate response.
    Deviant,
    /// The moment equations had no valid solution (variance too large).
    InvalidMoments,
    /// The optimizer did not reach the objective tolerance.
    NotConverged,
    /// The interval probability is numerically insensitive to concentration,
    /// so the fitted concentration is poorly determined.
    WeakIdentification,
    /// Subjective interval probability of exactly 0 or 1.
    DegenerateProbability,
    /// A simulated response was quantized by its format.
    Quantized,
    /// A simulated belief could not be represented exactly by the format.
    CannotEncode,
    /// No prior was elicited; a reference prior was used.
    ReferencePrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Fit<T> {
    pub params: Beta<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FitFlag>,
}

impl<T: Scalar> Fit<T> {
    fn clean(params: Beta<T>) -> Self {
        Self {
            params,
            flags: Vec::new(),
        }
    }

    fn flagged(params: Beta<T>, flags: impl IntoIterator<Item = FitFlag>) -> Self {
        let mut flags: Vec<FitFlag> = flags.into_iter().collect();
        flags.sort();
        flags.dedup();
        Self { params, flags }
    }

    pub fn has(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// How to interpret responses that carry no spread information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviantPolicy<T> {
    /// Replace with Beta(1, 1).
    Uniform,
    /// Replace with the Beta whose mode is the response's value and whose
    /// `alpha + beta` equals `concentration`.
    Peaked { concentration: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig<T> {
    pub deviant_policy: DeviantPolicy<T>,
    pub objective_tol: T,
    pub max_iter: usize,
    /// Add the uniform within-bin variance `w^2 / 12` to histogram fits.
    pub within_bin_variance: bool,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            deviant_policy: DeviantPolicy::Uniform,
            objective_tol: c(1e-12),
            max_iter: 2_000,
            within_bin_variance: true,
        }
    }
}

impl<T: Scalar> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tol > T::zero()) {
            return Err(Error::validation("fit.objective_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("fit.max_iter", "must be positive"));
        }
        if let DeviantPolicy::Peaked { concentration } = self.deviant_policy {
            if !(concentration > c(2.0)) || !concentration.is_finite() {
                return Err(Error::validation(
                    "fit.deviant_policy.concentration",
                    "must be a finite value above 2",
                ));
            }
        }
        Ok(())
    }

    fn deviant(&self, center: T, extra: Option<FitFlag>) -> Fit<T> {
        let params = match self.deviant_policy {
            DeviantPolicy::Uniform => Beta::uniform(),
            DeviantPolicy::Peaked { concentration } => {
                let excess = concentration - c(2.0);
                let center = center.max(T::zero()).min(T::one());
                Beta::new(T::one() + center * excess, T::one() + (T::one() - center) * excess)
                    .unwrap_or_else(|_| Beta::uniform())
            }
        };
        Fit::flagged(params, std::iter::once(FitFlag::Deviant).chain(extra))
    }
}

/// A small set of sampled proportions, one confidence rating (0-100) each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetResponse<T> {
    pub samples: Vec<T>,
    /// `None` weights all samples equally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<u32>>,
}

impl<T: Scalar> SampleSetResponse<T> {
    pub fn new(samples: Vec<T>, confidences: Vec<u32>) -> Result<Self> {
        let r = Self {
            samples,
            confidences: Some(confidences),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn unweighted(samples: Vec<T>) -> Result<Self> {
        let r = Self {
            samples,
            confidences: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::validation("samples", "at least one sample is required"));
        }
        if self.samples.len() > MAX_SAMPLES {
            return Err(Error::validation(
                "samples",
                format!("at most {MAX_SAMPLES} samples allowed, got {}", self.samples.len()),
            ));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(*s >= T::zero() && *s <= T::one()) {
                return Err(Error::validation(format!("samples[{i}]"), format!("{s} is outside [0, 1]")));
            }
        }
        if let Some(conf) = &self.confidences {
            if conf.len() != self.samples.len() {
                return Err(Error::validation(
                    "confidences",
                    format!("expected {} confidences, got {}", self.samples.len(), conf.len()),
                ));
            }
            if let Some((i, v)) = conf.iter().enumerate().find(|(_, v)| **v > MAX_CONFIDENCE) {
                return Err(Error::validation(format!("confidences[{i}]"), format!("{v} exceeds {MAX_CONFIDENCE}")));
            }
        }
        Ok(())
    }

    /// The response restricted to its first `n` samples (all if fewer).
    pub fn first_n(&self, n: usize) -> Self {
        let n = n.min(self.samples.len());
        Self {
            samples: self.samples[..n].to_vec(),
            confidences: self.confidences.as_ref().map(|c| c[..n].to_vec()),
        }
    }

    /// Normalized weights, or `None` when every confidence is zero.
    pub fn weights(&self) -> Option<Vec<T>> {
        let n = self.samples.len();
        match &self.confidences {
            None => {
                let nn = T::from_usize(n).unwrap();
                Some(vec![T::one() / nn; n])
            }
            Some(conf) => {
                let total: u64 = conf.iter().map(|&v| u64::from(v)).sum();
                if total == 0 {
                    return None;
                }
                let total = T::from_count(total);
                Some(conf.iter().map(|&v| T::from_count(u64::from(v)) / total).collect())
            }
        }
    }
}

/// A mode and the subjective probability that the truth lies within
/// `[0.75 mode, 1.25 mode]` (clipped to [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeIntervalResponse<T> {
    pub mode: T,
    pub subjective_probability: T,
}

impl<T: Scalar> ModeIntervalResponse<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mode > T::zero() && self.mode < T::one()) {
            return Err(Error::validation("mode", format!("{} is outside (0, 1)", self.mode)));
        }
        let sp = self.subjective_probability;
        if !(sp >= T::zero() && sp <= T::one()) {
            return Err(Error::validation("subjective_probability", format!("{sp} is outside [0, 1]")));
        }
        Ok(())
    }

    pub fn interval(&self) -> Result<Interval<T>> {
        interval_for_mode(self.mode)
    }
}

/// Ball counts over the 20 bins `[0, 5%), [5, 10%), ..., [95, 100%]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramResponse {
    pub bin_counts: Vec<u32>,
}

impl HistogramResponse {
    pub fn validate(&self) -> Result<()> {
        if self.bin_counts.len() != HISTOGRAM_BINS {
            return Err(Error::validation(
                "bin_counts",
                format!("expected {HISTOGRAM_BINS} bins, got {}", self.bin_counts.len()),
            ));
        }
        let total: u64 = self.bin_counts.iter().map(|&v| u64::from(v)).sum();
        if total != u64::from(HISTOGRAM_BALLS) {
            return Err(Error::validation(
                "bin_counts",
                format!("ball counts must sum to exactly {HISTOGRAM_BALLS}, got {total}"),
            ));
        }
        Ok(())
    }

    pub fn bin_midpoint<T: Scalar>(bin: usize) -> T {
        c::<T>(BIN_WIDTH) * (T::from_usize(bin).unwrap() + c(0.5))
    }
}

/// `[max(0, 0.75 m), min(1, 1.25 m)]` for `0 < m < 1`.
pub fn interval_for_mode<T: Scalar>(m: T) -> Result<Interval<T>> {
    if !(m > T::zero() && m < T::one()) {
        return Err(Error::domain("interval_for_mode", format!("{m} is outside (0, 1)")));
    }
    let half = c::<T>(MODE_INTERVAL_HALF_WIDTH);
    let lo = (m - m * half).max(T::zero());
    let hi = (m + m * half).min(T::one());
    Interval::new(lo, hi)
}

/// Method-of-Moments Beta for mean `mean` and variance `var`, or `None` when
/// the moments admit no Beta (`var <= 0` or `var >= mean (1 - mean)`).
pub fn moment_match<T: Scalar>(mean: T, var: T) -> Option<Beta<T>> {
    if !(var > T::zero()) {
        return None;
    }
    let factor = mean * (T::one() - mean) / var - T::one();
    Beta::new(mean * factor, (T::one() - mean) * factor).ok()
}

fn moments_or_deviant<T: Scalar>(mean: T, var: T, cfg: &FitConfig<T>) -> Fit<T> {
    if !(var > T::zero()) {
        return cfg.deviant(mean, None);
    }
    match moment_match(mean, var) {
        Some(b) => Fit::clean(b),
        None => cfg.deviant(mean, Some(FitFlag::InvalidMoments)),
    }
}

/// Weighted Method-of-Moments fit of a sample-set response.
pub fn fit_from_samples<T: Scalar>(r: &SampleSetResponse<T>, cfg: &FitConfig<T>) -> Result<Fit<T>> {
    r.validate()?;
    let Some(weights) = r.weights() else {
        let n = T::from_usize(r.samples.len()).unwrap();
        let center = r.samples.iter().fold(T::zero(), |a, &b| a + b) / n;
        return Ok(cfg.deviant(center, None));
    };
    let mean = r
        .samples
        .iter()
        .zip(&weights)
        .fold(T::zero(), |acc, (&x, &w)| acc + w * x);

    // Identical effective samples carry no spread; test exactly rather than
    // trusting a rounded variance to come out as zero.
    let mut effective = r.samples.iter().zip(&weights).filter(|(_, w)| **w > T::zero()).map(|(x, _)| *x);
    let first = effective.next().expect("positive total weight");
    if effective.all(|x| x == first) {
        return Ok(cfg.deviant(first, None));
    }

    let var = r
        .samples
        .iter()
        .zip(&weights)
        .fold(T::zero(), |acc, (&x, &w)| acc + w * (x - mean) * (x - mean));
    Ok(moments_or_deviant(mean, var, cfg))
}

/// Method-of-Moments fit treating each ball as a sample at its bin midpoint.
pub fn fit_from_histogram<T: Scalar>(r: &HistogramResponse, cfg: &FitConfig<T>) -> Result<Fit<T>> {
    r.validate()?;
    let total = T::from_count(u64::from(HISTOGRAM_BALLS));
    let mean = r
        .bin_counts
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &n)| acc + T::from_count(u64::from(n)) * HistogramResponse::bin_midpoint::<T>(i))
        / total;
    let mut var = r
        .bin_counts
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &n)| {
            let d = HistogramResponse::bin_midpoint::<T>(i) - mean;
            acc + T::from_count(u64::from(n)) * d * d
        })
        / total;
    let occupied = r.bin_counts.iter().filter(|&&n| n > 0).count();
    if occupied == 1 {
        var = T::zero();
    }
    if cfg.within_bin_variance {
        let w = c::<T>(BIN_WIDTH);
        var += w * w / c(12.0);
    }
    Ok(moments_or_deviant(mean, var, cfg))
}

/// Beta with interior mode `mode` and `alpha + beta = 2 + excess`.
fn mode_parameterized<T: Scalar>(mode: T, excess: T) -> Option<Beta<T>> {
    Beta::new(T::one() + mode * excess, T::one() + (T::one() - mode) * excess).ok()
}

fn logistic<T: Scalar>(u: T) -> T {
    T::one() / (T::one() + (-u).exp())
}

/// Squared-error objective of the mode+interval fit.
pub fn mode_interval_objective<T: Scalar>(d: &Beta<T>, r: &ModeIntervalResponse<T>, interval: Interval<T>) -> T {
    let Ok(mode) = d.mode() else {
        return T::infinity();
    };
    let dm = mode - r.mode;
    let dp = d.interval_probability(interval) - r.subjective_probability;
    dm * dm + dp * dp
}

/// Least-squares fit of a mode+interval response over Betas with an
/// interior mode, by multistart Nelder-Mead in
/// `(logit(mode), ln(alpha + beta - 2))`.
pub fn fit_from_mode_interval<T: Scalar>(r: &ModeIntervalResponse<T>, cfg: &FitConfig<T>) -> Result<Fit<T>> {
    r.validate()?;
    let interval = r.interval()?;
    let (w_min, w_max) = (c::<T>(LOG_EXCESS_RANGE.0), c::<T>(LOG_EXCESS_RANGE.1));
    let decode = |x: &[T]| -> Option<Beta<T>> {
        let w = x[1].max(w_min).min(w_max);
        mode_parameterized(logistic(x[0]), w.exp())
    };
    let objective = |x: &[T]| -> T {
        match decode(x) {
            Some(d) => mode_interval_objective(&d, r, interval),
            None => T::infinity(),
        }
    };

    // Near-certain intervals change the probability by a few ulps only, so
    // stop on simplex size alone.
    let opts = SimplexOptions {
        max_iter: cfg.max_iter,
        f_tol: T::zero(),
        ..SimplexOptions::default()
    };
    let u0 = (r.mode / (T::one() - r.mode)).ln();
    let mut best = None::<(Vec<T>, T)>;
    for &w0 in &MULTISTART_LOG_EXCESS {
        let run = nelder_mead(objective, &[u0, c(w0)], &opts);
        if best.as_ref().is_none_or(|(_, f)| run.fx < *f) {
            best = Some((run.x, run.fx));
        }
    }
    let (mut x, mut fx) = best.expect("at least one start");
    // A second pass from the winner guards against a prematurely collapsed simplex.
    let polish = nelder_mead(
        objective,
        &x,
        &SimplexOptions {
            initial_step: c(0.05),
            ..opts
        },
    );
    if polish.fx <= fx {
        x = polish.x;
        fx = polish.fx;
    }

    let params = decode(&x).ok_or_else(|| Error::domain("fit_from_mode_interval", "optimizer left the feasible region"))?;
    let mut flags = Vec::new();
    if !(fx <= cfg.objective_tol) {
        flags.push(FitFlag::NotConverged);
    }
    let sp = r.subjective_probability;
    if sp == T::zero() || sp == T::one() {
        flags.push(FitFlag::DegenerateProbability);
    }
    if !concentration_identified(&x, interval, &decode) {
        flags.push(FitFlag::WeakIdentification);
    }
    Ok(Fit::flagged(params, flags))
}

/// Whether a 1% change in the concentration excess moves the interval
/// probability by a numerically resolvable amount.
fn concentration_identified<T: Scalar>(
    x: &[T],
    interval: Interval<T>,
    decode: &impl Fn(&[T]) -> Option<Beta<T>>,
) -> bool {
    let step = c::<T>(0.01);
    let prob = |w: T| decode(&[x[0], w]).map(|d| d.interval_probability(interval));
    match (prob(x[1] - step), prob(x[1] + step)) {
        (Some(a), Some(b)) => (b - a).abs() > c(1e-12),
        _ => false,
    }
}
