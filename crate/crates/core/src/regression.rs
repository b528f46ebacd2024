//! Bayesian linear regression of individual log KLD on the condition
//! factors, sampled with adaptive random-walk Metropolis.
//!
//! Model: `y ~ Normal(X b, sigma)`, `b_j ~ Normal(0, prior_sd)`,
//! `sigma ~ HalfCauchy(0, scale_prior_scale)`. The sampler works on
//! `(b, ln sigma)` and only touches the data through `X'X`, `X'y` and `y'y`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{quantile_sorted, sample_sd};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::summation::stable_mean;

pub const COEFFICIENTS: [&str; 5] = ["intercept", "uncertainty", "elicitation", "dataset", "centered_time"];

/// R-hat above this marks the fit as not converged.
pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionSpec {
    /// Standard deviation of the zero-mean Normal prior on each coefficient.
    pub prior_sd: f64,
    /// Scale of the half-Cauchy prior on the residual sd.
    pub scale_prior_scale: f64,
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            prior_sd: 1.0,
            scale_prior_scale: 1.0,
            chains: 4,
            iterations: 6000,
            warmup: 3000,
            target_acceptance: 0.3,
            seed: 0,
        }
    }
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 4 {
            return Err(Error::validation("regression.chains", "at least 4 chains are required"));
        }
        if !(self.warmup > 0 && self.iterations > self.warmup) {
            return Err(Error::validation("regression.iterations", "need iterations > warmup > 0"));
        }
        if self.iterations - self.warmup < 4 {
            return Err(Error::validation("regression.iterations", "need at least 4 post-warmup draws"));
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::validation("regression.prior_sd", "must be positive"));
        }
        if !(self.scale_prior_scale > 0.0 && self.scale_prior_scale.is_finite()) {
            return Err(Error::validation("regression.scale_prior_scale", "must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::validation("regression.target_acceptance", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One observation. `time` is raw; it is mean-centered before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub log_kld: f64,
    pub uncertainty: bool,
    pub elicitation: bool,
    /// Elderly dataset indicator.
    pub dataset: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Central 95% posterior interval.
    pub lo: f64,
    pub hi: f64,
    pub rhat: f64,
    pub ess: f64,
    pub mcse: f64,
}

impl ParameterSummary {
    pub fn covers(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub n: usize,
    pub coefficients: Vec<ParameterSummary>,
    pub sigma: ParameterSummary,
    /// Constant covariates dropped from the design.
    pub omitted: Vec<String>,
    /// Every R-hat is at most [`RHAT_THRESHOLD`].
    pub converged: bool,
    /// Post-warmup acceptance rate per chain.
    pub acceptance: Vec<f64>,
    /// Mean of the raw time covariate subtracted before fitting.
    pub time_center: f64,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&ParameterSummary> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

struct Posterior {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: f64,
    prior_prec: f64,
    cauchy_scale: f64,
}

impl Posterior {
    /// Log density of `(b, ln sigma)` up to a constant.
    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let p = theta.len() - 1;
        let b = theta.rows(0, p);
        let log_sigma = theta[p];
        let sigma2 = (2.0 * log_sigma).exp();
        let rss = self.yty - 2.0 * b.dot(&self.xty) + (&self.xtx * b).dot(&b);
        let rss = rss.max(0.0);
        let sigma_ratio = log_sigma.exp() / self.cauchy_scale;
        -self.n * log_sigma - rss / (2.0 * sigma2) - 0.5 * self.prior_prec * b.norm_squared()
            - (1.0 + sigma_ratio * sigma_ratio).ln()
            + log_sigma
    }
}

struct Chain {
    draws: Vec<DVector<f64>>,
    acceptance: f64,
}

fn run_chain(post: &Posterior, init: &DVector<f64>, init_cov: &DMatrix<f64>, spec: &RegressionSpec, chain: u64) -> Chain {
    let d = init.len();
    let mut rng = stream_rng(spec.seed, chain);
    let mut theta = init.clone();
    let mut lp = post.log_density(&theta);
    let mut log_scale = (2.38f64 * 2.38 / d as f64).ln();
    let mut chol = init_cov.clone().cholesky().expect("initial covariance is positive definite").l();

    // Running moments of the warmup draws for covariance adaptation.
    let mut mean = DVector::<f64>::zeros(d);
    let mut m2 = DMatrix::<f64>::zeros(d, d);
    let mut count = 0.0;
    let adapt_start = spec.warmup / 4;
    let mut draws = Vec::with_capacity(spec.iterations - spec.warmup);
    let mut accepted = 0usize;

    for it in 0..spec.iterations {
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let proposal = &theta + (&chol * z) * (0.5 * log_scale).exp();
        let lp_new = post.log_density(&proposal);
        let log_ratio = lp_new - lp;
        let accept = log_ratio.is_finite() && (log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio);
        if accept {
            theta = proposal;
            lp = lp_new;
        }

        if it < spec.warmup {
            let rate = if accept { 1.0 } else { 0.0 };
            log_scale += (rate - spec.target_acceptance) / ((it + 1) as f64).powf(0.6);
            count += 1.0;
            let delta = &theta - &mean;
            mean += &delta / count;
            m2 += &delta * (&theta - &mean).transpose();
            if it >= adapt_start && (it - adapt_start).is_multiple_of(100) && count > d as f64 + 1.0 {
                let mut cov = &m2 / (count - 1.0);
                for i in 0..d {
                    cov[(i, i)] += 1e-10;
                }
                if let Some(c) = cov.cholesky() {
                    chol = c.l();
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(theta.clone());
        }
    }
    Chain {
        acceptance: accepted as f64 / (spec.iterations - spec.warmup) as f64,
        draws,
    }
}

fn variance(x: &[f64]) -> f64 {
    sample_sd(x).map_or(0.0, |s| s * s)
}

/// Split R-hat: each chain is halved and the potential scale reduction is
/// computed over the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| stable_mean(h).unwrap()).collect();
    let w = stable_mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>()).unwrap();
    let b = n * variance(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Effective sample size from the chain autocorrelations, truncated with
/// Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| stable_mean(c).unwrap()).collect();
    let chain_vars: Vec<f64> = chains.iter().map(|c| variance(c)).collect();
    let w = stable_mean(&chain_vars).unwrap();
    let var_plus = (n as f64 - 1.0) / n as f64 * w + variance(&chain_means);
    if var_plus <= 0.0 {
        return total;
    }
    let autocov = |lag: usize| -> f64 {
        let per_chain: Vec<f64> = chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &mu)| (0..n - lag).map(|i| (c[i] - mu) * (c[i + lag] - mu)).sum::<f64>() / n as f64)
            .collect();
        stable_mean(&per_chain).unwrap()
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total * total.log10().max(1.0))
}

fn summarize(name: &str, chains: &[Vec<f64>]) -> ParameterSummary {
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    let mean = stable_mean(&all).unwrap();
    let sd = sample_sd(&all).unwrap_or(0.0);
    let ess = effective_sample_size(chains);
    all.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        lo: quantile_sorted(&all, 0.025),
        hi: quantile_sorted(&all, 0.975),
        rhat: split_rhat(chains),
        ess,
        mcse: sd / ess.sqrt(),
    }
}

pub fn regress_log_kld(rows: &[RegressionRow], spec: &RegressionSpec) -> Result<RegressionResult> {
    spec.validate()?;
    if rows.len() < 2 {
        return Err(Error::Empty("regress_log_kld"));
    }
    for (i, r) in rows.iter().enumerate() {
        if !r.log_kld.is_finite() || !r.time.is_finite() {
            return Err(Error::NonFinite(format!("regression row {i}")));
        }
    }
    let time_center = stable_mean(&rows.iter().map(|r| r.time).collect::<Vec<_>>()).unwrap();
    let covariate = |r: &RegressionRow, j: usize| -> f64 {
        match j {
            0 => 1.0,
            1 => f64::from(u8::from(r.uncertainty)),
            2 => f64::from(u8::from(r.elicitation)),
            3 => f64::from(u8::from(r.dataset)),
            _ => r.time - time_center,
        }
    };
    let mut names = Vec::new();
    let mut omitted = Vec::new();
    let mut kept = Vec::new();
    for (j, name) in COEFFICIENTS.iter().enumerate() {
        let first = covariate(&rows[0], j);
        let constant = rows.iter().all(|r| covariate(r, j) == first);
        if j > 0 && constant {
            omitted.push(name.to_string());
        } else {
            names.push(*name);
            kept.push(j);
        }
    }

    let n = rows.len();
    let p = kept.len();
    let x = DMatrix::<f64>::from_fn(n, p, |i, j| covariate(&rows[i], kept[j]));
    let y = DVector::<f64>::from_iterator(n, rows.iter().map(|r| r.log_kld));
    let post = Posterior {
        xtx: x.transpose() * &x,
        xty: x.transpose() * &y,
        yty: y.dot(&y),
        n: n as f64,
        prior_prec: 1.0 / (spec.prior_sd * spec.prior_sd),
        cauchy_scale: spec.scale_prior_scale,
    };

    let sd_y = sample_sd(y.as_slice()).unwrap_or(1.0).max(1e-8);
    let mut init = DVector::<f64>::zeros(p + 1);
    init[p] = sd_y.ln();

    // Laplace-style starting proposal: conditional covariance of b at
    // sigma = sd(y), and 1 / (2n) for ln sigma.
    let mut prec = &post.xtx / (sd_y * sd_y);
    for i in 0..p {
        prec[(i, i)] += post.prior_prec;
    }
    let b_cov = prec
        .try_inverse()
        .ok_or_else(|| Error::validation("design", "the design matrix is singular"))?;
    let mut init_cov = DMatrix::<f64>::zeros(p + 1, p + 1);
    init_cov.view_mut((0, 0), (p, p)).copy_from(&b_cov);
    init_cov[(p, p)] = 1.0 / (2.0 * n as f64);

    let chains: Vec<Chain> = (0..spec.chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&post, &init, &init_cov, spec, c))
        .collect();

    let trace = |k: usize, f: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.draws.iter().map(|t| f(t[k])).collect()).collect()
    };
    let coefficients: Vec<ParameterSummary> = names
        .iter()
        .enumerate()
        .map(|(k, name)| summarize(name, &trace(k, &|v| v)))
        .collect();
    let sigma = summarize("sigma", &trace(p, &f64::exp));
    let converged = coefficients.iter().chain(std::iter::once(&sigma)).all(|s| s.rhat <= RHAT_THRESHOLD);
    Ok(RegressionResult {
        n,
        coefficients,
        sigma,
        omitted,
        converged,
        acceptance: chains.iter().map(|c| c.acceptance).collect(),
        time_center,
    })
}
