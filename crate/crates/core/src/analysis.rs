//! KLD summaries, bootstrap intervals and the first-n sensitivity analysis.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bayes::{aggregate, normative_update, ObservedData};
use crate::beta::beta_kld;
use crate::error::{Error, Result};
use crate::record::{ElicitedBelief, ParticipantRecord};
use crate::rng::stream_rng;
use crate::summation::{exact_sum, stable_mean};
use crate::{BetaParams, FitConfig, SampleSetResponse};

/// KLD values at or below this are treated as zero. The closed form carries
/// rounding error of this order even for identical arguments.
pub const ZERO_KLD_TOL: f64 = 1e-12;

/// Natural log of a KLD. Zero divergence maps to `-inf`, which serializes
/// as the string `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogKld(pub f64);

impl LogKld {
    pub fn from_kld(kld: f64) -> Self {
        if kld <= ZERO_KLD_TOL {
            LogKld(f64::NEG_INFINITY)
        } else {
            LogKld(kld.ln())
        }
    }

    pub fn is_zero_kld(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The KLD itself (0 for the sentinel).
    pub fn kld(self) -> f64 {
        self.0.exp()
    }
}

impl fmt::Display for LogKld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero_kld() {
            f.write_str("-inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

impl Serialize for LogKld {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_zero_kld() {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LogKld {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(LogKld(v)),
            Raw::Str(s) if s == "-inf" => Ok(LogKld(f64::NEG_INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"-inf\", got `{s}`"))),
        }
    }
}

/// `ln D_KL(posterior ‖ normative_update(prior, data))`.
pub fn log_kld_of(prior: &BetaParams, posterior: &BetaParams, data: &ObservedData) -> LogKld {
    LogKld::from_kld(beta_kld(posterior, &normative_update(prior, data)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLogKld {
    pub id: String,
    pub log_kld: LogKld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualLogKlds {
    pub per_record: Vec<RecordLogKld>,
    /// Mean over records with nonzero KLD; `None` if there are none.
    pub mean: Option<f64>,
    /// Sample standard deviation over the same records; needs two of them.
    pub sd: Option<f64>,
    /// Records whose KLD is zero, excluded from `mean` and `sd`.
    pub zero_count: usize,
}

/// Sample (n - 1) standard deviation.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = stable_mean(values)?;
    let ss = exact_sum(values.iter().map(|x| (x - m) * (x - m)));
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn individual_log_klds(records: &[ParticipantRecord], data: &ObservedData) -> Result<IndividualLogKlds> {
    let mut per_record = Vec::with_capacity(records.len());
    for r in records {
        let (prior, posterior) = r.fits()?;
        per_record.push(RecordLogKld {
            id: r.id.clone(),
            log_kld: log_kld_of(&prior, &posterior, data),
        });
    }
    let finite: Vec<f64> = per_record
        .iter()
        .filter(|r| !r.log_kld.is_zero_kld())
        .map(|r| r.log_kld.0)
        .collect();
    Ok(IndividualLogKlds {
        zero_count: per_record.len() - finite.len(),
        mean: stable_mean(&finite),
        sd: sample_sd(&finite),
        per_record,
    })
}

fn fit_pairs(records: &[ParticipantRecord]) -> Result<Vec<(BetaParams, BetaParams)>> {
    records.iter().map(ParticipantRecord::fits).collect()
}

/// Log KLD between the aggregate posterior and the normative update of the
/// aggregate prior.
pub fn aggregate_log_kld_of_fits(fits: &[(BetaParams, BetaParams)], data: &ObservedData) -> Result<LogKld> {
    if fits.is_empty() {
        return Err(Error::Empty("aggregate_log_kld"));
    }
    let priors: Vec<BetaParams> = fits.iter().map(|f| f.0).collect();
    let posteriors: Vec<BetaParams> = fits.iter().map(|f| f.1).collect();
    Ok(log_kld_of(&aggregate(&priors)?, &aggregate(&posteriors)?, data))
}

pub fn aggregate_log_kld(records: &[ParticipantRecord], data: &ObservedData) -> Result<LogKld> {
    aggregate_log_kld_of_fits(&fit_pairs(records)?, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub resample_size: usize,
    pub repetitions: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            resample_size: 100,
            repetitions: 2000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::validation("bootstrap.level", "must lie strictly between 0 and 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::validation("bootstrap.repetitions", "must be positive"));
        }
        if self.resample_size == 0 {
            return Err(Error::validation("bootstrap.resample_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lo: LogKld,
    pub hi: LogKld,
    /// Aggregate log KLD of the full sample.
    pub point: LogKld,
    pub level: f64,
    pub repetitions: usize,
    pub resample_size: usize,
}

/// Type-7 (linear interpolation) quantile of sorted values.
///
/// Infinite endpoints are not interpolated: if either neighbour is infinite
/// the lower one is returned.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    let lo = sorted[i];
    if frac == 0.0 || i + 1 >= sorted.len() {
        return lo;
    }
    let hi = sorted[i + 1];
    if lo == hi || !lo.is_finite() || !hi.is_finite() {
        return lo;
    }
    lo + frac * (hi - lo)
}

/// Percentile interval of the aggregate log KLD over resamples (with
/// replacement) of the fitted records. Replicate `r` draws from its own
/// stream derived from `(spec.seed, r)`, so the result does not depend on
/// thread scheduling.
pub fn bootstrap_aggregate_ci(
    records: &[ParticipantRecord],
    data: &ObservedData,
    spec: &BootstrapSpec,
) -> Result<BootstrapInterval> {
    spec.validate()?;
    let fits = fit_pairs(records)?;
    let point = aggregate_log_kld_of_fits(&fits, data)?;
    let mut reps: Vec<f64> = (0..spec.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(spec.seed, r as u64);
            let sample: Vec<(BetaParams, BetaParams)> = (0..spec.resample_size)
                .map(|_| fits[rng.random_range(0..fits.len())])
                .collect();
            aggregate_log_kld_of_fits(&sample, data).map(|v| v.0)
        })
        .collect::<Result<_>>()?;
    reps.sort_by(f64::total_cmp);
    let tail = (1.0 - spec.level) / 2.0;
    Ok(BootstrapInterval {
        lo: LogKld(quantile_sorted(&reps, tail)),
        hi: LogKld(quantile_sorted(&reps, 1.0 - tail)),
        point,
        level: spec.level,
        repetitions: spec.repetitions,
        resample_size: spec.resample_size,
    })
}

pub const DEFAULT_FIRST_N: [usize; 3] = [3, 4, 5];

fn samples_of<'a>(r: &'a ParticipantRecord, b: &'a ElicitedBelief) -> Result<&'a SampleSetResponse> {
    b.as_samples().ok_or_else(|| Error::MissingSamples { id: r.id.clone() })
}

/// Refits every record on its first `n` samples and returns the aggregate
/// log KLD per `n`. Records without elicited priors keep their reference
/// prior.
pub fn first_n_analysis(
    records: &[ParticipantRecord],
    data: &ObservedData,
    n_values: &[usize],
    cfg: &FitConfig,
) -> Result<BTreeMap<usize, LogKld>> {
    if records.is_empty() {
        return Err(Error::Empty("first_n_analysis"));
    }
    for r in records {
        samples_of(r, &r.posterior_response)?;
        if let Some(p) = &r.prior_response {
            samples_of(r, p)?;
        }
    }
    let mut out = BTreeMap::new();
    for &n in n_values {
        if n == 0 {
            return Err(Error::validation("first_n", "n must be positive"));
        }
        let fits = records
            .iter()
            .map(|r| {
                let posterior = crate::elicit::fit_from_samples(&samples_of(r, &r.posterior_response)?.first_n(n), cfg)?;
                let prior = match &r.prior_response {
                    Some(p) => crate::elicit::fit_from_samples(&samples_of(r, p)?.first_n(n), cfg)?.params,
                    None => r.fits()?.0,
                };
                Ok((prior, posterior.params))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(n, aggregate_log_kld_of_fits(&fits, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::record::{AttentionAnswer, Condition, ElicitationFormat};

    fn b(a: f64, bb: f64) -> BetaParams {
        BetaParams::new(a, bb).unwrap()
    }

    fn tech() -> ObservedData {
        ObservedData::new(27, 131).unwrap()
    }

    fn rec(id: &str, prior: BetaParams, posterior: BetaParams) -> ParticipantRecord {
        let samples = SampleSetResponse::unweighted(vec![0.2]).unwrap();
        ParticipantRecord {
            id: id.into(),
            dataset: Dataset::TechSmall,
            condition: Condition::new(ElicitationFormat::TextSample),
            prior_response: Some(ElicitedBelief::SampleSet(samples.clone())),
            posterior_response: ElicitedBelief::SampleSet(samples),
            prior_fit: Some(prior),
            posterior_fit: Some(posterior),
            prior_flags: vec![],
            posterior_flags: vec![],
            view_time: 1.0,
            total_time: None,
            attention_answer: AttentionAnswer::R0_30,
            attention_pass: Some(true),
            simulated: false,
        }
    }

    #[test]
    fn sentinel_serializes_as_string() {
        assert_eq!(serde_json::to_string(&LogKld(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&LogKld(-2.5)).unwrap(), "-2.5");
        let back: LogKld = serde_json::from_str("\"-inf\"").unwrap();
        assert!(back.is_zero_kld());
        assert_eq!(LogKld::from_kld(0.0).kld(), 0.0);
    }

    #[test]
    fn normative_record_is_sentinel() {
        let r = rec("a", b(10.79, 18.99), b(37.79, 149.99));
        let out = individual_log_klds(std::slice::from_ref(&r), &tech()).unwrap();
        assert_eq!(out.zero_count, 1);
        assert_eq!(out.mean, None);
        assert!(aggregate_log_kld(&[r], &tech()).unwrap().is_zero_kld());
    }

    #[test]
    fn missing_fit_is_an_error() {
        let mut r = rec("a", b(1.0, 1.0), b(2.0, 2.0));
        r.posterior_fit = None;
        assert!(matches!(individual_log_klds(&[r], &tech()), Err(Error::MissingFit { .. })));
        assert_eq!(aggregate_log_kld(&[], &tech()), Err(Error::Empty("aggregate_log_kld")));
    }

    #[test]
    fn aggregate_is_order_and_duplication_invariant() {
        let rs = vec![
            rec("a", b(2.0, 9.0), b(20.0, 100.0)),
            rec("b", b(5.5, 3.0), b(30.0, 130.0)),
            rec("c", b(1.2, 1.7), b(25.0, 80.0)),
        ];
        let base = aggregate_log_kld(&rs, &tech()).unwrap();
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(aggregate_log_kld(&rev, &tech()).unwrap(), base);
        let doubled: Vec<_> = rs.iter().chain(rs.iter()).cloned().collect();
        assert_eq!(aggregate_log_kld(&doubled, &tech()).unwrap(), base);
    }

    #[test]
    fn bootstrap_constant_cohort_zero_width_and_deterministic() {
        let rs: Vec<_> = (0..10).map(|i| rec(&i.to_string(), b(3.0, 8.0), b(20.0, 100.0))).collect();
        let spec = BootstrapSpec {
            repetitions: 200,
            ..Default::default()
        };
        let ci = bootstrap_aggregate_ci(&rs, &tech(), &spec).unwrap();
        assert_eq!(ci.lo, ci.hi);
        assert_eq!(ci.lo, ci.point);

        let mixed: Vec<_> = (0..10)
            .map(|i| rec(&i.to_string(), b(3.0 + i as f64, 8.0), b(20.0, 100.0 + 3.0 * i as f64)))
            .collect();
        let x = bootstrap_aggregate_ci(&mixed, &tech(), &spec).unwrap();
        let y = bootstrap_aggregate_ci(&mixed, &tech(), &spec).unwrap();
        assert_eq!(x, y);
        assert!(x.lo.0 < x.hi.0);
        let z = bootstrap_aggregate_ci(&mixed, &tech(), &BootstrapSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[f64::NEG_INFINITY, 0.0], 0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn sample_sd_basics() {
        assert_eq!(sample_sd(&[1.0]), None);
        assert!((sample_sd(&[1.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
