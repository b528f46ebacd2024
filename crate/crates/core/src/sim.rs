//! Synthetic participants and hypothetical-outcome frames.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{normative_update, ObservedData};
use crate::dataset::Dataset;
use crate::elicit::{interval_for_mode, FitFlag, BIN_WIDTH, HISTOGRAM_BALLS, HISTOGRAM_BINS, MAX_CONFIDENCE, MAX_SAMPLES};
use crate::error::{Error, Result};
use crate::record::{AttentionAnswer, Condition, ElicitationFormat, ElicitedBelief, ParticipantRecord};
use crate::rng::{derive_seed, stream_rng};
use crate::{BetaParams, HistogramResponse, ModeIntervalResponse, SampleSetResponse};

pub const HOPS_FRAME_MS: u32 = 400;
pub const DEFAULT_HOPS_FRAMES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    /// Reports its prior and the normative posterior exactly.
    ExactBayesian,
    /// Reports `k` draws from each distribution.
    SampleBased { k: usize },
}

impl std::str::FromStr for AgentKind {
    type Err = Error;
    /// Parses `exact` or `sample:K`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "exact" {
            return Ok(AgentKind::ExactBayesian);
        }
        let k = s
            .strip_prefix("sample:")
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(|| Error::validation("kind", format!("expected `exact` or `sample:K`, got `{s}`")))?;
        let kind = AgentKind::SampleBased { k };
        kind.validate()?;
        Ok(kind)
    }
}

impl AgentKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AgentKind::SampleBased { k } if !(1..=10).contains(&k) => {
                Err(Error::validation("kind.k", format!("k must be in 1..=10, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub prior: BetaParams,
    pub dataset: Dataset,
    pub condition: Condition,
    pub seed: u64,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if let AgentKind::SampleBased { k } = self.kind {
            if !self.condition.format.is_sample_based() {
                return Err(Error::validation(
                    "condition.format",
                    "sample-based agents only emit sample-set formats",
                ));
            }
            if k > MAX_SAMPLES {
                return Err(Error::validation(
                    "kind.k",
                    format!("the sample formats accept at most {MAX_SAMPLES} samples"),
                ));
            }
        }
        Ok(())
    }
}

struct Encoded {
    belief: ElicitedBelief,
    flags: Vec<FitFlag>,
}

fn round_to_grid(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Five equally weighted samples at `m - a, m - a, m, m + a, m + a` with
/// `a = sd sqrt(5/4)`, which reproduce the mean and population variance.
fn encode_samples(d: &BetaParams, graphical: bool) -> Encoded {
    let m = d.mean();
    let a = d.sd() * 1.25f64.sqrt();
    let mut flags = Vec::new();
    let mut samples = vec![m - a, m - a, m, m + a, m + a];
    if samples.iter().any(|s| !(0.0..=1.0).contains(s)) {
        flags.push(FitFlag::CannotEncode);
        samples.iter_mut().for_each(|s| *s = s.clamp(0.0, 1.0));
    }
    if graphical {
        let rounded: Vec<f64> = samples.iter().map(|&s| round_to_grid(s)).collect();
        if rounded != samples {
            flags.push(FitFlag::Quantized);
        }
        samples = rounded;
    }
    Encoded {
        belief: ElicitedBelief::SampleSet(SampleSetResponse {
            samples,
            confidences: Some(vec![MAX_CONFIDENCE; 5]),
        }),
        flags,
    }
}

fn encode_mode_interval(d: &BetaParams) -> Encoded {
    let (mode, mut flags) = match d.mode() {
        Ok(m) => (m, Vec::new()),
        Err(_) => (d.mean(), vec![FitFlag::CannotEncode]),
    };
    let sp = interval_for_mode(mode)
        .map(|i| d.interval_probability(i))
        .unwrap_or(0.5);
    if sp <= 0.0 || sp >= 1.0 {
        flags.push(FitFlag::CannotEncode);
    }
    Encoded {
        belief: ElicitedBelief::ModeInterval(ModeIntervalResponse {
            mode,
            subjective_probability: sp,
        }),
        flags,
    }
}

/// Ball `i` of 100 sits at the `(i + 0.5) / 100` quantile.
fn encode_histogram(d: &BetaParams) -> Result<Encoded> {
    let mut bins = vec![0u32; HISTOGRAM_BINS];
    for i in 0..HISTOGRAM_BALLS {
        let q = d.quantile((f64::from(i) + 0.5) / f64::from(HISTOGRAM_BALLS))?;
        let bin = ((q / BIN_WIDTH) as usize).min(HISTOGRAM_BINS - 1);
        bins[bin] += 1;
    }
    Ok(Encoded {
        belief: ElicitedBelief::Histogram(HistogramResponse { bin_counts: bins }),
        flags: vec![FitFlag::Quantized],
    })
}

fn encode_exact(d: &BetaParams, format: ElicitationFormat) -> Result<Encoded> {
    Ok(match format {
        ElicitationFormat::TextSample => encode_samples(d, false),
        ElicitationFormat::GraphicalSample => encode_samples(d, true),
        ElicitationFormat::ModeInterval => encode_mode_interval(d),
        ElicitationFormat::Histogram => encode_histogram(d)?,
    })
}

/// `k` draws with confidences proportional to the density at each draw,
/// scaled so the largest is 100.
fn draw_samples(d: &BetaParams, k: usize, graphical: bool, rng: &mut ChaCha8Rng) -> Result<Encoded> {
    let dist = rand_distr::Beta::new(d.alpha(), d.beta()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut samples: Vec<f64> = (0..k).map(|_| dist.sample(rng)).collect();
    let mut flags = Vec::new();
    if graphical {
        samples.iter_mut().for_each(|s| *s = round_to_grid(*s));
        flags.push(FitFlag::Quantized);
    }
    let dens: Vec<f64> = samples.iter().map(|&s| d.pdf(s).map(|v| v.clamped(f64::MAX))).collect::<Result<_>>()?;
    let max = dens.iter().copied().fold(0.0, f64::max);
    let confidences = dens
        .iter()
        .map(|&v| {
            if max > 0.0 {
                (v / max * f64::from(MAX_CONFIDENCE)).round() as u32
            } else {
                MAX_CONFIDENCE
            }
        })
        .collect();
    Ok(Encoded {
        belief: ElicitedBelief::SampleSet(SampleSetResponse {
            samples,
            confidences: Some(confidences),
        }),
        flags,
    })
}

/// One synthetic participant. The record is unfitted; encoding losses are
/// carried as flags.
pub fn simulate_agent(spec: &AgentSpec, data: &ObservedData, id: impl Into<String>) -> Result<ParticipantRecord> {
    spec.validate()?;
    data.validate()?;
    let posterior = normative_update(&spec.prior, data);
    let mut rng = stream_rng(spec.seed, 0);
    let format = spec.condition.format;
    let (prior, post) = match spec.kind {
        AgentKind::ExactBayesian => (encode_exact(&spec.prior, format)?, encode_exact(&posterior, format)?),
        AgentKind::SampleBased { k } => {
            let graphical = format == ElicitationFormat::GraphicalSample;
            let prior = draw_samples(&spec.prior, k, graphical, &mut rng)?;
            (prior, draw_samples(&posterior, k, graphical, &mut rng)?)
        }
    };
    let (prior_response, prior_flags) = if spec.condition.elicitation {
        (Some(prior.belief), prior.flags)
    } else {
        (None, Vec::new())
    };
    let answer = AttentionAnswer::for_proportion(data.display_proportion());
    Ok(ParticipantRecord {
        id: id.into(),
        dataset: spec.dataset,
        condition: spec.condition,
        prior_response,
        posterior_response: post.belief,
        prior_fit: None,
        posterior_fit: None,
        prior_flags,
        posterior_flags: post.flags,
        view_time: rng.random_range(5.0..60.0f64),
        total_time: None,
        attention_answer: answer,
        attention_pass: Some(true),
        simulated: true,
    })
}

/// `n` agents sharing `template`; agent `i` gets seed
/// `derive_seed(template.seed, i)` and id `sim-{i:05}`.
pub fn simulate_cohort(template: &AgentSpec, data: &ObservedData, n: usize) -> Result<Vec<ParticipantRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = AgentSpec {
                seed: derive_seed(template.seed, i as u64),
                ..*template
            };
            simulate_agent(&spec, data, format!("sim-{i:05}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopsSequence {
    pub frames: Vec<f64>,
    pub frame_duration_ms: u32,
    pub source: ObservedData,
    pub seed: u64,
}

/// Frames are i.i.d. `Binomial(n, p) / n` for the data's size and proportion.
pub fn generate_hops(data: &ObservedData, frame_count: usize, seed: u64) -> Result<HopsSequence> {
    data.validate()?;
    if frame_count == 0 {
        return Err(Error::validation("frame_count", "must be at least 1"));
    }
    let n = data.total();
    let dist = Binomial::new(n, data.display_proportion()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let frames = (0..frame_count).map(|_| dist.sample(&mut rng) as f64 / n as f64).collect();
    Ok(HopsSequence {
        frames,
        frame_duration_ms: HOPS_FRAME_MS,
        source: data.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FitConfig;

    fn spec(kind: AgentKind, format: ElicitationFormat) -> AgentSpec {
        AgentSpec {
            kind,
            prior: BetaParams::new(10.0, 20.0).unwrap(),
            dataset: Dataset::TechSmall,
            condition: Condition::new(format),
            seed: 9,
        }
    }

    fn tech() -> ObservedData {
        ObservedData::new(27, 131).unwrap()
    }

    #[test]
    fn exact_mode_interval_round_trips() {
        let mut r = simulate_agent(&spec(AgentKind::ExactBayesian, ElicitationFormat::ModeInterval), &tech(), "a").unwrap();
        r.fit(&FitConfig::default(), None).unwrap();
        let prior = r.prior_fit.unwrap();
        assert!((prior.alpha() / 10.0 - 1.0).abs() < 0.01);
        assert!((prior.beta() / 20.0 - 1.0).abs() < 0.01);
        let post = r.posterior_fit.unwrap();
        assert!((post.alpha() / 37.0 - 1.0).abs() < 0.01);
        assert!((post.beta() / 151.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_text_samples_are_lossless() {
        let mut r = simulate_agent(&spec(AgentKind::ExactBayesian, ElicitationFormat::TextSample), &tech(), "a").unwrap();
        assert!(r.posterior_flags.is_empty());
        r.fit(&FitConfig::default(), None).unwrap();
        assert!((r.prior_fit.unwrap().alpha() - 10.0).abs() < 1e-9);
        assert!((r.posterior_fit.unwrap().beta() - 151.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_encoding_is_flagged() {
        let r = simulate_agent(&spec(AgentKind::ExactBayesian, ElicitationFormat::Histogram), &tech(), "a").unwrap();
        assert!(r.posterior_flags.contains(&FitFlag::Quantized));
        match &r.posterior_response {
            ElicitedBelief::Histogram(h) => assert_eq!(h.bin_counts.iter().sum::<u32>(), 100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_sample_agent_is_deviant() {
        let mut r = simulate_agent(&spec(AgentKind::SampleBased { k: 1 }, ElicitationFormat::TextSample), &tech(), "a").unwrap();
        r.fit(&FitConfig::default(), None).unwrap();
        assert!(r.posterior_flags.contains(&FitFlag::Deviant));
        assert_eq!(r.posterior_fit.unwrap(), BetaParams::uniform());
    }

    #[test]
    fn sample_agents_have_max_confidence_100() {
        let r = simulate_agent(&spec(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample), &tech(), "a").unwrap();
        let c = r.posterior_response.as_samples().unwrap().confidences.clone().unwrap();
        assert_eq!(c.iter().max(), Some(&100));
    }

    #[test]
    fn sample_agents_reject_other_formats() {
        assert!(simulate_agent(&spec(AgentKind::SampleBased { k: 3 }, ElicitationFormat::Histogram), &tech(), "a").is_err());
        assert!("sample:11".parse::<AgentKind>().is_err());
        assert_eq!("sample:4".parse::<AgentKind>().unwrap(), AgentKind::SampleBased { k: 4 });
    }

    #[test]
    fn hops_frames() {
        let a = generate_hops(&tech(), 1000, 3).unwrap();
        let b = generate_hops(&tech(), 1000, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frame_duration_ms, 400);
        let mean = a.frames.iter().sum::<f64>() / 1000.0;
        let p = 27.0 / 158.0;
        assert!((mean - p).abs() < 3.0 * (p * (1.0 - p) / 158.0 / 1000.0).sqrt());
        let ones = generate_hops(&ObservedData::new(1, 0).unwrap(), 10, 0).unwrap();
        assert!(ones.frames.iter().all(|&f| f == 1.0));
        assert!(generate_hops(&tech(), 0, 0).is_err());
    }

    #[test]
    fn cohorts_are_deterministic() {
        let s = spec(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample);
        let a = simulate_cohort(&s, &tech(), 20).unwrap();
        assert_eq!(a, simulate_cohort(&s, &tech(), 20).unwrap());
        assert_eq!(a[3].id, "sim-00003");
    }
}
