//! Harness checks that run synthetic cohorts through the pipeline.

use belief_core::analysis::{aggregate_log_kld, bootstrap_aggregate_ci, first_n_analysis, individual_log_klds, BootstrapSpec};
use belief_core::bayes::{aggregate, normative_update};
use belief_core::regression::{regress_log_kld, RegressionRow, RegressionSpec, COEFFICIENTS};
use belief_core::rng::stream_rng;
use belief_core::sim::{generate_hops, simulate_cohort, AgentKind, AgentSpec};
use belief_core::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn tech() -> ObservedData {
    ObservedData::new(27, 131).unwrap()
}

fn paper_prior() -> BetaParams {
    BetaParams::new(10.79, 18.99).unwrap()
}

fn fitted_cohort(kind: AgentKind, format: ElicitationFormat, n: usize, seed: u64) -> Vec<ParticipantRecord> {
    let spec = AgentSpec {
        kind,
        prior: paper_prior(),
        dataset: Dataset::TechSmall,
        condition: Condition::new(format),
        seed,
    };
    let mut rs = simulate_cohort(&spec, &tech(), n).unwrap();
    for r in &mut rs {
        r.fit(&FitConfig::default(), None).unwrap();
    }
    rs
}

#[test]
fn exact_cohort_is_normative_in_every_format() {
    for format in ElicitationFormat::ALL {
        let rs = fitted_cohort(AgentKind::ExactBayesian, format, 200, 1);
        let agg = aggregate_log_kld(&rs, &tech()).unwrap();
        let bound = match format {
            // Quantized formats lose information by design.
            ElicitationFormat::Histogram | ElicitationFormat::GraphicalSample => 0.5,
            _ => 1e-3,
        };
        assert!(agg.kld() < bound, "{format}: {}", agg.kld());
    }
    let rs = fitted_cohort(AgentKind::ExactBayesian, ElicitationFormat::TextSample, 200, 1);
    let ind = individual_log_klds(&rs, &tech()).unwrap();
    assert_eq!(ind.zero_count, 200);
}

#[test]
fn sample_based_posteriors_center_on_the_sampled_distribution() {
    let rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 500, 3);
    let posts: Vec<BetaParams> = rs.iter().map(|r| r.posterior_fit.unwrap()).collect();
    let target = normative_update(&paper_prior(), &tech());
    assert!((aggregate(&posts).unwrap().mean() - target.mean()).abs() < 0.01);
}

#[test]
fn moment_fits_from_few_samples_inflate_concentration() {
    // Averaging alphas and betas of small-sample moment fits overstates the
    // concentration: E[sigma^2 / v] > 1 for the sample variance v.
    let rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 500, 3);
    let priors: Vec<BetaParams> = rs.iter().map(|r| r.prior_fit.unwrap()).collect();
    let agg = aggregate(&priors).unwrap();
    assert!(agg.concentration() > 1.5 * paper_prior().concentration(), "{agg}");
}

#[test]
fn bootstrap_interval_covers_point_estimate() {
    let spec = BootstrapSpec {
        repetitions: 400,
        ..Default::default()
    };
    let mut covered = 0;
    for run in 0..50 {
        let rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 100, 1000 + run);
        let ci = bootstrap_aggregate_ci(&rs, &tech(), &BootstrapSpec { seed: run, ..spec }).unwrap();
        if ci.lo.value() <= ci.point.value() && ci.point.value() <= ci.hi.value() {
            covered += 1;
        }
    }
    assert!(covered >= 45, "covered in {covered}/50 runs");
}

#[test]
fn bootstrap_width_shrinks_with_resample_size() {
    let sizes = [25, 100, 400];
    let mut widths = [0.0; 3];
    for run in 0..30 {
        let rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 200, 2000 + run);
        for (i, &size) in sizes.iter().enumerate() {
            let spec = BootstrapSpec {
                resample_size: size,
                repetitions: 200,
                level: 0.95,
                seed: run,
            };
            let ci = bootstrap_aggregate_ci(&rs, &tech(), &spec).unwrap();
            widths[i] += (ci.hi.value() - ci.lo.value()) / 30.0;
        }
    }
    assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
}

#[test]
fn first_n_at_five_matches_the_pipeline() {
    let rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 50, 5);
    let by_n = first_n_analysis(&rs, &tech(), &[3, 4, 5], &FitConfig::default()).unwrap();
    assert_eq!(by_n[&5], aggregate_log_kld(&rs, &tech()).unwrap());
    assert_eq!(by_n.len(), 3);
}

#[test]
fn first_n_constant_samples_are_deviant_for_every_n() {
    let mut rs = fitted_cohort(AgentKind::SampleBased { k: 5 }, ElicitationFormat::TextSample, 5, 6);
    for r in &mut rs {
        let flat = ElicitedBelief::SampleSet(SampleSetResponse::new(vec![0.3; 5], vec![50; 5]).unwrap());
        r.prior_response = Some(flat.clone());
        r.posterior_response = flat;
        r.fit(&FitConfig::default(), None).unwrap();
    }
    let by_n = first_n_analysis(&rs, &tech(), &[1, 3, 4, 5], &FitConfig::default()).unwrap();
    let v: Vec<_> = by_n.values().collect();
    assert!(v.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn first_n_prefers_early_samples_when_later_ones_are_noise() {
    // Three samples at the mean and one sd either side, then two uniform
    // draws.
    let mut rng = stream_rng(77, 0);
    let sample_set = |d: &BetaParams, rng: &mut rand_chacha::ChaCha8Rng| {
        let m = d.mean();
        let a = d.sd() * 1.5f64.sqrt();
        SampleSetResponse::new(vec![m - a, m, m + a, rng.random(), rng.random()], vec![100; 5]).unwrap()
    };
    let mut rs = fitted_cohort(AgentKind::ExactBayesian, ElicitationFormat::TextSample, 100, 7);
    for r in &mut rs {
        let post = normative_update(&paper_prior(), &tech());
        r.prior_response = Some(ElicitedBelief::SampleSet(sample_set(&paper_prior(), &mut rng)));
        r.posterior_response = ElicitedBelief::SampleSet(sample_set(&post, &mut rng));
        r.prior_flags.clear();
        r.posterior_flags.clear();
        r.fit(&FitConfig::default(), None).unwrap();
    }
    let by_n = first_n_analysis(&rs, &tech(), &[3, 5], &FitConfig::default()).unwrap();
    assert!(by_n[&3].value() < by_n[&5].value(), "{by_n:?}");
    // Population variance of (m - a, m, m + a) is sd^2, so n = 3 is exact.
    assert!(by_n[&3].kld() < 1e-6);
}

fn study3_rows(seed: u64, beta: [f64; 5], sigma: f64) -> Vec<RegressionRow> {
    let mut rng = stream_rng(seed, 99);
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..400)
        .map(|i| {
            let uncertainty = i % 2 == 0;
            let elicitation = (i / 2) % 2 == 0;
            let dataset = (i / 4) % 2 == 0;
            let time: f64 = rng.random_range(10.0..90.0);
            let x = [1.0, uncertainty as u8 as f64, elicitation as u8 as f64, dataset as u8 as f64, time - 50.0];
            let mean: f64 = x.iter().zip(beta).map(|(x, b)| x * b).sum();
            RegressionRow {
                log_kld: mean + noise.sample(&mut rng),
                uncertainty,
                elicitation,
                dataset,
                time,
            }
        })
        .collect()
}

/// True coefficients on the centered scale; the time slope is unaffected by
/// centering but the intercept absorbs the sample's mean time.
fn true_coefficients(rows: &[RegressionRow], beta: [f64; 5]) -> [f64; 5] {
    let tbar = rows.iter().map(|r| r.time).sum::<f64>() / rows.len() as f64;
    [beta[0] + beta[4] * (tbar - 50.0), beta[1], beta[2], beta[3], beta[4]]
}

#[test]
fn regression_recovers_truth_in_repeated_runs() {
    let beta = [-1.0, -0.15, 0.2, -0.1, 0.005];
    let mut good = 0;
    for run in 0..40 {
        let rows = study3_rows(run, beta, 0.5);
        let spec = RegressionSpec {
            seed: run,
            ..Default::default()
        };
        let fit = regress_log_kld(&rows, &spec).unwrap();
        let truth = true_coefficients(&rows, beta);
        let ok = COEFFICIENTS
            .iter()
            .zip(truth)
            .all(|(name, t)| {
                let c = fit.coefficient(name).unwrap();
                (c.mean - t).abs() <= 3.0 * c.sd
            });
        if ok {
            good += 1;
        }
    }
    assert!(good >= 38, "{good}/40 runs recovered every coefficient");
}

#[test]
fn regression_null_model_covers_zero() {
    let rows = study3_rows(500, [0.0; 5], 1.0);
    let fit = regress_log_kld(&rows, &RegressionSpec { seed: 500, ..Default::default() }).unwrap();
    assert!(fit.converged);
    for c in &fit.coefficients {
        assert!(c.covers(0.0), "{c:?}");
    }
}

#[test]
fn regression_is_monte_carlo_consistent() {
    let rows = study3_rows(8, [-1.0, -0.15, 0.2, -0.1, 0.005], 0.5);
    let base = RegressionSpec { seed: 8, ..Default::default() };
    let a = regress_log_kld(&rows, &base).unwrap();
    let b = regress_log_kld(&rows, &RegressionSpec { iterations: base.warmup + 2 * (base.iterations - base.warmup), ..base }).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x.mean - y.mean).abs() < 2.0 * x.mcse, "{}: {} vs {} (mcse {})", x.name, x.mean, y.mean, x.mcse);
    }
    assert_eq!(a, regress_log_kld(&rows, &base).unwrap());
}

#[test]
fn hops_variance_scales_inversely_with_n() {
    let small = ObservedData::new(27, 131).unwrap();
    let large = Dataset::ElderlyLarge.default_data();
    let var = |d: &ObservedData| {
        let f = generate_hops(d, 10_000, 5).unwrap().frames;
        let m = f.iter().sum::<f64>() / f.len() as f64;
        f.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (f.len() - 1) as f64
    };
    let p_s = small.display_proportion();
    let p_l = large.display_proportion();
    // Normalize by p (1 - p) so only the 1 / n dependence remains.
    let ratio = (var(&small) / (p_s * (1.0 - p_s))) / (var(&large) / (p_l * (1.0 - p_l)));
    let n_ratio = large.total() as f64 / small.total() as f64;
    assert!((ratio / n_ratio - 1.0).abs() < 0.2, "{ratio} vs {n_ratio}");
}
