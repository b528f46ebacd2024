//! The analysis report shared by the command line and the service.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_log_kld_of_fits, bootstrap_aggregate_ci, first_n_analysis, individual_log_klds, log_kld_of,
    BootstrapInterval, BootstrapSpec, LogKld, DEFAULT_FIRST_N,
};
use crate::bayes::{aggregate, classify_weighting, normative_update, perceived_data, residuals, Residuals, DEFAULT_ALIGNMENT_TOL};
use crate::dataset::{Dataset, DatasetTable};
use crate::elicit::FitFlag;
use crate::error::Result;
use crate::record::{AttentionAnswer, Condition, ElicitationFormat, ParticipantRecord};
use crate::regression::{regress_log_kld, RegressionResult, RegressionRow, RegressionSpec};
use crate::rng::derive_seed;
use crate::{BetaParams, FitConfig, PerceivedData, WeightingClass};

/// A statistic, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Stat<T> {
    Ok(T),
    InsufficientData(String),
}

impl<T> Stat<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Stat::Ok(v) => Some(v),
            Stat::InsufficientData(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub fit: FitConfig,
    pub alignment_tol: f64,
    pub bootstrap: Option<BootstrapSpec>,
    pub first_n: Option<Vec<usize>>,
    pub regression: Option<RegressionSpec>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            alignment_tol: DEFAULT_ALIGNMENT_TOL,
            bootstrap: None,
            first_n: None,
            regression: None,
        }
    }
}

impl AnalysisOptions {
    pub fn with_default_first_n(mut self) -> Self {
        self.first_n = Some(DEFAULT_FIRST_N.to_vec());
        self
    }

    /// Seeds every randomized statistic that is switched on.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(b) = &mut self.bootstrap {
            b.seed = seed;
        }
        if let Some(r) = &mut self.regression {
            r.seed = seed;
        }
        self
    }
}

/// Record filters. Unset fields match everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportFilters {
    pub dataset: Option<Dataset>,
    pub format: Option<ElicitationFormat>,
    pub uncertainty: Option<bool>,
    pub elicitation: Option<bool>,
    /// Defaults to keeping only records that passed the attention check.
    pub attention_pass: Option<bool>,
}

impl Default for ReportFilters {
    fn default() -> Self {
        Self {
            dataset: None,
            format: None,
            uncertainty: None,
            elicitation: None,
            attention_pass: Some(true),
        }
    }
}

impl ReportFilters {
    pub fn all() -> Self {
        Self {
            attention_pass: None,
            ..Default::default()
        }
    }

    fn matches(&self, r: &ParticipantRecord, passed: bool) -> bool {
        self.dataset.is_none_or(|d| d == r.dataset)
            && self.format.is_none_or(|f| f == r.condition.format)
            && self.uncertainty.is_none_or(|u| u == r.condition.uncertainty)
            && self.elicitation.is_none_or(|e| e == r.condition.elicitation)
            && self.attention_pass.is_none_or(|a| a == passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordAnalysis {
    pub id: String,
    pub dataset: Dataset,
    pub condition: Condition,
    pub prior: BetaParams,
    pub posterior: BetaParams,
    pub normative_posterior: BetaParams,
    pub log_kld: LogKld,
    /// Absent when a mode is undefined (a parameter at or below 1).
    pub weighting: Option<WeightingClass>,
    pub residuals: Residuals<f64>,
    pub perceived: PerceivedData,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_flags: Vec<FitFlag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posterior_flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub zero_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub dataset: Dataset,
    pub condition: Condition,
    pub n: usize,
    pub aggregate_prior: BetaParams,
    pub aggregate_posterior: BetaParams,
    pub normative_aggregate_posterior: BetaParams,
    pub individual_log_kld: IndividualSummary,
    pub aggregate_log_kld: LogKld,
    /// Non-log aggregate KLD.
    pub aggregate_kld: f64,
    pub weighting_counts: BTreeMap<WeightingClass, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Stat<BootstrapInterval>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_n: Option<BTreeMap<usize, LogKld>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub options: AnalysisOptions,
    pub filters: ReportFilters,
    /// Records remaining after filtering.
    pub record_count: usize,
    pub excluded_count: usize,
    pub records: Vec<RecordAnalysis>,
    pub groups: Stat<Vec<GroupAnalysis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<Stat<RegressionResult>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Whether the record's attention answer matches the data's range. A stored
/// verdict takes precedence.
pub fn attention_passed(r: &ParticipantRecord, table: &DatasetTable) -> bool {
    r.attention_pass.unwrap_or_else(|| {
        table
            .data(r.dataset)
            .map(|d| AttentionAnswer::for_proportion(d.display_proportion()) == r.attention_answer)
            .unwrap_or(false)
    })
}

/// Stable stream index for a (dataset, condition) group.
fn group_stream(dataset: Dataset, c: &Condition) -> u64 {
    let d = Dataset::ALL.iter().position(|x| *x == dataset).unwrap() as u64;
    let f = ElicitationFormat::ALL.iter().position(|x| *x == c.format).unwrap() as u64;
    ((d * 4 + f) * 2 + u64::from(c.uncertainty)) * 2 + u64::from(c.elicitation)
}

pub fn build_report(
    records: &[ParticipantRecord],
    table: &DatasetTable,
    options: &AnalysisOptions,
    filters: &ReportFilters,
) -> Result<AnalysisReport> {
    options.fit.validate()?;
    if let Some(b) = &options.bootstrap {
        b.validate()?;
    }
    if let Some(r) = &options.regression {
        r.validate()?;
    }
    let mut warnings = Vec::new();
    let mut kept: Vec<&ParticipantRecord> = Vec::new();
    let mut excluded = 0;
    for r in records {
        if !filters.matches(r, attention_passed(r, table)) {
            excluded += 1;
        } else if r.fits().is_err() {
            excluded += 1;
            warnings.push(format!("record `{}` has no fits and was skipped", r.id));
        } else if table.get(r.dataset).is_err() {
            excluded += 1;
            warnings.push(format!("record `{}` uses unconfigured dataset `{}`", r.id, r.dataset));
        } else {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));

    let mut per_record = Vec::with_capacity(kept.len());
    for r in &kept {
        let data = table.data(r.dataset)?;
        let (prior, posterior) = r.fits()?;
        let normative = normative_update(&prior, data);
        per_record.push(RecordAnalysis {
            id: r.id.clone(),
            dataset: r.dataset,
            condition: r.condition,
            prior,
            posterior,
            normative_posterior: normative,
            log_kld: log_kld_of(&prior, &posterior, data),
            weighting: classify_weighting(&prior, data, &posterior, options.alignment_tol).ok(),
            residuals: residuals(&posterior, &normative),
            perceived: perceived_data(&prior, &posterior),
            prior_flags: r.prior_flags.clone(),
            posterior_flags: r.posterior_flags.clone(),
        });
    }

    let mut grouped: BTreeMap<(Dataset, Condition), Vec<ParticipantRecord>> = BTreeMap::new();
    for r in &kept {
        grouped.entry((r.dataset, r.condition)).or_default().push((*r).clone());
    }

    let groups = if grouped.is_empty() {
        Stat::InsufficientData("no records match the filters".into())
    } else {
        let mut out = Vec::new();
        for ((dataset, condition), rs) in &grouped {
            let data = table.data(*dataset)?;
            let fits: Vec<(BetaParams, BetaParams)> = rs.iter().map(|r| r.fits()).collect::<Result<_>>()?;
            let agg_prior = aggregate(&fits.iter().map(|f| f.0).collect::<Vec<_>>())?;
            let agg_post = aggregate(&fits.iter().map(|f| f.1).collect::<Vec<_>>())?;
            let ind = individual_log_klds(rs, data)?;
            let agg = aggregate_log_kld_of_fits(&fits, data)?;
            let mut weighting_counts = BTreeMap::new();
            for ra in per_record.iter().filter(|ra| ra.dataset == *dataset && ra.condition == *condition) {
                if let Some(w) = ra.weighting {
                    *weighting_counts.entry(w).or_insert(0) += 1;
                }
            }
            let bootstrap = options.bootstrap.map(|spec| {
                let spec = BootstrapSpec {
                    seed: derive_seed(spec.seed, group_stream(*dataset, condition)),
                    ..spec
                };
                match bootstrap_aggregate_ci(rs, data, &spec) {
                    Ok(ci) => Stat::Ok(ci),
                    Err(e) => Stat::InsufficientData(e.to_string()),
                }
            });
            let first_n = match &options.first_n {
                Some(ns) if condition.format.is_sample_based() => Some(first_n_analysis(rs, data, ns, &options.fit)?),
                Some(_) => {
                    warnings.push(format!(
                        "first-n analysis skipped for {dataset} {condition}: responses are not sample sets"
                    ));
                    None
                }
                None => None,
            };
            out.push(GroupAnalysis {
                dataset: *dataset,
                condition: *condition,
                n: rs.len(),
                aggregate_prior: agg_prior,
                aggregate_posterior: agg_post,
                normative_aggregate_posterior: normative_update(&agg_prior, data),
                individual_log_kld: IndividualSummary {
                    mean: ind.mean,
                    sd: ind.sd,
                    zero_count: ind.zero_count,
                },
                aggregate_kld: agg.kld(),
                aggregate_log_kld: agg,
                weighting_counts,
                bootstrap,
                first_n,
            });
        }
        Stat::Ok(out)
    };

    let regression = options.regression.map(|spec| {
        let rows: Vec<RegressionRow> = kept
            .iter()
            .zip(&per_record)
            .filter(|(_, ra)| !ra.log_kld.is_zero_kld())
            .map(|(r, ra)| RegressionRow {
                log_kld: ra.log_kld.value(),
                uncertainty: r.condition.uncertainty,
                elicitation: r.condition.elicitation,
                dataset: r.dataset.is_elderly(),
                time: r.view_time,
            })
            .collect();
        let dropped = kept.len() - rows.len();
        if dropped > 0 {
            warnings.push(format!("{dropped} zero-KLD records left out of the regression"));
        }
        if rows.len() < 10 {
            return Stat::InsufficientData(format!("regression needs at least 10 records with nonzero KLD, got {}", rows.len()));
        }
        match regress_log_kld(&rows, &spec) {
            Ok(fit) => {
                if !fit.converged {
                    warnings.push("regression chains did not converge (R-hat above 1.05)".into());
                }
                if !fit.omitted.is_empty() {
                    warnings.push(format!("constant covariates omitted from the regression: {}", fit.omitted.join(", ")));
                }
                Stat::Ok(fit)
            }
            Err(e) => Stat::InsufficientData(e.to_string()),
        }
    });

    Ok(AnalysisReport {
        options: options.clone(),
        filters: filters.clone(),
        record_count: kept.len(),
        excluded_count: excluded,
        records: per_record,
        groups,
        regression,
        warnings,
    })
}

/// Canonical JSON text of a report.
pub fn report_json(report: &AnalysisReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// Plain-text summary table.
pub fn render_table(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "records analyzed: {} (excluded {})", report.record_count, report.excluded_count);
    match &report.groups {
        Stat::InsufficientData(why) => {
            let _ = writeln!(out, "insufficient data: {why}");
        }
        Stat::Ok(groups) => {
            let _ = writeln!(
                out,
                "{:<14} {:<44} {:>5} {:>10} {:>8} {:>6} {:>10} {:>10} {:>21}",
                "dataset", "condition", "n", "ind.mean", "ind.sd", "zeros", "agg.logKLD", "agg.KLD", "bootstrap 95%"
            );
            for g in groups {
                let ci = match &g.bootstrap {
                    Some(Stat::Ok(ci)) => format!("[{}, {}]", ci.lo, ci.hi),
                    Some(Stat::InsufficientData(_)) => "insufficient".into(),
                    None => "-".into(),
                };
                let _ = writeln!(
                    out,
                    "{:<14} {:<44} {:>5} {:>10} {:>8} {:>6} {:>10} {:>10.3e} {:>21}",
                    g.dataset.as_str(),
                    g.condition.to_string(),
                    g.n,
                    opt(g.individual_log_kld.mean),
                    opt(g.individual_log_kld.sd),
                    g.individual_log_kld.zero_count,
                    g.aggregate_log_kld.to_string(),
                    g.aggregate_kld,
                    ci
                );
                if let Some(first) = &g.first_n {
                    let parts: Vec<String> = first.iter().map(|(n, v)| format!("n={n}: {v}")).collect();
                    let _ = writeln!(out, "    first-n aggregate log KLD: {}", parts.join(", "));
                }
            }
        }
    }
    match &report.regression {
        Some(Stat::Ok(fit)) => {
            let _ = writeln!(out, "regression (n={}, converged={}):", fit.n, fit.converged);
            for c in fit.coefficients.iter().chain(std::iter::once(&fit.sigma)) {
                let _ = writeln!(
                    out,
                    "    {:<14} {:>8.4} [{:>8.4}, {:>8.4}] rhat {:.3}",
                    c.name, c.mean, c.lo, c.hi, c.rhat
                );
            }
        }
        Some(Stat::InsufficientData(why)) => {
            let _ = writeln!(out, "regression: insufficient data: {why}");
        }
        None => {}
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
