//! Study definitions and the analysis options derived from them.

use std::collections::BTreeSet;

use belief_core::analysis::BootstrapSpec;
use belief_core::dataset::DatasetInfo;
use belief_core::regression::RegressionSpec;
use belief_core::{AnalysisOptions, BetaParams, Condition, Dataset, DatasetTable, Error, FitConfig, ObservedData, Result};
use serde::{Deserialize, Serialize};

pub const MAX_ID_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry {
    pub rows: u32,
    pub cols: u32,
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry { rows: 10, cols: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub dataset: Dataset,
    pub data: ObservedData,
    /// Geometry of the stimulus icon array.
    #[serde(default)]
    pub grid: GridGeometry,
    /// Prior used for no-elicitation conditions. Defaults to the dataset's
    /// built-in reference prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_prior: Option<BetaParams>,
}

/// One assignable arm: a dataset shown under a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub dataset: Dataset,
    pub condition: Condition,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopsConfig {
    pub frames: usize,
}

impl Default for HopsConfig {
    fn default() -> Self {
        HopsConfig {
            frames: belief_core::sim::DEFAULT_HOPS_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub id: String,
    pub datasets: Vec<DatasetConfig>,
    pub conditions: Vec<ArmConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSpec>,
    #[serde(default)]
    pub hops: HopsConfig,
    /// Seeds assignment, HOPs frames and analyses. Filled from the server's
    /// global seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn field(prefix: &str, e: Error) -> Error {
    match e {
        Error::Validation { field, reason } => Error::Validation {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => Error::Validation {
            field: prefix.to_string(),
            reason: other.to_string(),
        },
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.len() > MAX_ID_LEN {
        return Err(invalid("id", format!("must be 1 to {MAX_ID_LEN} characters")));
    }
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(invalid("id", "may only contain ASCII letters, digits, `-` and `_`"));
    }
    Ok(())
}

impl StudyConfig {
    pub fn parse(json: &[u8]) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(json);
        let cfg: StudyConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path == "." { "config".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_id(&self.id)?;
        if self.datasets.is_empty() {
            return Err(invalid("datasets", "at least one dataset is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            d.data.validate().map_err(|e| field(&format!("datasets[{i}]"), e))?;
            if d.grid.rows == 0 || d.grid.cols == 0 {
                return Err(invalid(format!("datasets[{i}].grid"), "rows and cols must be positive"));
            }
            if !seen.insert(d.dataset) {
                return Err(invalid(format!("datasets[{i}].dataset"), format!("`{}` is defined twice", d.dataset)));
            }
        }
        if self.conditions.is_empty() {
            return Err(invalid("conditions", "at least one condition is required"));
        }
        let mut arms = BTreeSet::new();
        for (i, a) in self.conditions.iter().enumerate() {
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(invalid(format!("conditions[{i}].weight"), "must be a positive number"));
            }
            if !seen.contains(&a.dataset) {
                return Err(invalid(
                    format!("conditions[{i}].dataset"),
                    format!("`{}` is not among the study's datasets", a.dataset),
                ));
            }
            if !arms.insert((a.dataset, a.condition)) {
                return Err(invalid(format!("conditions[{i}]"), "duplicate dataset and condition"));
            }
        }
        self.fit.validate()?;
        if let Some(b) = &self.bootstrap {
            b.validate()?;
        }
        if self.hops.frames == 0 {
            return Err(invalid("hops.frames", "must be at least 1"));
        }
        Ok(())
    }

    /// The config with the seed filled in.
    pub fn resolved(mut self, global_seed: u64) -> Self {
        self.seed.get_or_insert(global_seed);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn dataset(&self, d: Dataset) -> Option<&DatasetConfig> {
        self.datasets.iter().find(|x| x.dataset == d)
    }

    pub fn dataset_table(&self) -> DatasetTable {
        DatasetTable(
            self.datasets
                .iter()
                .map(|d| {
                    let info = DatasetInfo {
                        data: d.data.clone(),
                        reference_prior: Some(d.reference_prior.unwrap_or_else(|| d.dataset.default_reference_prior())),
                    };
                    (d.dataset, info)
                })
                .collect(),
        )
    }

    /// True when the arms cross uncertainty with elicitation.
    pub fn is_factorial(&self) -> bool {
        let cells: BTreeSet<(bool, bool)> = self
            .conditions
            .iter()
            .map(|a| (a.condition.uncertainty, a.condition.elicitation))
            .collect();
        cells.len() == 4
    }
}

/// Which optional statistics an analysis computes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisRequest {
    pub bootstrap: bool,
    pub regress: bool,
    pub first_n: Option<Vec<usize>>,
    pub seed: u64,
}

impl AnalysisRequest {
    /// `bootstrap` supplies the spec when the bootstrap is on; the default
    /// spec is used otherwise.
    pub fn options(&self, fit: FitConfig, bootstrap: Option<BootstrapSpec>) -> AnalysisOptions {
        AnalysisOptions {
            fit,
            bootstrap: self.bootstrap.then(|| bootstrap.unwrap_or_default()),
            first_n: self.first_n.clone(),
            regression: self.regress.then(RegressionSpec::default),
            ..Default::default()
        }
        .with_seed(self.seed)
    }
}
