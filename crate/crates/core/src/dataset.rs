//! The study datasets and their default observed counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::ObservedData;
use crate::error::{Error, Result};
use crate::BetaParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    /// Mental health in tech survey, N = 158.
    TechSmall,
    /// Dementia among assisted-living residents, N = 750,000.
    ElderlyLarge,
    /// Tech proportion presented as a large survey, N = 720,000.
    TechLarge,
    /// Elderly proportion presented as a small study, N = 150.
    ElderlySmall,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [
        Dataset::TechSmall,
        Dataset::ElderlyLarge,
        Dataset::TechLarge,
        Dataset::ElderlySmall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::TechSmall => "tech_small",
            Dataset::ElderlyLarge => "elderly_large",
            Dataset::TechLarge => "tech_large",
            Dataset::ElderlySmall => "elderly_small",
        }
    }

    /// Indicator used as the dataset covariate in regressions (elderly = 1).
    pub fn is_elderly(self) -> bool {
        matches!(self, Dataset::ElderlyLarge | Dataset::ElderlySmall)
    }

    pub fn default_data(self) -> ObservedData {
        let (s, f, label, icon_unit) = match self {
            Dataset::TechSmall => (27, 131, "women in tech whose work is often affected by mental health", 1),
            Dataset::ElderlyLarge => (315_000, 435_000, "assisted-living residents with dementia", 600),
            Dataset::TechLarge => (122_400, 597_600, "women in tech whose work is often affected by mental health", 600),
            Dataset::ElderlySmall => (63, 87, "assisted-living residents with dementia", 1),
        };
        ObservedData {
            successes: s,
            failures: f,
            label: label.to_string(),
            icon_unit,
        }
    }

    /// Aggregate prior used for participants whose prior was not elicited.
    pub fn default_reference_prior(self) -> BetaParams {
        if self.is_elderly() {
            BetaParams::new(31.25, 39.59).unwrap()
        } else {
            BetaParams::new(10.79, 18.99).unwrap()
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Dataset::ALL
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| Error::validation("dataset", format!("unknown dataset `{s}`")))
    }
}

/// Observed data and reference prior for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub data: ObservedData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_prior: Option<BetaParams>,
}

/// Lookup from dataset to its observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTable(pub BTreeMap<Dataset, DatasetInfo>);

impl Default for DatasetTable {
    fn default() -> Self {
        DatasetTable(
            Dataset::ALL
                .into_iter()
                .map(|d| {
                    (
                        d,
                        DatasetInfo {
                            data: d.default_data(),
                            reference_prior: Some(d.default_reference_prior()),
                        },
                    )
                })
                .collect(),
        )
    }
}

impl DatasetTable {
    pub fn get(&self, dataset: Dataset) -> Result<&DatasetInfo> {
        self.0
            .get(&dataset)
            .ok_or_else(|| Error::validation("dataset", format!("no observed data configured for `{dataset}`")))
    }

    pub fn data(&self, dataset: Dataset) -> Result<&ObservedData> {
        self.get(dataset).map(|i| &i.data)
    }

    pub fn set_data(&mut self, dataset: Dataset, data: ObservedData) {
        let reference_prior = self.0.get(&dataset).and_then(|i| i.reference_prior);
        self.0.insert(dataset, DatasetInfo { data, reference_prior });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_spellings() {
        assert_eq!("tech-small".parse::<Dataset>().unwrap(), Dataset::TechSmall);
        assert_eq!("ELDERLY_LARGE".parse::<Dataset>().unwrap(), Dataset::ElderlyLarge);
        assert!("tech".parse::<Dataset>().is_err());
    }

    #[test]
    fn default_sizes() {
        assert_eq!(Dataset::TechSmall.default_data().total(), 158);
        assert_eq!(Dataset::ElderlyLarge.default_data().total(), 750_000);
        assert_eq!(Dataset::TechLarge.default_data().total(), 720_000);
        assert_eq!(Dataset::ElderlySmall.default_data().total(), 150);
        assert!((Dataset::TechSmall.default_data().display_proportion() - 0.1709).abs() < 1e-4);
    }
}
