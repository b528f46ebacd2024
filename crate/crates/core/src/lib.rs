//! Elicited-belief fitting, normative Bayesian updating and deviation
//! analysis for belief-update studies of a single proportion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bayes;
pub mod beta;
pub mod dataset;
pub mod elicit;
pub mod error;
pub mod optimize;
pub mod record;
pub mod regression;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod summation;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BetaParams = beta::Beta<f64>;
pub type Interval = beta::Interval<f64>;
pub type FitConfig = elicit::FitConfig<f64>;
pub type Fit = elicit::Fit<f64>;
pub type SampleSetResponse = elicit::SampleSetResponse<f64>;
pub type ModeIntervalResponse = elicit::ModeIntervalResponse<f64>;
pub type PerceivedData = bayes::PerceivedData<f64>;

pub use bayes::{ObservedData, WeightingClass};
pub use elicit::{FitFlag, HistogramResponse};
pub use dataset::{Dataset, DatasetTable};
pub use record::{AttentionAnswer, Condition, ElicitationFormat, ElicitedBelief, ParticipantRecord, RecordFormat};
pub use report::{build_report, AnalysisOptions, AnalysisReport, ReportFilters};
