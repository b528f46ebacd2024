//! Participant records and their JSON-lines / CSV interchange formats.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::elicit::{self, FitFlag};
use crate::error::{Error, Result};
use crate::{BetaParams, Fit, FitConfig, HistogramResponse, ModeIntervalResponse, SampleSetResponse};

/// The four elicitation interfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElicitationFormat {
    /// Samples picked on an icon grid, quantized to 0.01.
    GraphicalSample,
    /// Samples typed as percentages.
    TextSample,
    ModeInterval,
    Histogram,
}

impl ElicitationFormat {
    pub const ALL: [ElicitationFormat; 4] = [
        ElicitationFormat::GraphicalSample,
        ElicitationFormat::TextSample,
        ElicitationFormat::ModeInterval,
        ElicitationFormat::Histogram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElicitationFormat::GraphicalSample => "graphical_sample",
            ElicitationFormat::TextSample => "text_sample",
            ElicitationFormat::ModeInterval => "mode_interval",
            ElicitationFormat::Histogram => "histogram",
        }
    }

    pub fn is_sample_based(self) -> bool {
        matches!(self, ElicitationFormat::GraphicalSample | ElicitationFormat::TextSample)
    }
}

impl fmt::Display for ElicitationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElicitationFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match norm.as_str() {
            "graphical" => "graphical_sample",
            "text" => "text_sample",
            "balls_and_bins" => "histogram",
            other => other,
        };
        ElicitationFormat::ALL
            .into_iter()
            .find(|f| f.as_str() == alias)
            .ok_or_else(|| Error::validation("format", format!("unknown elicitation format `{s}`")))
    }
}

/// Elicitation format x uncertainty display x prior elicitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub format: ElicitationFormat,
    /// The stimulus shows sampling uncertainty (animated outcomes).
    #[serde(default)]
    pub uncertainty: bool,
    /// The prior is elicited before the stimulus.
    #[serde(default = "yes")]
    pub elicitation: bool,
}

fn yes() -> bool {
    true
}

impl Condition {
    pub fn new(format: ElicitationFormat) -> Self {
        Self {
            format,
            uncertainty: false,
            elicitation: true,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.format,
            if self.uncertainty { "uncertainty" } else { "no_uncertainty" },
            if self.elicitation { "elicitation" } else { "no_elicitation" }
        )
    }
}

/// One raw belief response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElicitedBelief {
    SampleSet(SampleSetResponse),
    ModeInterval(ModeIntervalResponse),
    Histogram(HistogramResponse),
}

impl ElicitedBelief {
    pub fn kind(&self) -> &'static str {
        match self {
            ElicitedBelief::SampleSet(_) => "sample_set",
            ElicitedBelief::ModeInterval(_) => "mode_interval",
            ElicitedBelief::Histogram(_) => "histogram",
        }
    }

    /// Validates the payload and checks that it is the kind `format` emits.
    pub fn validate_for(&self, format: ElicitationFormat) -> Result<()> {
        match (self, format) {
            (ElicitedBelief::SampleSet(r), ElicitationFormat::GraphicalSample) => {
                r.validate()?;
                for (i, s) in r.samples.iter().enumerate() {
                    if ((s * 100.0).round() - s * 100.0).abs() > 1e-9 {
                        return Err(Error::validation(
                            format!("samples[{i}]"),
                            format!("{s} is not on the 0.01 grid of the icon array"),
                        ));
                    }
                }
                Ok(())
            }
            (ElicitedBelief::SampleSet(r), ElicitationFormat::TextSample) => r.validate(),
            (ElicitedBelief::ModeInterval(r), ElicitationFormat::ModeInterval) => r.validate(),
            (ElicitedBelief::Histogram(r), ElicitationFormat::Histogram) => r.validate(),
            (b, f) => Err(Error::validation(
                "kind",
                format!("a `{}` response does not belong to the `{f}` format", b.kind()),
            )),
        }
    }

    pub fn fit(&self, cfg: &FitConfig) -> Result<Fit> {
        match self {
            ElicitedBelief::SampleSet(r) => elicit::fit_from_samples(r, cfg),
            ElicitedBelief::ModeInterval(r) => elicit::fit_from_mode_interval(r, cfg),
            ElicitedBelief::Histogram(r) => elicit::fit_from_histogram(r, cfg),
        }
    }

    pub fn as_samples(&self) -> Option<&SampleSetResponse> {
        match self {
            ElicitedBelief::SampleSet(r) => Some(r),
            _ => None,
        }
    }
}

/// Answer to the attention check on the observed proportion's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttentionAnswer {
    #[serde(rename = "r0_30")]
    R0_30,
    #[serde(rename = "r30_60")]
    R30_60,
    #[serde(rename = "r60_100")]
    R60_100,
}

impl AttentionAnswer {
    /// The range containing proportion `p`; boundaries belong to the upper range.
    pub fn for_proportion(p: f64) -> Self {
        if p < 0.3 {
            AttentionAnswer::R0_30
        } else if p < 0.6 {
            AttentionAnswer::R30_60
        } else {
            AttentionAnswer::R60_100
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionAnswer::R0_30 => "r0_30",
            AttentionAnswer::R30_60 => "r30_60",
            AttentionAnswer::R60_100 => "r60_100",
        }
    }
}

impl FromStr for AttentionAnswer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "r0_30" => Ok(AttentionAnswer::R0_30),
            "r30_60" => Ok(AttentionAnswer::R30_60),
            "r60_100" => Ok(AttentionAnswer::R60_100),
            other => Err(Error::validation("attention_answer", format!("unknown range `{other}`"))),
        }
    }
}

/// One participant's responses, fits and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub dataset: Dataset,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_response: Option<ElicitedBelief>,
    pub posterior_response: ElicitedBelief,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_fit: Option<BetaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior_fit: Option<BetaParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_flags: Vec<FitFlag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posterior_flags: Vec<FitFlag>,
    /// Seconds spent on the stimulus.
    pub view_time: f64,
    /// Seconds from session start to completion, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    pub attention_answer: AttentionAnswer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_pass: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub simulated: bool,
}

impl ParticipantRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        match (&self.prior_response, self.condition.elicitation) {
            (Some(p), true) => p
                .validate_for(self.condition.format)
                .map_err(|e| prefix("prior_response", e))?,
            (None, false) => {}
            (None, true) => return Err(Error::validation("prior_response", "required by the elicitation condition")),
            (Some(_), false) => {
                return Err(Error::validation("prior_response", "not allowed in a no-elicitation condition"))
            }
        }
        self.posterior_response
            .validate_for(self.condition.format)
            .map_err(|e| prefix("posterior_response", e))?;
        if !(self.view_time.is_finite() && self.view_time >= 0.0) {
            return Err(Error::validation("view_time", "must be a nonnegative number of seconds"));
        }
        if let Some(t) = self.total_time {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::validation("total_time", "must be a nonnegative number of seconds"));
            }
        }
        Ok(())
    }

    /// Fits both responses. Without an elicited prior, `reference_prior` is
    /// used and flagged.
    /// Encoding flags already on the record (set by the simulator) are kept.
    pub fn fit(&mut self, cfg: &FitConfig, reference_prior: Option<BetaParams>) -> Result<()> {
        match &self.prior_response {
            Some(p) => {
                let fit = p.fit(cfg)?;
                self.prior_fit = Some(fit.params);
                self.prior_flags = merge_flags(&self.prior_flags, fit.flags);
            }
            None => {
                let prior = reference_prior.ok_or_else(|| Error::MissingFit {
                    id: self.id.clone(),
                    which: "reference prior",
                })?;
                self.prior_fit = Some(prior);
                self.prior_flags = vec![FitFlag::ReferencePrior];
            }
        }
        let fit = self.posterior_response.fit(cfg)?;
        self.posterior_fit = Some(fit.params);
        self.posterior_flags = merge_flags(&self.posterior_flags, fit.flags);
        Ok(())
    }

    pub fn fits(&self) -> Result<(BetaParams, BetaParams)> {
        let prior = self.prior_fit.ok_or_else(|| Error::MissingFit {
            id: self.id.clone(),
            which: "prior",
        })?;
        let posterior = self.posterior_fit.ok_or_else(|| Error::MissingFit {
            id: self.id.clone(),
            which: "posterior",
        })?;
        Ok((prior, posterior))
    }
}

fn merge_flags(existing: &[FitFlag], fitted: Vec<FitFlag>) -> Vec<FitFlag> {
    let mut flags: Vec<FitFlag> = existing
        .iter()
        .copied()
        .filter(|f| matches!(f, FitFlag::Quantized | FitFlag::CannotEncode))
        .chain(fitted)
        .collect();
    flags.sort();
    flags.dedup();
    flags
}

fn prefix(path: &str, e: Error) -> Error {
    match e {
        Error::Validation { field, reason } => Error::Validation {
            field: format!("{path}.{field}"),
            reason,
        },
        other => Error::Validation {
            field: path.to_string(),
            reason: other.to_string(),
        },
    }
}

/// Record interchange formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    /// Guesses the format from a file name; JSON lines unless it ends in `.csv`.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(RecordFormat::Jsonl),
            "csv" => Ok(RecordFormat::Csv),
            other => Err(Error::validation("format", format!("unknown record format `{other}`"))),
        }
    }
}

/// A record that failed to parse or validate, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub error: Error,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

/// Parses and validates every record, keeping per-line outcomes.
pub fn read_records<R: BufRead>(reader: R, format: RecordFormat) -> Result<Vec<(usize, Result<ParticipantRecord>)>> {
    match format {
        RecordFormat::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::Io(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<ParticipantRecord>(&line)
                    .map_err(|e| Error::validation("record", e.to_string()))
                    .and_then(|r| r.validate().map(|_| r));
                out.push((i + 1, parsed));
            }
            Ok(out)
        }
        RecordFormat::Csv => csv_io::read(reader),
    }
}

pub fn write_records<W: Write>(writer: W, format: RecordFormat, records: &[ParticipantRecord]) -> Result<()> {
    match format {
        RecordFormat::Jsonl => {
            let mut w = writer;
            for r in records {
                serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::Io(e.to_string()))
        }
        RecordFormat::Csv => csv_io::write(writer, records),
    }
}

/// Flat CSV layout. Lists are `;`-separated inside a cell and floats use the
/// shortest representation that round-trips.
pub mod csv_io {
    use super::*;

    pub const COLUMNS: [&str; 28] = [
        "id",
        "simulated",
        "dataset",
        "format",
        "uncertainty",
        "elicitation",
        "prior_kind",
        "prior_samples",
        "prior_confidences",
        "prior_mode",
        "prior_probability",
        "prior_bins",
        "posterior_kind",
        "posterior_samples",
        "posterior_confidences",
        "posterior_mode",
        "posterior_probability",
        "posterior_bins",
        "prior_alpha",
        "prior_beta",
        "prior_flags",
        "posterior_alpha",
        "posterior_beta",
        "posterior_flags",
        "view_time",
        "total_time",
        "attention_answer",
        "attention_pass",
    ];

    fn join<I: IntoIterator<Item = D>, D: ToString>(items: I) -> String {
        items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
    }

    fn opt<D: ToString>(x: Option<D>) -> String {
        x.map(|v| v.to_string()).unwrap_or_default()
    }

    fn flag_str(flag: FitFlag) -> String {
        serde_json::to_value(flag)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    fn belief_cells(b: Option<&ElicitedBelief>) -> [String; 6] {
        match b {
            None => Default::default(),
            Some(ElicitedBelief::SampleSet(r)) => [
                "sample_set".into(),
                join(&r.samples),
                r.confidences.as_ref().map(join).unwrap_or_default(),
                String::new(),
                String::new(),
                String::new(),
            ],
            Some(ElicitedBelief::ModeInterval(r)) => [
                "mode_interval".into(),
                String::new(),
                String::new(),
                r.mode.to_string(),
                r.subjective_probability.to_string(),
                String::new(),
            ],
            Some(ElicitedBelief::Histogram(r)) => [
                "histogram".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                join(&r.bin_counts),
            ],
        }
    }

    pub fn row(r: &ParticipantRecord) -> Vec<String> {
        let mut cells = vec![
            r.id.clone(),
            r.simulated.to_string(),
            r.dataset.as_str().to_string(),
            r.condition.format.as_str().to_string(),
            r.condition.uncertainty.to_string(),
            r.condition.elicitation.to_string(),
        ];
        cells.extend(belief_cells(r.prior_response.as_ref()));
        cells.extend(belief_cells(Some(&r.posterior_response)));
        cells.extend([
            opt(r.prior_fit.map(|b| b.alpha())),
            opt(r.prior_fit.map(|b| b.beta())),
            join(r.prior_flags.iter().map(|f| flag_str(*f))),
            opt(r.posterior_fit.map(|b| b.alpha())),
            opt(r.posterior_fit.map(|b| b.beta())),
            join(r.posterior_flags.iter().map(|f| flag_str(*f))),
            r.view_time.to_string(),
            opt(r.total_time),
            r.attention_answer.as_str().to_string(),
            opt(r.attention_pass),
        ]);
        cells
    }

    pub fn write<W: Write>(writer: W, records: &[ParticipantRecord]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(COLUMNS).map_err(io)?;
        for r in records {
            w.write_record(row(r)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    fn cell<'a>(rec: &'a csv::StringRecord, name: &str) -> &'a str {
        let idx = COLUMNS.iter().position(|c| *c == name).expect("known column");
        rec.get(idx).unwrap_or("")
    }

    fn parse<T: FromStr>(rec: &csv::StringRecord, name: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = cell(rec, name);
        raw.trim()
            .parse::<T>()
            .map_err(|e| Error::validation(name, format!("cannot parse `{raw}`: {e}")))
    }

    fn parse_opt<T: FromStr>(rec: &csv::StringRecord, name: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if cell(rec, name).trim().is_empty() {
            Ok(None)
        } else {
            parse(rec, name).map(Some)
        }
    }

    fn parse_list<T: FromStr>(rec: &csv::StringRecord, name: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let raw = cell(rec, name).trim();
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(';')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|e| Error::validation(name, format!("cannot parse `{s}`: {e}")))
            })
            .collect()
    }

    fn parse_flags(rec: &csv::StringRecord, name: &str) -> Result<Vec<FitFlag>> {
        let raw = cell(rec, name).trim();
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(';')
            .map(|s| {
                serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
                    .map_err(|_| Error::validation(name, format!("unknown flag `{s}`")))
            })
            .collect()
    }

    fn parse_belief(rec: &csv::StringRecord, side: &str) -> Result<Option<ElicitedBelief>> {
        let col = |suffix: &str| format!("{side}_{suffix}");
        let kind = cell(rec, &col("kind")).trim().to_string();
        Ok(match kind.as_str() {
            "" => None,
            "sample_set" => {
                let samples = parse_list::<f64>(rec, &col("samples"))?;
                let conf_raw = cell(rec, &col("confidences")).trim();
                let confidences = if conf_raw.is_empty() {
                    None
                } else {
                    Some(parse_list::<u32>(rec, &col("confidences"))?)
                };
                Some(ElicitedBelief::SampleSet(SampleSetResponse { samples, confidences }))
            }
            "mode_interval" => Some(ElicitedBelief::ModeInterval(ModeIntervalResponse {
                mode: parse(rec, &col("mode"))?,
                subjective_probability: parse(rec, &col("probability"))?,
            })),
            "histogram" => Some(ElicitedBelief::Histogram(HistogramResponse {
                bin_counts: parse_list(rec, &col("bins"))?,
            })),
            other => return Err(Error::validation(col("kind"), format!("unknown response kind `{other}`"))),
        })
    }

    fn fit_cells(rec: &csv::StringRecord, side: &str) -> Result<Option<BetaParams>> {
        let a: Option<f64> = parse_opt(rec, &format!("{side}_alpha"))?;
        let b: Option<f64> = parse_opt(rec, &format!("{side}_beta"))?;
        match (a, b) {
            (None, None) => Ok(None),
            (Some(a), Some(b)) => BetaParams::new(a, b).map(Some),
            _ => Err(Error::validation(format!("{side}_alpha"), "alpha and beta must both be present")),
        }
    }

    pub fn from_row(rec: &csv::StringRecord) -> Result<ParticipantRecord> {
        let record = ParticipantRecord {
            id: cell(rec, "id").to_string(),
            simulated: parse_opt(rec, "simulated")?.unwrap_or(false),
            dataset: parse(rec, "dataset")?,
            condition: Condition {
                format: parse(rec, "format")?,
                uncertainty: parse(rec, "uncertainty")?,
                elicitation: parse(rec, "elicitation")?,
            },
            prior_response: parse_belief(rec, "prior")?,
            posterior_response: parse_belief(rec, "posterior")?
                .ok_or_else(|| Error::validation("posterior_kind", "posterior response is required"))?,
            prior_fit: fit_cells(rec, "prior")?,
            posterior_fit: fit_cells(rec, "posterior")?,
            prior_flags: parse_flags(rec, "prior_flags")?,
            posterior_flags: parse_flags(rec, "posterior_flags")?,
            view_time: parse(rec, "view_time")?,
            total_time: parse_opt(rec, "total_time")?,
            attention_answer: parse(rec, "attention_answer")?,
            attention_pass: parse_opt(rec, "attention_pass")?,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Vec<(usize, Result<ParticipantRecord>)>> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
        if !headers.is_empty() && headers.iter().ne(COLUMNS.iter().copied()) {
            return Err(Error::validation(
                "header",
                format!("expected columns `{}`", COLUMNS.join(",")),
            ));
        }
        let mut out = Vec::new();
        for rec in rdr.records() {
            match rec {
                Ok(rec) => {
                    let line = rec.position().map_or(0, |p| p.line() as usize);
                    let parsed = if rec.len() != COLUMNS.len() {
                        Err(Error::validation("row", format!("expected {} cells, got {}", COLUMNS.len(), rec.len())))
                    } else {
                        from_row(&rec)
                    };
                    out.push((line, parsed));
                }
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    out.push((line, Err(Error::validation("row", e.to_string()))));
                }
            }
        }
        Ok(out)
    }
}
