//! Session flow: prior, stimulus, posterior, attention check.

use belief_core::elicit::FitFlag;
use belief_core::rng::derive_seed;
use belief_core::sim::{generate_hops, HOPS_FRAME_MS};
use belief_core::{
    AttentionAnswer, BetaParams, Condition, Dataset, ElicitationFormat, ElicitedBelief, ParticipantRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{GridGeometry, StudyConfig};

/// Stream separating HOPs frames from other uses of the study seed.
const HOPS_STREAM: u64 = 0x484f_5053;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Prior,
    Stimulus,
    Posterior,
    Attention,
    Completed,
}

impl Step {
    pub fn first(c: &Condition) -> Step {
        if c.elicitation {
            Step::Prior
        } else {
            Step::Stimulus
        }
    }

    pub fn next(self) -> Step {
        match self {
            Step::Prior => Step::Stimulus,
            Step::Stimulus => Step::Posterior,
            Step::Posterior => Step::Attention,
            Step::Attention | Step::Completed => Step::Completed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Prior => "prior",
            Step::Stimulus => "stimulus",
            Step::Posterior => "posterior",
            Step::Attention => "attention",
            Step::Completed => "completed",
        }
    }
}

/// Body of `POST /sessions/{id}/responses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Submission {
    Prior {
        response: ElicitedBelief,
    },
    Stimulus {
        /// Client-measured dwell time in seconds. The server's own timing is
        /// used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        view_time: Option<f64>,
    },
    Posterior {
        response: ElicitedBelief,
    },
    Attention {
        answer: AttentionAnswer,
    },
}

impl Submission {
    pub fn step(&self) -> Step {
        match self {
            Submission::Prior { .. } => Step::Prior,
            Submission::Stimulus { .. } => Step::Stimulus,
            Submission::Posterior { .. } => Step::Posterior,
            Submission::Attention { .. } => Step::Attention,
        }
    }
}

/// A fit stored with its response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFit {
    pub params: BetaParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTime {
    pub step: Step,
    /// Milliseconds since the Unix epoch.
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub study_id: String,
    pub participant_id: String,
    pub index: usize,
    pub dataset: Dataset,
    pub condition: Condition,
    pub step: Step,
    pub completed: bool,
    pub opened_at: u64,
    /// Submission time of each finished step.
    pub step_times: Vec<StepTime>,
    #[serde(skip)]
    pub(crate) prior: Option<(ElicitedBelief, StoredFit)>,
    #[serde(skip)]
    pub(crate) posterior: Option<(ElicitedBelief, StoredFit)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_answer: Option<AttentionAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_pass: Option<bool>,
}

pub fn session_id(study: &str, index: usize) -> String {
    format!("{study}-s{index:05}")
}

/// Splits a session id into study id and index.
pub fn parse_session_id(id: &str) -> Option<(&str, usize)> {
    let (study, idx) = id.rsplit_once("-s")?;
    if idx.len() < 5 || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((study, idx.parse().ok()?))
}

impl SessionState {
    pub fn open(study_id: &str, index: usize, participant_id: Option<String>, dataset: Dataset, condition: Condition, at: u64) -> Self {
        let id = session_id(study_id, index);
        SessionState {
            participant_id: participant_id.unwrap_or_else(|| id.clone()),
            id,
            study_id: study_id.to_string(),
            index,
            dataset,
            condition,
            step: Step::first(&condition),
            completed: false,
            opened_at: at,
            step_times: Vec::new(),
            prior: None,
            posterior: None,
            view_time: None,
            attention_answer: None,
            attention_pass: None,
        }
    }

    /// When the current step was shown.
    pub fn step_started(&self) -> u64 {
        self.step_times.last().map_or(self.opened_at, |t| t.at)
    }

    /// The participant record once the session is complete. The prior of a
    /// no-elicitation session is the dataset's reference prior.
    pub fn record(&self, reference_prior: Option<BetaParams>) -> Option<ParticipantRecord> {
        if !self.completed {
            return None;
        }
        let (posterior_response, post) = self.posterior.clone()?;
        let (prior_response, prior_fit, prior_flags) = match &self.prior {
            Some((r, f)) => (Some(r.clone()), Some(f.params), f.flags.clone()),
            None => (None, reference_prior, vec![FitFlag::ReferencePrior]),
        };
        let done = self.step_times.last().map_or(self.opened_at, |t| t.at);
        Some(ParticipantRecord {
            id: self.participant_id.clone(),
            dataset: self.dataset,
            condition: self.condition,
            prior_response,
            posterior_response,
            prior_fit,
            posterior_fit: Some(post.params),
            prior_flags,
            posterior_flags: post.flags,
            view_time: self.view_time.unwrap_or(0.0),
            total_time: Some(done.saturating_sub(self.opened_at) as f64 / 1000.0),
            attention_answer: self.attention_answer?,
            attention_pass: self.attention_pass,
            simulated: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    IconArraySample,
    TextSample,
    ModeInterval,
    BallsAndBins,
}

impl From<ElicitationFormat> for WidgetKind {
    fn from(f: ElicitationFormat) -> Self {
        match f {
            ElicitationFormat::GraphicalSample => WidgetKind::IconArraySample,
            ElicitationFormat::TextSample => WidgetKind::TextSample,
            ElicitationFormat::ModeInterval => WidgetKind::ModeInterval,
            ElicitationFormat::Histogram => WidgetKind::BallsAndBins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidgetSpec {
    pub kind: WidgetKind,
    /// `prior` or `posterior`.
    pub target: Step,
    pub copy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balls: Option<u32>,
    /// Relative half-width of the mode interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StimulusSpec {
    Static {
        label: String,
        proportion: f64,
        icon_unit: u32,
        glyph: String,
        grid: GridGeometry,
    },
    Hops {
        label: String,
        proportion: f64,
        icon_unit: u32,
        glyph: String,
        grid: GridGeometry,
        frames: Vec<f64>,
        frame_duration_ms: u32,
        looping: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionOption {
    pub value: AttentionAnswer,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub question: String,
    pub options: Vec<AttentionOption>,
}

/// Body of `GET /sessions/{id}/step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub session_id: String,
    pub step: Step,
    pub completed: bool,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget: Option<WidgetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<StimulusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionSpec>,
}

fn widget(format: ElicitationFormat, target: Step, label: &str) -> WidgetSpec {
    let what = if target == Step::Prior { "before seeing any data" } else { "after seeing the data" };
    let mut w = WidgetSpec {
        kind: format.into(),
        target,
        copy: String::new(),
        grid: None,
        rounds: None,
        bins: None,
        balls: None,
        interval_half_width: None,
    };
    match format {
        ElicitationFormat::GraphicalSample => {
            w.copy = format!("Five times, pick the circle that matches your guess for the {label}, {what}, and rate your confidence.");
            w.grid = Some(GridGeometry { rows: 10, cols: 10 });
            w.rounds = Some(5);
        }
        ElicitationFormat::TextSample => {
            w.copy = format!("Five times, enter a guess (0-100%) for the {label}, {what}, and rate your confidence.");
            w.rounds = Some(5);
        }
        ElicitationFormat::ModeInterval => {
            w.copy = format!("Enter your best guess for the {label}, {what}, then how likely the truth lies in the range shown.");
            w.interval_half_width = Some(0.25);
        }
        ElicitationFormat::Histogram => {
            w.copy = format!("Place exactly 100 balls in the bins to show your belief about the {label}, {what}.");
            w.bins = Some(20);
            w.balls = Some(100);
        }
    }
    w
}

pub fn step_view(s: &SessionState, config: &StudyConfig) -> StepView {
    let ds = config.dataset(s.dataset);
    let label = ds
        .map(|d| d.data.label.as_str())
        .filter(|l| !l.is_empty())
        .unwrap_or("proportion")
        .to_string();
    let mut v = StepView {
        session_id: s.id.clone(),
        step: s.step,
        completed: s.completed,
        condition: s.condition,
        widget: None,
        stimulus: None,
        attention: None,
    };
    match s.step {
        Step::Prior | Step::Posterior => v.widget = Some(widget(s.condition.format, s.step, &label)),
        Step::Stimulus => {
            if let Some(d) = ds {
                let proportion = d.data.display_proportion();
                v.stimulus = Some(if s.condition.uncertainty {
                    let seed = derive_seed(derive_seed(config.seed(), HOPS_STREAM), s.index as u64);
                    let hops = generate_hops(&d.data, config.hops.frames, seed).expect("validated config");
                    StimulusSpec::Hops {
                        label,
                        proportion,
                        icon_unit: d.data.icon_unit,
                        glyph: "person".into(),
                        grid: d.grid,
                        frames: hops.frames,
                        frame_duration_ms: HOPS_FRAME_MS,
                        looping: true,
                    }
                } else {
                    StimulusSpec::Static {
                        label,
                        proportion,
                        icon_unit: d.data.icon_unit,
                        glyph: "person".into(),
                        grid: d.grid,
                    }
                });
            }
        }
        Step::Attention => {
            v.attention = Some(AttentionSpec {
                question: format!("Which range contained the {label} you were shown?"),
                options: [
                    (AttentionAnswer::R0_30, "0%-30%"),
                    (AttentionAnswer::R30_60, "30%-60%"),
                    (AttentionAnswer::R60_100, "60%-100%"),
                ]
                .into_iter()
                .map(|(value, label)| AttentionOption {
                    value,
                    label: label.into(),
                })
                .collect(),
            })
        }
        Step::Completed => {}
    }
    v
}
