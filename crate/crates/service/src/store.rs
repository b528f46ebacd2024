//! Append-only per-study event logs and the in-memory state rebuilt from
//! them.
//!
//! Each study lives in `studies/{id}.jsonl` under the data directory. Writes
//! to a study go through its writer lock; readers take the current
//! immutable snapshot.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use belief_core::rng::{derive_seed, stream_rng};
use belief_core::{AttentionAnswer, Condition, Dataset, FitConfig, ParticipantRecord};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::error::{ApiError, ErrorCode};
use crate::session::{parse_session_id, SessionState, Step, StepTime, StoredFit, Submission};

/// Stream separating assignment tie-breaks from other uses of the seed.
const ASSIGN_STREAM: u64 = 0x4153_5347;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    StudyCreated {
        at: u64,
        config: StudyConfig,
    },
    SessionOpened {
        at: u64,
        index: usize,
        participant_id: String,
        dataset: Dataset,
        condition: Condition,
    },
    ResponseStored {
        at: u64,
        session: usize,
        submission: Submission,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<StoredFit>,
    },
    RecordsImported {
        at: u64,
        records: Vec<ParticipantRecord>,
    },
    Refitted {
        at: u64,
        fit: FitConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyState {
    pub config: StudyConfig,
    pub created_at: u64,
    pub sessions: Vec<SessionState>,
    pub imported: Vec<ParticipantRecord>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn fit_response(r: &belief_core::ElicitedBelief, cfg: &FitConfig) -> Result<StoredFit, ApiError> {
    let fit = r.fit(cfg).map_err(ApiError::internal)?;
    Ok(StoredFit {
        params: fit.params,
        flags: fit.flags,
    })
}

impl StudyState {
    fn new(config: StudyConfig, at: u64) -> Self {
        StudyState {
            config,
            created_at: at,
            sessions: Vec::new(),
            imported: Vec::new(),
        }
    }

    /// Completed session records in session order, then imported records.
    pub fn records(&self) -> Vec<ParticipantRecord> {
        let table = self.config.dataset_table();
        self.sessions
            .iter()
            .filter_map(|s| {
                let reference = table.get(s.dataset).ok().and_then(|i| i.reference_prior);
                s.record(reference)
            })
            .chain(self.imported.iter().cloned())
            .collect()
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.config.conditions.len()];
        for s in &self.sessions {
            if let Some(i) = self
                .config
                .conditions
                .iter()
                .position(|a| a.dataset == s.dataset && a.condition == s.condition)
            {
                counts[i] += 1;
            }
        }
        counts
    }

    fn participant_ids(&self) -> HashSet<&str> {
        self.sessions
            .iter()
            .map(|s| s.participant_id.as_str())
            .chain(self.imported.iter().map(|r| r.id.as_str()))
            .collect()
    }

    /// Least-filled arm relative to its weight; ties broken by the seeded
    /// stream for this session index.
    fn choose_arm(&self, index: usize) -> usize {
        let counts = self.arm_counts();
        let load: Vec<f64> = counts
            .iter()
            .zip(&self.config.conditions)
            .map(|(&c, a)| c as f64 / a.weight)
            .collect();
        let min = load.iter().copied().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..load.len()).filter(|&i| load[i] <= min * (1.0 + 1e-12)).collect();
        let mut rng = stream_rng(derive_seed(self.config.seed(), ASSIGN_STREAM), index as u64);
        ties[rng.random_range(0..ties.len())]
    }

    fn apply(&mut self, ev: &Event) -> Result<(), String> {
        match ev {
            Event::StudyCreated { .. } => return Err("study created twice".into()),
            Event::SessionOpened {
                at,
                index,
                participant_id,
                dataset,
                condition,
            } => {
                if *index != self.sessions.len() {
                    return Err(format!("session {index} opened out of order"));
                }
                let s = SessionState::open(&self.config.id, *index, Some(participant_id.clone()), *dataset, *condition, *at);
                self.sessions.push(s);
            }
            Event::ResponseStored {
                at,
                session,
                submission,
                fit,
            } => {
                let data = {
                    let s = self.sessions.get(*session).ok_or_else(|| format!("no session {session}"))?;
                    self.config.dataset(s.dataset).map(|d| d.data.clone())
                };
                let s = &mut self.sessions[*session];
                if s.completed || submission.step() != s.step {
                    return Err(format!("session {session}: unexpected {} submission", submission.step().as_str()));
                }
                match submission {
                    Submission::Prior { response } => {
                        s.prior = Some((response.clone(), fit.clone().ok_or("prior without fit")?));
                    }
                    Submission::Stimulus { view_time } => {
                        let shown = s.step_started();
                        s.view_time = Some(view_time.unwrap_or_else(|| at.saturating_sub(shown) as f64 / 1000.0));
                    }
                    Submission::Posterior { response } => {
                        s.posterior = Some((response.clone(), fit.clone().ok_or("posterior without fit")?));
                    }
                    Submission::Attention { answer } => {
                        let data = data.ok_or("session dataset is not configured")?;
                        s.attention_answer = Some(*answer);
                        s.attention_pass = Some(*answer == AttentionAnswer::for_proportion(data.display_proportion()));
                    }
                }
                s.step_times.push(StepTime {
                    step: submission.step(),
                    at: *at,
                });
                s.step = s.step.next();
                s.completed = s.step == Step::Completed;
            }
            Event::RecordsImported { records, .. } => self.imported.extend(records.iter().cloned()),
            Event::Refitted { fit, .. } => {
                let table = self.config.dataset_table();
                for s in &mut self.sessions {
                    for (r, f) in [&mut s.prior, &mut s.posterior].into_iter().flatten() {
                        *f = fit_response(r, fit).map_err(|e| e.message)?;
                    }
                }
                for r in &mut self.imported {
                    let reference = table.get(r.dataset).ok().and_then(|i| i.reference_prior);
                    r.fit(fit, reference).map_err(|e| e.to_string())?;
                }
                self.config.fit = *fit;
            }
        }
        Ok(())
    }
}

struct Writer {
    log: File,
    path: PathBuf,
    deleted: bool,
}

struct StudyHandle {
    writer: tokio::sync::Mutex<Writer>,
    snapshot: RwLock<Arc<StudyState>>,
}

impl StudyHandle {
    fn snapshot(&self) -> Arc<StudyState> {
        self.snapshot.read().unwrap().clone()
    }

    /// Serialized write: build an event from the current state, apply it to
    /// a copy, append it to the log, then publish the copy.
    async fn write<T>(
        &self,
        study_id: &str,
        f: impl FnOnce(&StudyState) -> Result<(Event, T), ApiError>,
    ) -> Result<(T, Arc<StudyState>), ApiError> {
        let mut w = self.writer.lock().await;
        if w.deleted {
            return Err(ApiError::unknown_study(study_id));
        }
        let current = self.snapshot();
        let (ev, out) = f(&current)?;
        let mut next = (*current).clone();
        next.apply(&ev).map_err(ApiError::internal)?;
        append(&mut w.log, &ev).map_err(ApiError::internal)?;
        let next = Arc::new(next);
        *self.snapshot.write().unwrap() = next.clone();
        Ok((out, next))
    }
}

fn append(log: &mut File, ev: &Event) -> std::io::Result<()> {
    let mut line = serde_json::to_string(ev).map_err(std::io::Error::other)?;
    line.push('\n');
    log.write_all(line.as_bytes())?;
    log.flush()
}

/// Rebuilds a study from its log. A torn final line (a write cut short by a
/// crash) is dropped and truncated away.
fn replay(path: &Path) -> Result<StudyState, String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let mut reader = BufReader::new(file);
    let mut state: Option<StudyState> = None;
    let mut good = 0u64;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| e.to_string())?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        let ev: Event = match serde_json::from_str(line.trim_end()) {
            Ok(ev) => ev,
            Err(_) if !complete => {
                tracing::warn!(path = %path.display(), "dropping torn final event");
                OpenOptions::new()
                    .write(true)
                    .open(path)
                    .and_then(|f| f.set_len(good))
                    .map_err(|e| e.to_string())?;
                break;
            }
            Err(e) => return Err(format!("{}:{lineno}: {e}", path.display())),
        };
        match (&mut state, ev) {
            (None, Event::StudyCreated { at, config }) => state = Some(StudyState::new(config, at)),
            (None, _) => return Err(format!("{}: log does not start with study creation", path.display())),
            (Some(s), ev) => s.apply(&ev).map_err(|e| format!("{}:{lineno}: {e}", path.display()))?,
        }
        good += n as u64;
    }
    state.ok_or_else(|| format!("{}: empty log", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyView {
    pub config: StudyConfig,
    pub created_at: u64,
    pub sessions: usize,
    pub completed: usize,
    pub imported: usize,
}

impl From<&StudyState> for StudyView {
    fn from(s: &StudyState) -> Self {
        StudyView {
            config: s.config.clone(),
            created_at: s.created_at,
            sessions: s.sessions.len(),
            completed: s.sessions.iter().filter(|x| x.completed).count(),
            imported: s.imported.len(),
        }
    }
}

struct Inner {
    dir: PathBuf,
    seed: u64,
    studies: tokio::sync::RwLock<HashMap<String, Arc<StudyHandle>>>,
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and replays every study log in it.
    pub fn open(dir: impl Into<PathBuf>, seed: u64) -> Result<Self, String> {
        let dir = dir.into();
        let studies_dir = dir.join("studies");
        fs::create_dir_all(&studies_dir).map_err(|e| format!("{}: {e}", studies_dir.display()))?;
        let mut studies = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&studies_dir)
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let state = replay(&path)?;
            let log = OpenOptions::new().append(true).open(&path).map_err(|e| e.to_string())?;
            tracing::info!(study = %state.config.id, sessions = state.sessions.len(), "replayed");
            studies.insert(
                state.config.id.clone(),
                Arc::new(StudyHandle {
                    writer: tokio::sync::Mutex::new(Writer {
                        log,
                        path,
                        deleted: false,
                    }),
                    snapshot: RwLock::new(Arc::new(state)),
                }),
            );
        }
        Ok(AppState(Arc::new(Inner {
            dir,
            seed,
            studies: tokio::sync::RwLock::new(studies),
        })))
    }

    pub fn global_seed(&self) -> u64 {
        self.0.seed
    }

    async fn handle(&self, id: &str) -> Result<Arc<StudyHandle>, ApiError> {
        self.0
            .studies
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_study(id))
    }

    pub async fn study(&self, id: &str) -> Result<Arc<StudyState>, ApiError> {
        Ok(self.handle(id).await?.snapshot())
    }

    pub async fn study_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.0.studies.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Creates a study. Returns `false` in the second slot when an identical
    /// study already existed.
    pub async fn create_study(&self, config: StudyConfig) -> Result<(StudyView, bool), ApiError> {
        config
            .validate()
            .map_err(|e| ApiError::from_core(ErrorCode::Validation, "", e))?;
        let client_seed = config.seed;
        let config = config.resolved(self.0.seed);
        let mut studies = self.0.studies.write().await;
        if let Some(h) = studies.get(&config.id) {
            let s = h.snapshot();
            // A resubmission without a seed matches whatever seed was filled in.
            let same = s.config == config
                || (client_seed.is_none()
                    && s.config
                        == StudyConfig {
                            seed: s.config.seed,
                            ..config.clone()
                        });
            return if same {
                Ok((StudyView::from(&*s), false))
            } else {
                Err(ApiError::new(
                    ErrorCode::Conflict,
                    format!("study `{}` exists with a different config", config.id),
                ))
            };
        }
        let path = self.0.dir.join("studies").join(format!("{}.jsonl", config.id));
        let mut log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(ApiError::internal)?;
        let at = now_ms();
        append(
            &mut log,
            &Event::StudyCreated {
                at,
                config: config.clone(),
            },
        )
        .map_err(ApiError::internal)?;
        let state = StudyState::new(config.clone(), at);
        let view = StudyView::from(&state);
        studies.insert(
            config.id,
            Arc::new(StudyHandle {
                writer: tokio::sync::Mutex::new(Writer {
                    log,
                    path,
                    deleted: false,
                }),
                snapshot: RwLock::new(Arc::new(state)),
            }),
        );
        Ok((view, true))
    }

    /// Removes a study. Its log is moved under `deleted/`, not erased.
    pub async fn delete_study(&self, id: &str) -> Result<(), ApiError> {
        let mut studies = self.0.studies.write().await;
        let h = studies.remove(id).ok_or_else(|| ApiError::unknown_study(id))?;
        let mut w = h.writer.lock().await;
        w.deleted = true;
        let _ = w.log.sync_all();
        let graveyard = self.0.dir.join("deleted");
        fs::create_dir_all(&graveyard).map_err(ApiError::internal)?;
        fs::rename(&w.path, graveyard.join(format!("{id}-{}.jsonl", now_ms()))).map_err(ApiError::internal)?;
        Ok(())
    }

    pub async fn open_session(&self, study_id: &str, participant_id: Option<String>) -> Result<SessionState, ApiError> {
        let h = self.handle(study_id).await?;
        let (index, state) = h
            .write(study_id, |s| {
                let index = s.sessions.len();
                let participant_id = participant_id.unwrap_or_else(|| crate::session::session_id(study_id, index));
                if participant_id.trim().is_empty() {
                    return Err(ApiError {
                        field: Some("participant_id".into()),
                        ..ApiError::new(ErrorCode::Validation, "must not be empty")
                    });
                }
                if s.participant_ids().contains(participant_id.as_str()) {
                    return Err(ApiError::new(
                        ErrorCode::Conflict,
                        format!("participant `{participant_id}` already has a session"),
                    ));
                }
                let arm = &s.config.conditions[s.choose_arm(index)];
                let ev = Event::SessionOpened {
                    at: now_ms(),
                    index,
                    participant_id,
                    dataset: arm.dataset,
                    condition: arm.condition,
                };
                Ok((ev, index))
            })
            .await?;
        Ok(state.sessions[index].clone())
    }

    /// The study snapshot and index of a session.
    pub async fn session(&self, session_id: &str) -> Result<(Arc<StudyState>, usize), ApiError> {
        let (study, index) = parse_session_id(session_id).ok_or_else(|| ApiError::unknown_session(session_id))?;
        let state = self
            .study(study)
            .await
            .map_err(|_| ApiError::unknown_session(session_id))?;
        if state.sessions.get(index).is_none_or(|s| s.id != session_id) {
            return Err(ApiError::unknown_session(session_id));
        }
        Ok((state, index))
    }

    pub async fn submit(&self, session_id: &str, submission: Submission) -> Result<SessionState, ApiError> {
        let (study, index) = parse_session_id(session_id).ok_or_else(|| ApiError::unknown_session(session_id))?;
        let h = self
            .handle(study)
            .await
            .map_err(|_| ApiError::unknown_session(session_id))?;
        let (_, state) = h
            .write(study, |s| {
                let sess = s
                    .sessions
                    .get(index)
                    .filter(|x| x.id == session_id)
                    .ok_or_else(|| ApiError::unknown_session(session_id))?;
                let step = submission.step();
                if sess.completed {
                    return Err(ApiError::new(ErrorCode::AlreadyCompleted, format!("session `{session_id}` is complete")));
                }
                if step != sess.step {
                    let done = sess.step_times.iter().any(|t| t.step == step);
                    let (code, msg) = if done {
                        (ErrorCode::DuplicateStep, format!("step `{}` was already submitted", step.as_str()))
                    } else {
                        (
                            ErrorCode::StepMismatch,
                            format!("expected step `{}`, got `{}`", sess.step.as_str(), step.as_str()),
                        )
                    };
                    return Err(ApiError::new(code, msg));
                }
                let fit = match &submission {
                    Submission::Prior { response } | Submission::Posterior { response } => {
                        response
                            .validate_for(sess.condition.format)
                            .map_err(|e| ApiError::from_core(ErrorCode::SchemaViolation, "response", e))?;
                        Some(fit_response(response, &s.config.fit)?)
                    }
                    Submission::Stimulus { view_time: Some(t) } if !(t.is_finite() && *t >= 0.0) => {
                        return Err(ApiError {
                            field: Some("view_time".into()),
                            ..ApiError::new(ErrorCode::SchemaViolation, "must be a nonnegative number of seconds")
                        });
                    }
                    _ => None,
                };
                let at = now_ms().max(sess.step_started());
                Ok((
                    Event::ResponseStored {
                        at,
                        session: index,
                        submission,
                        fit,
                    },
                    (),
                ))
            })
            .await?;
        Ok(state.sessions[index].clone())
    }

    /// Adds finished records to a study, refitting them under its fit
    /// config.
    pub async fn import_records(&self, study_id: &str, mut records: Vec<ParticipantRecord>) -> Result<usize, ApiError> {
        let h = self.handle(study_id).await?;
        let n = records.len();
        h.write(study_id, move |s| {
            let table = s.config.dataset_table();
            let mut ids: HashSet<String> = s.participant_ids().into_iter().map(String::from).collect();
            for (i, r) in records.iter_mut().enumerate() {
                let reference = table
                    .get(r.dataset)
                    .map_err(|e| ApiError::from_core(ErrorCode::Validation, &format!("records[{i}]"), e))?
                    .reference_prior;
                if !ids.insert(r.id.clone()) {
                    return Err(ApiError {
                        field: Some(format!("records[{i}].id")),
                        ..ApiError::new(ErrorCode::Conflict, format!("record `{}` already exists", r.id))
                    });
                }
                r.fit(&s.config.fit, reference)
                    .map_err(|e| ApiError::from_core(ErrorCode::Validation, &format!("records[{i}]"), e))?;
            }
            Ok((Event::RecordsImported { at: now_ms(), records }, ()))
        })
        .await?;
        Ok(n)
    }

    /// Refits every stored response under a new fit config.
    pub async fn refit(&self, study_id: &str, fit: FitConfig) -> Result<StudyView, ApiError> {
        fit.validate()
            .map_err(|e| ApiError::from_core(ErrorCode::Validation, "", e))?;
        let h = self.handle(study_id).await?;
        let (_, state) = h
            .write(study_id, |_| Ok((Event::Refitted { at: now_ms(), fit }, ())))
            .await?;
        Ok(StudyView::from(&*state))
    }

    /// Forces every log to stable storage.
    pub async fn flush(&self) {
        for h in self.0.studies.read().await.values() {
            let w = h.writer.lock().await;
            if let Err(e) = w.log.sync_all() {
                tracing::error!(path = %w.path.display(), "sync failed: {e}");
            }
        }
    }
}
