//! HTTP routes.

use std::collections::HashMap;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use belief_core::record::{read_records, write_records, RecordFormat};
use belief_core::report::report_json;
use belief_core::{build_report, Dataset, ElicitationFormat, ElicitedBelief, FitConfig, ReportFilters};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::config::{AnalysisRequest, StudyConfig};
use crate::error::{parse_json, ApiError, ErrorCode};
use crate::session::{step_view, Submission};
use crate::store::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study).delete(delete_study))
        .route("/studies/{id}/sessions", post(open_session))
        .route("/studies/{id}/analysis", get(analysis))
        .route("/studies/{id}/export", get(export))
        .route("/studies/{id}/records", post(import_records))
        .route("/studies/{id}/refit", post(refit))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/step", get(get_step))
        .route("/sessions/{id}/responses", post(submit))
        .with_state(state)
}

/// The API plus, when given, a static UI bundle served for all other paths.
pub fn app(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    match ui_dir {
        Some(dir) => router(state).fallback_service(ServeDir::new(dir)),
        None => router(state),
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn create_study(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let config: StudyConfig = parse_json(&body).map_err(|e| ApiError { code: ErrorCode::Validation, ..e })?;
    let (view, created) = state.create_study(config).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(view)).into_response())
}

async fn list_studies(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.study_ids().await)
}

async fn get_study(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.study(&id).await?;
    Ok(Json(crate::store::StudyView::from(&*s)).into_response())
}

async fn delete_study(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state.delete_study(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    #[serde(default)]
    participant_id: Option<String>,
}

async fn open_session(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: OpenSession = if body.iter().all(u8::is_ascii_whitespace) {
        OpenSession::default()
    } else {
        parse_json(&body)?
    };
    let s = state.open_session(&id, req.participant_id).await?;
    Ok((StatusCode::CREATED, Json(s)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (study, i) = state.session(&id).await?;
    Ok(Json(&study.sessions[i]).into_response())
}

async fn get_step(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (study, i) = state.session(&id).await?;
    Ok(Json(step_view(&study.sessions[i], &study.config)).into_response())
}

async fn submit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    // Resolve the session first so unknown ids are reported as such.
    state.session(&id).await?;
    let submission = parse_submission(&body)?;
    let s = state.submit(&id, submission).await?;
    Ok(Json(s).into_response())
}

fn violation(field: impl Into<String>, msg: impl Into<String>) -> ApiError {
    ApiError {
        field: Some(field.into()),
        ..ApiError::new(ErrorCode::SchemaViolation, msg)
    }
}

fn typed<T: serde::de::DeserializeOwned>(v: serde_json::Value, prefix: &str) -> ApiResult<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
        violation(field, e.into_inner().to_string())
    })
}

/// Decodes a belief by its `kind` tag, keeping field paths in errors.
fn parse_belief(v: &serde_json::Value, prefix: &str) -> ApiResult<ElicitedBelief> {
    let mut obj = v.as_object().cloned().ok_or_else(|| violation(prefix, "expected an object"))?;
    let kind = obj.remove("kind").ok_or_else(|| violation(format!("{prefix}.kind"), "missing"))?;
    let rest = serde_json::Value::Object(obj);
    match kind.as_str() {
        Some("sample_set") => Ok(ElicitedBelief::SampleSet(typed(rest, prefix)?)),
        Some("mode_interval") => Ok(ElicitedBelief::ModeInterval(typed(rest, prefix)?)),
        Some("histogram") => Ok(ElicitedBelief::Histogram(typed(rest, prefix)?)),
        _ => Err(violation(
            format!("{prefix}.kind"),
            format!("expected one of sample_set, mode_interval, histogram, got {kind}"),
        )),
    }
}

/// Decodes a step submission. Done by hand because tagged enums lose the
/// path of nested errors.
pub fn parse_submission(body: &[u8]) -> ApiResult<Submission> {
    let v: serde_json::Value = serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::SchemaViolation, e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| ApiError::new(ErrorCode::SchemaViolation, "expected an object"))?;
    let step = obj.get("step").and_then(|s| s.as_str()).ok_or_else(|| violation("step", "missing or not a string"))?;
    let allowed: &[&str] = match step {
        "prior" | "posterior" => &["step", "response"],
        "stimulus" => &["step", "view_time"],
        "attention" => &["step", "answer"],
        other => return Err(violation("step", format!("unknown step `{other}`"))),
    };
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(violation(k.clone(), format!("unknown field for step `{step}`")));
    }
    let field = |name: &str| obj.get(name).cloned().ok_or_else(|| violation(name, "missing"));
    Ok(match step {
        "prior" => Submission::Prior {
            response: parse_belief(&field("response")?, "response")?,
        },
        "posterior" => Submission::Posterior {
            response: parse_belief(&field("response")?, "response")?,
        },
        "stimulus" => Submission::Stimulus {
            view_time: obj.get("view_time").cloned().map(|v| typed(v, "view_time")).transpose()?,
        },
        _ => Submission::Attention {
            answer: typed(field("answer")?, "answer")?,
        },
    })
}

fn query_bool(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<bool>> {
    q.get(key)
        .map(|v| match v.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad_query(key, format!("expected true or false, got `{v}`"))),
        })
        .transpose()
}

fn bad_query(key: &str, msg: impl Into<String>) -> ApiError {
    ApiError {
        field: Some(key.to_string()),
        ..ApiError::new(ErrorCode::Validation, msg)
    }
}

/// Filters and statistics selected by the analysis query string.
/// `attention_pass=any` disables the default attention filter.
pub fn parse_analysis_query(
    q: &HashMap<String, String>,
    config: &StudyConfig,
) -> ApiResult<(AnalysisRequest, ReportFilters)> {
    let mut filters = ReportFilters::default();
    if let Some(d) = q.get("dataset") {
        filters.dataset = Some(d.parse::<Dataset>().map_err(|e| bad_query("dataset", e.to_string()))?);
    }
    if let Some(f) = q.get("format") {
        filters.format = Some(f.parse::<ElicitationFormat>().map_err(|e| bad_query("format", e.to_string()))?);
    }
    filters.uncertainty = query_bool(q, "uncertainty")?;
    filters.elicitation = query_bool(q, "elicitation")?;
    if let Some(a) = q.get("attention_pass") {
        filters.attention_pass = if a == "any" { None } else { query_bool(q, "attention_pass")? };
    }
    let first_n = q
        .get("first_n")
        .map(|v| {
            v.split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| bad_query("first_n", format!("`{x}` is not a count"))))
                .collect::<ApiResult<Vec<_>>>()
        })
        .transpose()?;
    let seed = q
        .get("seed")
        .map(|v| v.parse::<u64>().map_err(|_| bad_query("seed", format!("`{v}` is not an integer"))))
        .transpose()?
        .unwrap_or(config.seed());
    let req = AnalysisRequest {
        bootstrap: query_bool(q, "bootstrap")?.unwrap_or(config.bootstrap.is_some()),
        regress: query_bool(q, "regress")?.unwrap_or(config.is_factorial()),
        first_n,
        seed,
    };
    Ok((req, filters))
}

async fn analysis(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let study = state.study(&id).await?;
    let (req, filters) = parse_analysis_query(&q, &study.config)?;
    let options = req.options(study.config.fit, study.config.bootstrap);
    let body = tokio::task::spawn_blocking(move || {
        let records = study.records();
        build_report(&records, &study.config.dataset_table(), &options, &filters).map(|r| report_json(&r))
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(|e| ApiError::from_core(ErrorCode::Validation, "", e))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

fn record_format(q: &HashMap<String, String>) -> ApiResult<RecordFormat> {
    q.get("format")
        .map_or(Ok(RecordFormat::Jsonl), |f| f.parse().map_err(|e: belief_core::Error| bad_query("format", e.to_string())))
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let study = state.study(&id).await?;
    let format = record_format(&q)?;
    let mut out = Vec::new();
    write_records(&mut out, format, &study.records()).map_err(ApiError::internal)?;
    let ctype = match format {
        RecordFormat::Csv => "text/csv",
        RecordFormat::Jsonl => "application/x-ndjson",
    };
    Ok(([(header::CONTENT_TYPE, ctype)], out).into_response())
}

/// Bulk ingest of finished records, in JSON lines (default) or CSV.
async fn import_records(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Response> {
    state.study(&id).await?;
    let format = record_format(&q)?;
    let rows = read_records(&body[..], format).map_err(|e| ApiError::from_core(ErrorCode::SchemaViolation, "", e))?;
    let mut records = Vec::with_capacity(rows.len());
    let mut errors = Vec::new();
    for (line, r) in rows {
        match r.and_then(|r| r.validate().map(|_| r)) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(format!("line {line}: {e}")),
        }
    }
    if !errors.is_empty() {
        return Err(ApiError::new(ErrorCode::SchemaViolation, errors.join("; ")));
    }
    let n = state.import_records(&id, records).await?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "imported": n }))).into_response())
}

async fn refit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let fit: FitConfig = if body.iter().all(u8::is_ascii_whitespace) {
        state.study(&id).await?.config.fit
    } else {
        parse_json(&body)?
    };
    Ok(Json(state.refit(&id, fit).await?).into_response())
}
