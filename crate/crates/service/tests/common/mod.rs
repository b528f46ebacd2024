#![allow(dead_code)]

use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use belief_core::ElicitationFormat;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(name: &str) -> Value {
    let path = schema_dir().join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub const SCHEMAS: [&str; 10] = [
    "common",
    "elicited-belief",
    "study-config",
    "open-session",
    "submission",
    "session-state",
    "step-view",
    "participant-record",
    "analysis-report",
    "error",
];

/// Validator for one published schema with every other schema registered
/// for `$ref` resolution.
pub fn validator(name: &str) -> jsonschema::Validator {
    let mut opts = jsonschema::options();
    for other in SCHEMAS {
        let s = load(other);
        let id = s["$id"].as_str().unwrap().to_string();
        opts = opts.with_resource(id, jsonschema::Resource::from_contents(s).unwrap());
    }
    opts.build(&load(name)).unwrap()
}

pub fn assert_valid(v: &jsonschema::Validator, instance: &Value) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}\n{instance:#}");
}

pub fn tech_config(id: &str, format: &str) -> Value {
    json!({
        "id": id,
        "datasets": [{"dataset": "tech_small", "data": {"successes": 27, "failures": 131, "label": "share of tech workers"}}],
        "conditions": [{"dataset": "tech_small", "condition": {"format": format}}],
        "bootstrap": {"resample_size": 100, "repetitions": 200, "level": 0.95},
        "seed": 11
    })
}

/// Tech dataset shown under four equally weighted conditions.
pub fn four_arm_config(id: &str) -> Value {
    let arms: Vec<Value> = ["graphical_sample", "text_sample", "mode_interval", "histogram"]
        .iter()
        .map(|f| json!({"dataset": "tech_small", "condition": {"format": f}}))
        .collect();
    json!({
        "id": id,
        "datasets": [{"dataset": "tech_small", "data": {"successes": 27, "failures": 131}}],
        "conditions": arms,
        "seed": 5
    })
}

/// A valid response for each format.
pub fn belief_for(format: ElicitationFormat) -> Value {
    match format {
        ElicitationFormat::GraphicalSample => {
            json!({"kind": "sample_set", "samples": [0.15, 0.17, 0.2, 0.12, 0.25], "confidences": [80, 90, 60, 50, 40]})
        }
        ElicitationFormat::TextSample => {
            json!({"kind": "sample_set", "samples": [0.155, 0.171, 0.2, 0.12, 0.25], "confidences": [80, 90, 60, 50, 40]})
        }
        ElicitationFormat::ModeInterval => json!({"kind": "mode_interval", "mode": 0.2, "subjective_probability": 0.6}),
        ElicitationFormat::Histogram => {
            let mut bins = vec![0u32; 20];
            bins[2] = 20;
            bins[3] = 50;
            bins[4] = 25;
            bins[5] = 5;
            json!({"kind": "histogram", "bin_counts": bins})
        }
    }
}

pub struct Resp {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> Resp {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Resp { status, body }
}

pub async fn get(app: &Router, uri: &str) -> Resp {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &Value) -> Resp {
    call(app, Method::POST, uri, Some(body.to_string())).await
}

/// Walks a session through every remaining step with valid payloads.
pub async fn complete_session(app: &Router, session: &Value) -> Value {
    let id = session["id"].as_str().unwrap().to_string();
    let format: ElicitationFormat = serde_json::from_value(session["condition"]["format"].clone()).unwrap();
    let mut last = session.clone();
    loop {
        let step = last["step"].as_str().unwrap().to_string();
        let body = match step.as_str() {
            "prior" | "posterior" => json!({"step": step, "response": belief_for(format)}),
            "stimulus" => json!({"step": "stimulus", "view_time": 12.5}),
            "attention" => json!({"step": "attention", "answer": "r0_30"}),
            _ => return last,
        };
        let r = post(app, &format!("/sessions/{id}/responses"), &body).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        last = r.json();
    }
}
