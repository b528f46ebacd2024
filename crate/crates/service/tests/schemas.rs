//! Published JSON Schemas agree with what the service accepts and emits.

mod common;

use axum::http::Method;
use belief_core::sim::{simulate_cohort, AgentKind, AgentSpec};
use belief_core::{BetaParams, Condition, Dataset, ElicitationFormat, ObservedData};
use belief_service::{router, AppState};
use common::*;
use serde_json::{json, Value};

#[test]
fn every_schema_compiles() {
    for name in SCHEMAS {
        validator(name);
    }
}

#[test]
fn submissions_match_the_schema() {
    let v = validator("submission");
    for format in ElicitationFormat::ALL {
        assert_valid(&v, &json!({"step": "prior", "response": belief_for(format)}));
        assert_valid(&v, &json!({"step": "posterior", "response": belief_for(format)}));
    }
    assert_valid(&v, &json!({"step": "stimulus"}));
    assert_valid(&v, &json!({"step": "stimulus", "view_time": 4.5}));
    assert_valid(&v, &json!({"step": "attention", "answer": "r30_60"}));
    assert_valid(&v, &json!({"step": "prior", "response": {"kind": "sample_set", "samples": [0.1]}}));

    let bad = [
        json!({"step": "prior"}),
        json!({"step": "prior", "response": {"kind": "sample_set", "samples": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]}}),
        json!({"step": "prior", "response": {"kind": "sample_set", "samples": [1.2]}}),
        json!({"step": "prior", "response": {"kind": "sample_set", "samples": [0.2], "confidences": [101]}}),
        json!({"step": "prior", "response": {"kind": "mode_interval", "mode": 0.0, "subjective_probability": 0.5}}),
        json!({"step": "prior", "response": {"kind": "histogram", "bin_counts": vec![5; 21]}}),
        json!({"step": "attention", "answer": "r0_50"}),
        json!({"step": "stimulus", "view_time": -1}),
        json!({"step": "review"}),
    ];
    for b in bad {
        assert!(!v.is_valid(&b), "{b}");
    }
}

#[test]
fn fixture_configs_match_the_schema() {
    let v = validator("study-config");
    assert_valid(&v, &tech_config("t", "histogram"));
    assert_valid(&v, &four_arm_config("f"));
    assert!(!v.is_valid(&json!({"id": "t", "datasets": [], "conditions": []})));
    assert!(!v.is_valid(&json!({"id": "has space", "datasets": [], "conditions": []})));
}

#[test]
fn simulated_records_match_the_schema() {
    let v = validator("participant-record");
    let data = ObservedData::new(27, 131).unwrap();
    for format in ElicitationFormat::ALL {
        for kind in [AgentKind::ExactBayesian, AgentKind::SampleBased { k: 5 }] {
            if matches!(kind, AgentKind::SampleBased { .. }) && !format.is_sample_based() {
                continue;
            }
            let spec = AgentSpec {
                kind,
                prior: BetaParams::new(10.79, 18.99).unwrap(),
                dataset: Dataset::TechSmall,
                condition: Condition::new(format),
                seed: 1,
            };
            for mut r in simulate_cohort(&spec, &data, 5).unwrap() {
                assert_valid(&v, &serde_json::to_value(&r).unwrap());
                r.fit(&Default::default(), None).unwrap();
                assert_valid(&v, &serde_json::to_value(&r).unwrap());
            }
        }
    }
}

#[tokio::test]
async fn service_payloads_match_the_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path(), 0).unwrap());
    let step_v = validator("step-view");
    let session_v = validator("session-state");
    let error_v = validator("error");
    let report_v = validator("analysis-report");
    let record_v = validator("participant-record");

    let mut cfg = four_arm_config("sch");
    let mut arms = Vec::new();
    for f in ["graphical_sample", "text_sample", "mode_interval", "histogram"] {
        for (u, e) in [(false, true), (true, true), (false, false), (true, false)] {
            arms.push(json!({"dataset": "tech_small", "condition": {"format": f, "uncertainty": u, "elicitation": e}}));
        }
    }
    cfg["conditions"] = Value::Array(arms);
    cfg["bootstrap"] = json!({"repetitions": 100});
    assert_eq!(post(&app, "/studies", &cfg).await.status, 201);
    assert_valid(&validator("study-config"), &get(&app, "/studies/sch").await.json()["config"]);
    assert_valid(&report_v, &get(&app, "/studies/sch/analysis").await.json());

    for _ in 0..32 {
        let s = call(&app, Method::POST, "/studies/sch/sessions", None).await.json();
        assert_valid(&session_v, &s);
        let id = s["id"].as_str().unwrap().to_string();
        let format: ElicitationFormat = serde_json::from_value(s["condition"]["format"].clone()).unwrap();
        loop {
            let view = get(&app, &format!("/sessions/{id}/step")).await.json();
            assert_valid(&step_v, &view);
            let step = view["step"].as_str().unwrap().to_string();
            let body = match step.as_str() {
                "prior" | "posterior" => json!({"step": step, "response": belief_for(format)}),
                "stimulus" => json!({"step": "stimulus", "view_time": 20.0}),
                "attention" => json!({"step": "attention", "answer": "r0_30"}),
                _ => break,
            };
            let r = post(&app, &format!("/sessions/{id}/responses"), &body).await;
            assert_valid(&session_v, &r.json());
        }
    }
    let e = post(&app, "/sessions/sch-s00000/responses", &json!({"step": "prior"})).await;
    assert_valid(&error_v, &e.json());
    let e = get(&app, "/studies/none").await;
    assert_valid(&error_v, &e.json());

    for line in get(&app, "/studies/sch/export").await.text().lines() {
        assert_valid(&record_v, &serde_json::from_str(line).unwrap());
    }
    let report = get(&app, "/studies/sch/analysis?first_n=3,5&regress=true&seed=4").await.json();
    assert_eq!(report["options"]["regression"]["seed"], 4);
    assert_valid(&report_v, &report);
}
