#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Run {
    pub fn stdout_str(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }

    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "{}", self.stderr);
        self
    }
}

pub fn belief<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_belief")).args(args).output().unwrap();
    Run {
        code: status.code().unwrap_or(-1),
        stdout,
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn jsonl(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Tech dataset under one condition, as a study config.
pub fn study_json(id: &str, format: &str, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "id": id,
        "datasets": [{"dataset": "tech_small", "data": {"successes": 27, "failures": 131}}],
        "conditions": [{"dataset": "tech_small", "condition": {"format": format}}],
        "bootstrap": {"resample_size": 100, "repetitions": 500, "level": 0.95},
        "seed": seed
    })
}

/// Runs simulate then fit, returning the fitted JSONL path.
pub fn simulate_and_fit(dir: &Path, extra: &[&str]) -> PathBuf {
    let raw = dir.join("sim.jsonl");
    let fitted = dir.join("fitted.jsonl");
    let mut args = vec!["simulate", "--out", p(&raw)];
    args.extend_from_slice(extra);
    belief(&args).ok();
    belief(["fit", p(&raw), "--out", p(&fitted)]).ok();
    fitted
}
