//! Machine-readable run summary.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageSummary {
    pub name: String,
    /// Records that entered the stage.
    pub input: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub malformed: usize,
    pub seconds: f64,
    /// Stage-specific counters (duplicates, per-reason rejections, ...).
    pub details: BTreeMap<String, serde_json::Value>,
    pub errors: Vec<String>,
}

impl StageSummary {
    pub fn new(name: &str) -> Self {
        StageSummary {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        // plain data, serialization cannot fail
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.details.insert(key.to_string(), v);
    }

    pub fn reconciles(&self) -> bool {
        self.input == self.accepted + self.rejected + self.malformed
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub run_id: String,
    pub workers: usize,
    pub status: &'static str,
    pub error: Option<String>,
    /// Totals across stages: records read, finally accepted, rejected by any
    /// stage, and unparseable.
    pub ingested: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub malformed: usize,
    pub stages: Vec<StageSummary>,
    pub artifacts: Vec<String>,
    pub total_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunSummary {
    pub fn new(command: &str, run_id: &str, workers: usize) -> Self {
        RunSummary {
            command: command.to_string(),
            run_id: run_id.to_string(),
            workers,
            status: "ok",
            error: None,
            ingested: 0,
            accepted: 0,
            rejected: 0,
            malformed: 0,
            stages: Vec::new(),
            artifacts: Vec::new(),
            total_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn fail(&mut self, message: String) {
        self.status = "error";
        self.error = Some(message);
    }

    pub fn finish(&mut self) {
        if let Some(t) = self.started {
            self.total_seconds = t.elapsed().as_secs_f64();
        }
    }
}

/// Times a stage body and records the elapsed seconds.
pub fn timed<T>(stage: &mut StageSummary, f: impl FnOnce(&mut StageSummary) -> T) -> T {
    let t = Instant::now();
    let out = f(stage);
    stage.seconds = t.elapsed().as_secs_f64();
    out
}
