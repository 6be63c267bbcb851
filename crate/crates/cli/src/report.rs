//! Run directories and JSON reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// First 16 hex digits of SHA-256 over the canonical (key-sorted) JSON echo.
pub fn run_id(echo: &Value) -> String {
    let canonical = serde_json::to_string(echo).expect("JSON values always serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub status: &'static str,
    pub command: &'static str,
    pub run_id: String,
    pub config: Value,
    pub manifest: BTreeMap<String, String>,
    pub summary: BTreeMap<String, Value>,
    pub timings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Output directory of one command plus the report being assembled.
pub struct Run {
    pub dir: PathBuf,
    pub report: Report,
    started: Instant,
}

impl Run {
    pub fn create(out_dir: &Path, command: &'static str, config: Value) -> anyhow::Result<Self> {
        let id = run_id(&serde_json::json!({ "command": command, "config": &config }));
        let dir = out_dir.join(&id);
        fs::create_dir_all(&dir)?;
        Ok(Run {
            dir,
            report: Report {
                status: "error",
                command,
                run_id: id,
                config,
                manifest: BTreeMap::new(),
                summary: BTreeMap::new(),
                timings: BTreeMap::new(),
                error: None,
            },
            started: Instant::now(),
        })
    }

    /// Path for an output file, recorded in the manifest under `name`.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.report.manifest.insert(name.to_string(), name.to_string());
        self.dir.join(name)
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        self.report.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let t0 = Instant::now();
        let out = f(self);
        self.report.timings.insert(format!("{phase}_seconds"), t0.elapsed().as_secs_f64());
        out
    }

    /// Writes `report.json`. On success every manifest file must exist and be
    /// non-empty; otherwise the report is downgraded to an error.
    pub fn finish(mut self, outcome: anyhow::Result<()>) -> anyhow::Result<PathBuf> {
        self.report.timings.insert("total_seconds".into(), self.started.elapsed().as_secs_f64());
        let outcome = outcome.and_then(|()| {
            for name in self.report.manifest.values() {
                let len = fs::metadata(self.dir.join(name)).map(|m| m.len()).unwrap_or(0);
                anyhow::ensure!(len > 0, "output file {name} is missing or empty");
            }
            Ok(())
        });
        match &outcome {
            Ok(()) => self.report.status = "ok",
            Err(e) => {
                self.report.status = "error";
                self.report.error = Some(format!("{e:#}"));
            }
        }
        let path = self.dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&self.report)?)?;
        outcome.map(|()| path)
    }
}
