use std::path::Path;

use serde::Serialize;

/// How a metric value is judged against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `value < tolerance`
    Below,
    /// `value == tolerance`
    Equals,
    /// Recorded without a verdict.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub check: Check,
    pub pass: Option<bool>,
}

impl Metric {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            check: Check::Below,
            pass: Some(value < tolerance),
        }
    }

    pub fn equals(name: impl Into<String>, value: f64, target: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: target,
            check: Check::Equals,
            pass: Some(value == target),
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: f64::NAN,
            check: Check::Info,
            pass: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: String,
    pub config: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(task: &str, config: serde_json::Value) -> Self {
        Self {
            task: task.into(),
            config,
            metrics: Vec::new(),
            warnings: Vec::new(),
            wall_time_s: 0.0,
            artifacts: Vec::new(),
            error: None,
            passed: false,
        }
    }

    pub fn push(&mut self, metric: Metric) {
        self.metrics.push(metric);
    }

    /// Passes when there is no error and no metric with a verdict failed.
    pub fn finish(&mut self, wall_time_s: f64) {
        self.wall_time_s = wall_time_s;
        self.passed = self.error.is_none() && self.metrics.iter().all(|m| m.pass != Some(false));
    }

    /// NaN tolerances of informational metrics become `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json() + "\n")
    }
}
