//! Provenance records.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use uuid::Uuid;

use crate::gate::InvocationObject;
use crate::schema::{literal_eq, Version};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
    Aborted,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        self != RunStatus::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Succeeded => "succeeded",
            RunStatus::Failed => "failed",
            RunStatus::Aborted => "aborted",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "running" => Ok(RunStatus::Running),
            "succeeded" => Ok(RunStatus::Succeeded),
            "failed" => Ok(RunStatus::Failed),
            "aborted" => Ok(RunStatus::Aborted),
            other => Err(format!("unknown run status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Pending => "pending",
            StepStatus::Running => "running",
            StepStatus::Succeeded => "succeeded",
            StepStatus::Failed => "failed",
            StepStatus::Skipped => "skipped",
        }
    }

    pub fn is_finished(self) -> bool {
        matches!(self, StepStatus::Succeeded | StepStatus::Failed | StepStatus::Skipped)
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step_id: String,
    pub tool_id: String,
    pub status: StepStatus,
    pub outputs: Map<String, Value>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StepResult {
    pub(crate) fn pending(step_id: &str, tool_id: &str) -> Self {
        Self {
            step_id: step_id.to_string(),
            tool_id: tool_id.to_string(),
            status: StepStatus::Pending,
            outputs: Map::new(),
            started_at: None,
            finished_at: None,
            metrics: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMetadata {
    pub engine_version: Version,
    pub os: String,
    pub hostname: String,
    pub tool_adapter_versions: BTreeMap<String, Version>,
    pub seed: Option<u64>,
}

impl EnvironmentMetadata {
    pub fn capture(tool_adapter_versions: BTreeMap<String, Version>, seed: Option<u64>) -> Self {
        Self {
            engine_version: crate::ENGINE_VERSION.parse().expect("crate version is semver"),
            os: format!("{} {}", std::env::consts::OS, std::env::consts::ARCH),
            hostname: hostname(),
            tool_adapter_versions,
            seed,
        }
    }
}

fn hostname() -> String {
    ["/proc/sys/kernel/hostname", "/etc/hostname"]
        .iter()
        .find_map(|p| std::fs::read_to_string(p).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .or_else(|| std::env::var("COMPUTERNAME").ok())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSnapshot {
    pub document: Value,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: Uuid,
    pub invocation: InvocationObject,
    pub workflow_snapshot: WorkflowSnapshot,
    /// Workflow-level parameters with defaults applied.
    pub resolved_parameters: Map<String, Value>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub environment: EnvironmentMetadata,
    pub status: RunStatus,
    pub steps: Vec<StepResult>,
    pub failure: Option<Failure>,
}

impl RunRecord {
    pub fn step(&self, step_id: &str) -> Option<&StepResult> {
        self.steps.iter().find(|s| s.step_id == step_id)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            run_id: self.run_id,
            workflow_id: self.invocation.workflow_id.clone(),
            version: self.invocation.version,
            invocation_id: self.invocation.invocation_id,
            status: self.status,
            started_at: self.started_at,
            finished_at: self.finished_at,
        }
    }

    /// Canonical rendering of every step's outputs, in step order. Two runs
    /// are replays of each other when these strings are equal.
    pub fn canonical_outputs(&self) -> String {
        let outputs: Map<String, Value> =
            self.steps.iter().map(|s| (s.step_id.clone(), Value::Object(s.outputs.clone()))).collect();
        crate::schema::render_canonical(&Value::Object(outputs))
    }

    /// A human-readable rendering for the CLI.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "run {}\n  workflow   {} {} ({})\n  invocation {}\n  status     {}\n  started    {}\n  finished   {}\n",
            self.run_id,
            self.invocation.workflow_id,
            self.invocation.version,
            self.workflow_snapshot.content_hash,
            self.invocation.invocation_id,
            self.status,
            self.started_at.to_rfc3339(),
            self.finished_at.map_or_else(|| "-".to_string(), |t| t.to_rfc3339()),
        );
        out.push_str(&format!(
            "  engine     {} on {} ({}), seed {}\n",
            self.environment.engine_version,
            self.environment.os,
            self.environment.hostname,
            self.environment.seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
        ));
        out.push_str("  parameters\n");
        for (k, v) in &self.resolved_parameters {
            out.push_str(&format!("    {k} = {v}\n"));
        }
        out.push_str("  steps\n");
        for step in &self.steps {
            out.push_str(&format!("    {:<20} {:<10} {}", step.step_id, step.status.as_str(), step.tool_id));
            if let Some(metrics) = &step.metrics {
                let m: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!("  [{}]", m.join(", ")));
            }
            if let Some(error) = &step.error {
                out.push_str(&format!("  error: {error}"));
            }
            out.push('\n');
        }
        if let Some(f) = &self.failure {
            out.push_str(&format!("  failure at {}: {}\n", f.step_id, f.message));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: Uuid,
    pub workflow_id: String,
    pub version: Version,
    pub invocation_id: Uuid,
    pub status: RunStatus,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunFilter {
    #[serde(default)]
    pub workflow_id: Option<String>,
    #[serde(default)]
    pub status: Option<RunStatus>,
    /// Runs started at or after this instant.
    #[serde(default)]
    pub since: Option<DateTime<Utc>>,
}

impl RunFilter {
    pub fn matches(&self, run: &RunSummary) -> bool {
        self.workflow_id.as_ref().is_none_or(|w| *w == run.workflow_id)
            && self.status.is_none_or(|s| s == run.status)
            && self.since.is_none_or(|t| run.started_at >= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub run_a: Uuid,
    pub run_b: Uuid,
    /// Keys whose resolved values differ, as `(a, b)`; absent is `null`.
    pub parameter_diff: BTreeMap<String, (Value, Value)>,
    /// Per shared step, numeric metrics present in both runs whose values
    /// differ, keyed by metric name.
    pub metric_diff: BTreeMap<String, BTreeMap<String, MetricDelta>>,
    pub same_workflow: bool,
}

impl RunComparison {
    pub fn between(a: &RunRecord, b: &RunRecord) -> Self {
        let mut parameter_diff = BTreeMap::new();
        let keys: std::collections::BTreeSet<&String> =
            a.resolved_parameters.keys().chain(b.resolved_parameters.keys()).collect();
        for key in keys {
            let va = a.resolved_parameters.get(key).cloned().unwrap_or(Value::Null);
            let vb = b.resolved_parameters.get(key).cloned().unwrap_or(Value::Null);
            if !literal_eq(&va, &vb) {
                parameter_diff.insert(key.clone(), (va, vb));
            }
        }
        let mut metric_diff = BTreeMap::new();
        for sa in &a.steps {
            let (Some(ma), Some(mb)) = (sa.metrics.as_ref(), b.step(&sa.step_id).and_then(|s| s.metrics.as_ref())) else {
                continue;
            };
            let deltas: BTreeMap<String, MetricDelta> = ma
                .iter()
                .filter_map(|(k, va)| {
                    let (x, y) = (va.as_f64()?, mb.get(k)?.as_f64()?);
                    (x != y).then(|| (k.clone(), MetricDelta { a: x, b: y, delta: y - x }))
                })
                .collect();
            if !deltas.is_empty() {
                metric_diff.insert(sa.step_id.clone(), deltas);
            }
        }
        Self {
            run_a: a.run_id,
            run_b: b.run_id,
            parameter_diff,
            metric_diff,
            same_workflow: a.workflow_snapshot.content_hash == b.workflow_snapshot.content_hash,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.parameter_diff.is_empty() && self.metric_diff.is_empty()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("compare {} .. {}\n", self.run_a, self.run_b);
        if !self.same_workflow {
            out.push_str("note: the runs used different workflow snapshots\n");
        }
        if self.is_empty() {
            out.push_str("no differences\n");
            return out;
        }
        if !self.parameter_diff.is_empty() {
            out.push_str("parameters\n");
            for (k, (a, b)) in &self.parameter_diff {
                out.push_str(&format!("  {k}: {a} -> {b}\n"));
            }
        }
        if !self.metric_diff.is_empty() {
            out.push_str("metrics\n");
            for (step, deltas) in &self.metric_diff {
                for (k, d) in deltas {
                    out.push_str(&format!("  {step}.{k}: {} -> {} ({:+})\n", d.a, d.b, d.delta));
                }
            }
        }
        out
    }
}
