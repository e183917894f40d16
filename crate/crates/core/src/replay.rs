//! Scripted session replay.
//!
//! A script pairs planner rules with an ordered list of turns. Each turn runs
//! one or more operations against a [`Gate`] and then compares what happened
//! with the turn's `expect` block. Replay stops at the first divergence.
//!
//! ```json
//! {
//!   "seed": 0,
//!   "planner": [{"match": {"exact": "hi"}, "decision": {"assistant_message": "hello"}}],
//!   "turns": [
//!     {"actor": "user", "label": "greeting", "ops": [{"op": "say", "text": "hi"}],
//!      "expect": {"action": null}}
//!   ]
//! }
//! ```
//!
//! Expectation keys: `action`, `outcome`, `error`, `prompts`, `state`,
//! `gate`, `top_result`, `required`, `run_status`, `metrics`,
//! `changed_parameters`, `runs`, `parameter_diff`, `metric_diff_empty`.
//! Only the keys present are compared, except `error`: an operation that
//! fails when the turn does not expect an error is always a divergence.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use uuid::Uuid;

use crate::gate::{Gate, GateError, InvocationState, Planner, ScriptRule, ScriptedPlanner, StepOutcome};
use crate::schema::{literal_eq, Version};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub planner: Vec<ScriptRule>,
    #[serde(default)]
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    #[serde(default)]
    pub turn: Option<u32>,
    pub actor: String,
    /// Text for the action column; defaults to the action performed.
    #[serde(default)]
    pub label: Option<String>,
    pub ops: Vec<Op>,
    #[serde(default)]
    pub expect: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Op {
    /// A user message followed by one planner turn.
    Say { text: String },
    /// A planner turn with no new user message.
    Advance,
    Select {
        workflow_id: String,
        #[serde(default)]
        version: Option<Version>,
    },
    /// Applies parameter updates to the latest invocation.
    Clarify { parameters: Map<String, Value> },
    Validate,
    Approve {
        #[serde(default = "default_approver")]
        approver: String,
    },
    Dispatch,
    /// Waits for the most recent run to finish.
    Observe {
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    /// Compares the two most recent runs.
    Compare,
}

fn default_approver() -> String {
    "scientist".into()
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script is not valid JSON: {0}")]
    Syntax(String),
    #[error("bad planner rules: {0}")]
    Planner(String),
}

impl Script {
    /// Blank text is the empty script.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_json::from_str(text).map_err(|e| ScriptError::Syntax(e.to_string()))
    }

    pub fn planner(&self) -> Result<ScriptedPlanner, ScriptError> {
        ScriptedPlanner::new(self.planner.clone()).map_err(ScriptError::Planner)
    }
}

/// One rendered row of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRow {
    pub turn: u32,
    pub actor: String,
    pub action: String,
    pub detail: String,
    pub schema_gate: String,
    pub observed: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Difference {
    pub key: String,
    pub expected: Value,
    pub actual: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub turn: u32,
    pub differences: Vec<Difference>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub session_id: Uuid,
    pub rows: Vec<TurnRow>,
    pub run_ids: Vec<Uuid>,
    pub divergence: Option<Divergence>,
}

impl Transcript {
    pub fn completed(&self) -> bool {
        self.divergence.is_none()
    }

    /// Turn, actor, action, detail and schema-gate columns, then the
    /// divergence if there was one.
    pub fn render_table(&self) -> String {
        let headers = ["Turn", "Actor", "Action / Tool Call", "Detail", "Schema Gate"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| [r.turn.to_string(), r.actor.clone(), r.action.clone(), r.detail.clone(), r.schema_gate.clone()])
            .collect();
        let mut widths = headers.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cols: [&str; 5]| {
            let padded: Vec<String> = cols.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = line(headers);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        for row in &cells {
            out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
        }
        match &self.divergence {
            None => {
                let _ = writeln!(out, "\n{} turn(s) replayed, {} run(s) created", self.rows.len(), self.run_ids.len());
            }
            Some(d) => {
                let _ = writeln!(out, "\ndivergence at turn {}:", d.turn);
                for diff in &d.differences {
                    let _ = writeln!(out, "  {}: expected {} actual {}", diff.key, diff.expected, diff.actual);
                }
            }
        }
        out
    }
}

/// Plays `script` against `gate` in a fresh session.
pub fn replay(gate: &Gate, script: &Script) -> Result<Transcript, ScriptError> {
    let planner = script.planner()?;
    let session_id = gate.open_session().session_id;
    let mut transcript = Transcript { session_id, rows: Vec::new(), run_ids: Vec::new(), divergence: None };
    for (index, turn) in script.turns.iter().enumerate() {
        let number = turn.turn.unwrap_or(index as u32 + 1);
        let mut turn_state = TurnState::default();
        for op in &turn.ops {
            run_op(gate, session_id, &planner, op, &mut turn_state);
        }
        let action = turn.label.clone().or_else(|| turn_state.actions.first().cloned()).unwrap_or_else(|| "---".into());
        let detail = nonempty(&turn_state.details);
        let schema_gate = nonempty(&turn_state.gates);
        let observed = turn_state.observed(gate, session_id);
        let differences = diff(&turn.expect, &observed);
        transcript.rows.push(TurnRow { turn: number, actor: turn.actor.clone(), action, detail, schema_gate, observed });
        if !differences.is_empty() {
            transcript.divergence = Some(Divergence { turn: number, differences });
            break;
        }
    }
    transcript.run_ids = gate.session(session_id).map(|s| s.last_run_ids).unwrap_or_default();
    Ok(transcript)
}

fn nonempty(parts: &[String]) -> String {
    if parts.is_empty() {
        "---".into()
    } else {
        parts.join("; ")
    }
}

#[derive(Default)]
struct TurnState {
    actions: Vec<String>,
    details: Vec<String>,
    gates: Vec<String>,
    facts: Map<String, Value>,
    error: Option<String>,
}

impl TurnState {
    fn fail(&mut self, error: &GateError) {
        if self.error.is_none() {
            self.error = Some(error.code().to_string());
        }
    }

    fn observed(mut self, gate: &Gate, session_id: Uuid) -> Map<String, Value> {
        if let Ok(session) = gate.session(session_id) {
            if let Some(entry) = session.latest_invocation() {
                self.facts.insert("state".into(), json!(entry.invocation.state));
            }
            self.facts.insert("runs".into(), json!(session.last_run_ids.len()));
        }
        self.facts.insert("error".into(), self.error.map(Value::String).unwrap_or(Value::Null));
        self.facts
    }
}

fn short(id: Uuid) -> String {
    id.simple().to_string()[..8].to_string()
}

fn latest_invocation(gate: &Gate, session_id: Uuid) -> Option<Uuid> {
    gate.session(session_id).ok()?.latest_invocation().map(|e| e.invocation.invocation_id)
}

fn prompt_names(prompts: &[crate::gate::ClarificationPrompt]) -> Value {
    json!(prompts.iter().map(|p| p.parameter.clone()).collect::<Vec<_>>())
}

fn list(v: &Value) -> String {
    match v.as_array() {
        Some(items) if items.is_empty() => "none".into(),
        Some(items) => items.iter().map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string())).collect::<Vec<_>>().join(", "),
        None => v.to_string(),
    }
}

fn state_gate(state: InvocationState, prompts: usize) -> String {
    match state {
        InvocationState::Draft => format!("draft, {prompts} prompt(s)"),
        other => other.to_string(),
    }
}

fn run_op(gate: &Gate, session_id: Uuid, planner: &dyn Planner, op: &Op, t: &mut TurnState) {
    match op {
        Op::Say { text } => {
            t.details.push(format!("\"{text}\""));
            planner_turn(gate, session_id, Some(text), planner, t);
        }
        Op::Advance => planner_turn(gate, session_id, None, planner, t),
        Op::Select { workflow_id, version } => match gate.select_workflow(session_id, workflow_id, *version) {
            Ok(sel) => {
                t.actions.push("select_workflow".into());
                t.details.push(format!("selected {} {}", sel.workflow_id, sel.version));
                t.facts.insert("selected".into(), json!(sel.workflow_id));
            }
            Err(e) => {
                t.details.push(format!("select refused: {e}"));
                t.fail(&e);
            }
        },
        Op::Clarify { parameters } => {
            let Some(iid) = latest_invocation(gate, session_id) else {
                t.details.push("nothing to clarify".into());
                t.fail(&GateError::NothingToAmend);
                return;
            };
            t.actions.push("clarify".into());
            match gate.clarify(session_id, iid, parameters.clone()) {
                Ok(p) => {
                    let names: Vec<&String> = parameters.keys().collect();
                    t.details.push(format!(
                        "set {}",
                        names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                    ));
                    t.gates.push(state_gate(p.invocation.state, p.prompts.len()));
                    t.facts.insert("prompts".into(), prompt_names(&p.prompts));
                }
                Err(e) => {
                    t.details.push(format!("clarify refused: {e}"));
                    t.fail(&e);
                }
            }
        }
        Op::Validate => {
            let Some(iid) = latest_invocation(gate, session_id) else {
                t.fail(&GateError::NothingToAmend);
                return;
            };
            t.actions.push("validate".into());
            match gate.validate(session_id, iid) {
                Ok(p) => {
                    let problems = p.prompts.len() + p.workflow_diagnostics.len();
                    t.details.push(if problems == 0 {
                        "types, ranges and workflow structure check out".into()
                    } else {
                        format!("{problems} problem(s): {}", list(&prompt_names(&p.prompts)))
                    });
                    t.gates.push(state_gate(p.invocation.state, p.prompts.len()));
                    t.facts.insert("prompts".into(), prompt_names(&p.prompts));
                }
                Err(e) => {
                    t.details.push(format!("validate refused: {e}"));
                    t.fail(&e);
                }
            }
        }
        Op::Approve { approver } => {
            let Some(iid) = latest_invocation(gate, session_id) else {
                t.fail(&GateError::NothingToAmend);
                return;
            };
            t.actions.push("approve".into());
            match gate.approve(session_id, iid, approver) {
                Ok(_) => t.details.push(format!("approved by {approver}")),
                Err(e) => {
                    t.details.push(format!("approval refused: {}", e.code()));
                    t.gates.push(format!("approval blocked ({})", e.code()));
                    t.fail(&e);
                }
            }
        }
        Op::Dispatch => {
            let Some(iid) = latest_invocation(gate, session_id) else {
                t.fail(&GateError::NothingToAmend);
                return;
            };
            t.actions.push("execute_workflow".into());
            match gate.dispatch(session_id, iid) {
                Ok(run_id) => {
                    t.details.push(format!("dispatched run {}", short(run_id)));
                    t.gates.push("passed".into());
                    t.facts.insert("gate".into(), json!("passed"));
                }
                Err(e) => {
                    t.details.push(format!("dispatch blocked ({})", e.code()));
                    t.gates.push(format!("blocked ({})", e.code()));
                    t.facts.insert("gate".into(), json!("blocked"));
                    t.fail(&e);
                }
            }
        }
        Op::Observe { timeout_ms } => {
            let Some(run_id) = gate.session(session_id).ok().and_then(|s| s.last_run_ids.last().copied()) else {
                t.details.push("no run to observe".into());
                t.fail(&GateError::ExecutorUnavailable("no run dispatched".into()));
                return;
            };
            t.actions.push("observe_run".into());
            match gate.observe_run(session_id, run_id, Duration::from_millis(*timeout_ms)) {
                Ok(record) => {
                    let mut metric_names = BTreeSet::new();
                    let mut parts = vec![format!("run {} {}", short(run_id), record.status)];
                    for step in &record.steps {
                        if let Some(m) = &step.metrics {
                            let rendered: Vec<String> = m
                                .iter()
                                .map(|(k, v)| {
                                    metric_names.insert(k.clone());
                                    match v.as_f64() {
                                        Some(x) => format!("{k}={x:.3}"),
                                        None => format!("{k}={v}"),
                                    }
                                })
                                .collect();
                            parts.push(rendered.join(" "));
                        }
                        if let Some(best) = step.outputs.get("best_candidate") {
                            if let Some(comp) = best.get("composition") {
                                parts.push(format!("top candidate {comp}"));
                            }
                        }
                    }
                    if let Some(f) = &record.failure {
                        parts.push(format!("failed at {}: {}", f.step_id, f.message));
                    }
                    t.details.push(parts.join("; "));
                    t.facts.insert("run_status".into(), json!(record.status.as_str()));
                    t.facts.insert("metrics".into(), json!(metric_names));
                }
                Err(e) => {
                    t.details.push(format!("observe failed: {e}"));
                    t.fail(&e);
                }
            }
        }
        Op::Compare => {
            let runs = gate.session(session_id).map(|s| s.last_run_ids).unwrap_or_default();
            if runs.len() < 2 {
                t.details.push("fewer than two runs to compare".into());
                t.fail(&GateError::ExecutorUnavailable("fewer than two runs".into()));
                return;
            }
            let (a, b) = (runs[runs.len() - 2], runs[runs.len() - 1]);
            t.actions.push("compare_runs".into());
            match gate.executor().compare_runs(a, b) {
                Ok(c) => {
                    let rows: Vec<String> =
                        c.parameter_diff.iter().map(|(k, (x, y))| format!("{k}: {x} -> {y}")).collect();
                    t.details.push(format!(
                        "runs {} vs {}: {}",
                        short(a),
                        short(b),
                        if rows.is_empty() { "no parameter differences".into() } else { rows.join(", ") }
                    ));
                    let diff: Map<String, Value> =
                        c.parameter_diff.iter().map(|(k, (x, y))| (k.clone(), json!([x, y]))).collect();
                    t.facts.insert("parameter_diff".into(), Value::Object(diff));
                    t.facts.insert("metric_diff_empty".into(), json!(c.metric_diff.is_empty()));
                    t.facts.insert("same_workflow".into(), json!(c.same_workflow));
                }
                Err(e) => {
                    t.details.push(format!("compare failed: {e}"));
                    t.fail(&GateError::ExecutorUnavailable(e.to_string()));
                }
            }
        }
    }
}

fn planner_turn(gate: &Gate, session_id: Uuid, text: Option<&str>, planner: &dyn Planner, t: &mut TurnState) {
    match gate.step(session_id, text, planner) {
        Ok(outcome) => describe_step(gate, session_id, &outcome, t),
        Err(e) => {
            if let Ok(s) = gate.session(session_id) {
                if let Some(last) = s.action_log.last() {
                    t.actions.push(last.action.clone());
                    t.facts.insert("action".into(), json!(last.action));
                }
            }
            t.facts.insert("outcome".into(), json!("refused"));
            t.details.push(format!("refused: {e}"));
            t.gates.push(format!("rejected ({})", e.code()));
            t.fail(&e);
        }
    }
}

fn describe_step(gate: &Gate, session_id: Uuid, outcome: &StepOutcome, t: &mut TurnState) {
    let Some(action) = &outcome.action else {
        if !t.facts.contains_key("action") {
            t.facts.insert("action".into(), Value::Null);
        }
        return;
    };
    t.actions.push(action.clone());
    t.facts.insert("action".into(), json!(action));
    t.facts.insert("outcome".into(), json!("executed"));
    let result = outcome.result.clone().unwrap_or(Value::Null);
    match action.as_str() {
        "search_workflows" => {
            let hits = result["results"].as_array().cloned().unwrap_or_default();
            let top = hits.first().map(|h| h["workflow_id"].clone()).unwrap_or(Value::Null);
            let names: Vec<String> = hits
                .iter()
                .map(|h| format!("{} v{}", h["name"].as_str().unwrap_or_default(), h["version"].as_str().unwrap_or_default()))
                .collect();
            t.details.push(format!("{} ranked candidate(s): {}", hits.len(), names.join(", ")));
            t.gates.push("query arguments valid".into());
            t.facts.insert("top_result".into(), top);
        }
        "get_parameters" => {
            t.details.push(format!("required: {}", list(&result["required"])));
            t.gates.push("workflow id valid".into());
            t.facts.insert("required".into(), result["required"].clone());
        }
        "list_datasets" => {
            let n = result["datasets"].as_array().map_or(0, Vec::len);
            t.details.push(format!("{n} dataset(s)"));
            t.gates.push("arguments valid".into());
        }
        "execute_workflow" => {
            let prompts = prompt_names(&outcome.prompts);
            if let Some(inv) = &outcome.invocation {
                t.details.push(format!("invocation {} {}; prompts: {}", short(inv.invocation_id), inv.state, list(&prompts)));
                t.gates.push(state_gate(inv.state, outcome.prompts.len()));
                if let Some(parent) = inv.parent_invocation {
                    let changed = changed_parameters(gate, session_id, parent, &inv.parameters);
                    t.details.push(format!("changed from parent: {}", list(&changed)));
                    t.facts.insert("changed_parameters".into(), changed);
                }
            }
            t.facts.insert("prompts".into(), prompts);
        }
        _ => {}
    }
}

fn changed_parameters(gate: &Gate, session_id: Uuid, parent: Uuid, current: &Map<String, Value>) -> Value {
    let Ok(session) = gate.session(session_id) else {
        return Value::Null;
    };
    let Some(prior) = session.invocation(parent) else {
        return Value::Null;
    };
    let before = &prior.invocation.parameters;
    let keys: BTreeSet<&String> = before.keys().chain(current.keys()).collect();
    let changed: Vec<&String> = keys
        .into_iter()
        .filter(|k| match (before.get(*k), current.get(*k)) {
            (Some(a), Some(b)) => !literal_eq(a, b),
            _ => true,
        })
        .collect();
    json!(changed)
}

fn diff(expect: &Map<String, Value>, observed: &Map<String, Value>) -> Vec<Difference> {
    let mut out = Vec::new();
    for (key, expected) in expect {
        let actual = observed.get(key).cloned().unwrap_or(Value::Null);
        if !literal_eq(expected, &actual) {
            out.push(Difference { key: key.clone(), expected: expected.clone(), actual });
        }
    }
    if !expect.contains_key("error") {
        if let Some(actual @ Value::String(_)) = observed.get("error") {
            out.push(Difference { key: "error".into(), expected: Value::Null, actual: actual.clone() });
        }
    }
    out
}
