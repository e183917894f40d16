//! The orchestration controller.
//!
//! A planner proposes; the gate decides. Read-only platform actions run at
//! once. `execute_workflow` proposals only ever create invocation objects,
//! which move through draft, validated and approved before [`Gate::dispatch`]
//! re-validates them against the live registry and hands a
//! [`DispatchTicket`] to the executor. No other code path can mint a ticket.

pub mod actions;
mod invocation;
pub mod planner;
pub mod remote;
mod session;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Map, Value};
use uuid::Uuid;

pub use actions::{catalog, parse_action, BaseInvocation, PlatformAction};
pub use invocation::{ClarificationPrompt, DispatchTicket, InvocationObject, InvocationState, PromptReason};
pub use planner::{Planner, PlannerDecision, PlannerError, ProposedAction, ScriptRule, ScriptedPlanner};
pub use session::{
    ActionLogEntry, ActionOutcome, InvocationEntry, Message, Role, SelectedWorkflow, SessionContext,
};

use crate::clock::{Clock, IdSource, RandomIds, SystemClock};
use crate::executor::{Executor, ExecutorError, RunRecord};
use crate::registry::{Registry, RegistryError, VersionReq};
use crate::schema::{
    content_hash, literal_eq, parameters_document, render_canonical, validate_value, Check, Diagnostic,
    ParameterDefinition, Version, WorkflowDefinition,
};

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("session {0} not found")]
    SessionNotFound(Uuid),
    #[error("invocation {0} not found in this session")]
    InvocationNotFound(Uuid),
    #[error(transparent)]
    NotFound(RegistryError),
    #[error("unknown parameter(s) for {workflow_id}: {}", names.join(", "))]
    UnknownParameter { workflow_id: String, names: Vec<String> },
    #[error("invocation {invocation_id} is {state}; it must be validated first")]
    NotValidated { invocation_id: Uuid, state: InvocationState },
    #[error("invocation {invocation_id} is {state}; only an approved invocation can be dispatched")]
    NotApproved { invocation_id: Uuid, state: InvocationState },
    #[error("invocation {0} has already been dispatched")]
    AlreadyDispatched(Uuid),
    #[error("invocation no longer validates against the registry; nothing was run")]
    GateRegression { diagnostics: Vec<Diagnostic> },
    #[error("executor unavailable: {0}")]
    ExecutorUnavailable(String),
    #[error("action proposal rejected")]
    ActionRejected { diagnostics: Vec<Diagnostic> },
    #[error("planner unavailable: {0}")]
    PlannerUnavailable(String),
    #[error("no invocation to amend")]
    NothingToAmend,
}

impl GateError {
    /// Stable identifier for the wire and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            GateError::SessionNotFound(_) | GateError::InvocationNotFound(_) | GateError::NotFound(_) => "not_found",
            GateError::UnknownParameter { .. } => "unknown_parameter",
            GateError::NotValidated { .. } => "not_validated",
            GateError::NotApproved { .. } => "not_approved",
            GateError::AlreadyDispatched(_) => "already_dispatched",
            GateError::GateRegression { .. } => "gate_regression",
            GateError::ExecutorUnavailable(_) => "executor_unavailable",
            GateError::ActionRejected { .. } => "action_argument_error",
            GateError::PlannerUnavailable(_) => "planner_unavailable",
            GateError::NothingToAmend => "nothing_to_amend",
        }
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            GateError::GateRegression { diagnostics } | GateError::ActionRejected { diagnostics } => diagnostics,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GateConfig {
    /// Lets `dispatch` accept a validated invocation without a separate
    /// approval. Off by default.
    pub auto_approve: bool,
    /// Seed handed to every run.
    pub seed: u64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { auto_approve: false, seed: 0 }
    }
}

/// An invocation plus what stands between it and dispatch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub invocation: InvocationObject,
    pub prompts: Vec<ClarificationPrompt>,
    /// Workflow-level validation errors (a tool retired since admission, for
    /// instance). Non-empty keeps the invocation in draft.
    pub workflow_diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub assistant_message: String,
    pub action: Option<String>,
    pub result: Option<Value>,
    pub prompts: Vec<ClarificationPrompt>,
    pub invocation: Option<InvocationObject>,
}

pub struct Gate {
    registry: Arc<Registry>,
    executor: Executor,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    config: GateConfig,
    sessions: Mutex<BTreeMap<Uuid, Arc<Mutex<SessionContext>>>>,
}

impl Gate {
    pub fn new(registry: Arc<Registry>, executor: Executor) -> Self {
        Self {
            registry,
            executor,
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
            config: GateConfig::default(),
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn with_config(mut self, config: GateConfig) -> Self {
        self.config = config;
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn config(&self) -> GateConfig {
        self.config
    }

    // -- sessions ------------------------------------------------------------

    pub fn open_session(&self) -> SessionContext {
        let session = SessionContext::new(self.ids.next_id(), self.clock.now());
        self.sessions.lock().unwrap().insert(session.session_id, Arc::new(Mutex::new(session.clone())));
        session
    }

    pub fn session(&self, id: Uuid) -> Result<SessionContext, GateError> {
        Ok(self.handle(id)?.lock().unwrap().clone())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn handle(&self, id: Uuid) -> Result<Arc<Mutex<SessionContext>>, GateError> {
        self.sessions.lock().unwrap().get(&id).cloned().ok_or(GateError::SessionNotFound(id))
    }

    /// Runs `f` with the session locked, so operations on one session are
    /// serialised.
    fn with_session<T>(&self, id: Uuid, f: impl FnOnce(&mut SessionContext) -> Result<T, GateError>) -> Result<T, GateError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().unwrap();
        f(&mut session)
    }

    fn log(&self, s: &mut SessionContext, action: &str, arguments: Value, outcome: ActionOutcome, result: &Value) {
        s.action_log.push(ActionLogEntry {
            seq: s.action_log.len() as u64,
            action: action.to_string(),
            arguments,
            outcome,
            result_digest: content_hash(&render_canonical(result)),
            at: self.clock.now(),
        });
    }

    fn refuse(&self, s: &mut SessionContext, action: &str, arguments: Value, error: &GateError) {
        let result = json!({"error": error.code(), "message": error.to_string(), "diagnostics": error.diagnostics()});
        self.log(s, action, arguments, ActionOutcome::Refused, &result);
    }

    // -- conversation --------------------------------------------------------

    /// One conversational turn: appends `user_message` (if any), asks the
    /// planner for a decision and acts on its proposal. Results and refusals
    /// are appended to the session as system messages.
    pub fn step(&self, session_id: Uuid, user_message: Option<&str>, planner: &dyn Planner) -> Result<StepOutcome, GateError> {
        self.with_session(session_id, |s| {
            if let Some(text) = user_message {
                s.say(Role::User, text);
            }
            let decision = match planner.decide(s) {
                Ok(d) => d,
                Err(e) => {
                    s.say(Role::System, format!("[planner unavailable] {}", e.0));
                    return Err(GateError::PlannerUnavailable(e.0));
                }
            };
            if !decision.assistant_message.is_empty() {
                s.say(Role::Assistant, decision.assistant_message.clone());
            }
            let mut outcome = StepOutcome {
                assistant_message: decision.assistant_message.clone(),
                action: None,
                result: None,
                prompts: Vec::new(),
                invocation: None,
            };
            let Some(proposed) = decision.proposed_action else {
                return Ok(outcome);
            };
            outcome.action = Some(proposed.action.clone());
            let arguments = Value::Object(proposed.arguments.clone());
            let action = match parse_action(&proposed.action, &proposed.arguments) {
                Ok(a) => a,
                Err(diagnostics) => {
                    let error = GateError::ActionRejected { diagnostics };
                    self.refuse(s, &proposed.action, arguments, &error);
                    s.say(
                        Role::System,
                        format!("[refused {}] {}", proposed.action, crate::schema::render_diagnostics(error.diagnostics()).trim_end()),
                    );
                    return Err(error);
                }
            };
            match self.perform(s, &action) {
                Ok((result, proposal)) => {
                    self.log(s, action.name(), arguments, ActionOutcome::Executed, &result);
                    s.say(Role::System, format!("[result {}] {}", action.name(), serde_json::to_string(&result).unwrap_or_default()));
                    if let Some(p) = proposal {
                        outcome.prompts = p.prompts;
                        outcome.invocation = Some(p.invocation);
                    }
                    outcome.result = Some(result);
                    Ok(outcome)
                }
                Err(error) => {
                    self.refuse(s, action.name(), arguments, &error);
                    s.say(Role::System, format!("[refused {}] {error}", action.name()));
                    Err(error)
                }
            }
        })
    }

    fn perform(&self, s: &mut SessionContext, action: &PlatformAction) -> Result<(Value, Option<Proposal>), GateError> {
        match action {
            PlatformAction::SearchWorkflows { query, tags } => {
                let hits = self.registry.search_workflows(query, tags);
                Ok((json!({ "results": hits }), None))
            }
            PlatformAction::GetParameters { workflow_id, version } => {
                let wf = self.registry.workflow(workflow_id, (*version).into()).map_err(GateError::NotFound)?;
                Ok((parameter_schema(&wf), None))
            }
            PlatformAction::ListDatasets => Ok((json!({ "datasets": self.registry.list_datasets() }), None)),
            PlatformAction::ExecuteWorkflow { workflow_id, version, parameters, base_invocation } => {
                let proposal = match base_invocation {
                    None => self.create(s, workflow_id, *version, parameters.clone(), None)?,
                    Some(base) => {
                        let prior = match base {
                            BaseInvocation::Latest => {
                                s.latest_invocation().map(|e| e.invocation.invocation_id).ok_or(GateError::NothingToAmend)?
                            }
                            BaseInvocation::Id(id) => *id,
                        };
                        self.amend_in(s, prior, parameters)?
                    }
                };
                Ok((proposal_document(&proposal), Some(proposal)))
            }
        }
    }

    /// Records the workflow the user picked.
    pub fn select_workflow(&self, session_id: Uuid, workflow_id: &str, version: Option<Version>) -> Result<SelectedWorkflow, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"workflow_id": workflow_id, "version": version});
            let wf = match self.registry.workflow(workflow_id, version.into()) {
                Ok(wf) => wf,
                Err(e) => {
                    let error = GateError::NotFound(e);
                    self.refuse(s, "select_workflow", arguments, &error);
                    return Err(error);
                }
            };
            let selected = SelectedWorkflow { workflow_id: wf.workflow_id.clone(), version: wf.version };
            s.selected_workflow = Some(selected.clone());
            self.log(s, "select_workflow", arguments, ActionOutcome::Executed, &serde_json::to_value(&selected).unwrap());
            Ok(selected)
        })
    }

    // -- invocations ---------------------------------------------------------

    /// Builds a draft invocation; it becomes validated at once when nothing
    /// is missing or invalid.
    pub fn propose(
        &self,
        session_id: Uuid,
        workflow_id: &str,
        version: Option<Version>,
        parameters: Map<String, Value>,
    ) -> Result<Proposal, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"workflow_id": workflow_id, "version": version, "parameters": parameters});
            match self.create(s, workflow_id, version, parameters, None) {
                Ok(p) => {
                    self.log(s, "propose", arguments, ActionOutcome::Executed, &proposal_document(&p));
                    Ok(p)
                }
                Err(e) => {
                    self.refuse(s, "propose", arguments, &e);
                    Err(e)
                }
            }
        })
    }

    fn create(
        &self,
        s: &mut SessionContext,
        workflow_id: &str,
        version: Option<Version>,
        parameters: Map<String, Value>,
        parent: Option<Uuid>,
    ) -> Result<Proposal, GateError> {
        let wf = self.registry.workflow(workflow_id, version.into()).map_err(GateError::NotFound)?;
        check_known(&wf, &parameters)?;
        let parameters = strip_nulls(parameters);
        let (prompts, workflow_diagnostics) = self.evaluate(&wf, &parameters);
        let valid = prompts.is_empty() && workflow_diagnostics.is_empty();
        let invocation = InvocationObject {
            invocation_id: self.ids.next_id(),
            workflow_id: wf.workflow_id.clone(),
            version: wf.version,
            parameters,
            state: if valid { InvocationState::Validated } else { InvocationState::Draft },
            created_at: self.clock.now(),
            parent_invocation: parent,
        };
        let mut history = vec![InvocationState::Draft];
        if valid {
            history.push(InvocationState::Validated);
        }
        s.invocations.push(InvocationEntry {
            invocation: invocation.clone(),
            history,
            prompts: prompts.clone(),
            approved_by: None,
            approved_at: None,
            run_id: None,
        });
        s.refresh_pending();
        Ok(Proposal { invocation, prompts, workflow_diagnostics })
    }

    fn evaluate(&self, wf: &WorkflowDefinition, parameters: &Map<String, Value>) -> (Vec<ClarificationPrompt>, Vec<Diagnostic>) {
        let prompts = clarification_prompts(wf, parameters);
        let report = self.registry.validate_workflow(wf);
        let errors = report.errors().into_iter().cloned().collect();
        (prompts, errors)
    }

    /// Sets parameters on an existing invocation and re-validates it. A
    /// `null` value removes the parameter. Any actual change sends a
    /// validated or approved invocation back to draft first.
    pub fn clarify(&self, session_id: Uuid, invocation_id: Uuid, updates: Map<String, Value>) -> Result<Proposal, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"invocation_id": invocation_id, "parameters": updates});
            match self.clarify_in(s, invocation_id, &updates) {
                Ok(p) => {
                    self.log(s, "clarify", arguments, ActionOutcome::Executed, &proposal_document(&p));
                    Ok(p)
                }
                Err(e) => {
                    self.refuse(s, "clarify", arguments, &e);
                    Err(e)
                }
            }
        })
    }

    /// Re-runs validation on an invocation without changing it.
    pub fn validate(&self, session_id: Uuid, invocation_id: Uuid) -> Result<Proposal, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"invocation_id": invocation_id});
            match self.clarify_in(s, invocation_id, &Map::new()) {
                Ok(p) => {
                    self.log(s, "validate", arguments, ActionOutcome::Executed, &proposal_document(&p));
                    Ok(p)
                }
                Err(e) => {
                    self.refuse(s, "validate", arguments, &e);
                    Err(e)
                }
            }
        })
    }

    fn clarify_in(&self, s: &mut SessionContext, invocation_id: Uuid, updates: &Map<String, Value>) -> Result<Proposal, GateError> {
        let entry = s.invocation(invocation_id).ok_or(GateError::InvocationNotFound(invocation_id))?;
        let current = entry.invocation.clone();
        if current.state == InvocationState::Dispatched {
            return Err(GateError::AlreadyDispatched(invocation_id));
        }
        let wf = self
            .registry
            .workflow(&current.workflow_id, VersionReq::Exact(current.version))
            .map_err(GateError::NotFound)?;
        check_known(&wf, updates)?;
        let merged = merge(&current.parameters, updates);
        let changed = !literal_eq(&Value::Object(merged.clone()), &Value::Object(current.parameters.clone()));
        let (prompts, workflow_diagnostics) = self.evaluate(&wf, &merged);
        let valid = prompts.is_empty() && workflow_diagnostics.is_empty();

        let entry = s.invocation_mut(invocation_id).expect("looked up above");
        let mut state = entry.invocation.state;
        if (changed || !valid) && state != InvocationState::Draft {
            state = InvocationState::Draft;
            entry.history.push(state);
            entry.approved_by = None;
            entry.approved_at = None;
        }
        if valid && state == InvocationState::Draft {
            state = InvocationState::Validated;
            entry.history.push(state);
        }
        entry.invocation.parameters = merged;
        entry.invocation.state = state;
        entry.prompts = prompts.clone();
        let invocation = entry.invocation.clone();
        s.refresh_pending();
        Ok(Proposal { invocation, prompts, workflow_diagnostics })
    }

    /// Approves a validated invocation. Approving an approved one is a no-op.
    pub fn approve(&self, session_id: Uuid, invocation_id: Uuid, approver: &str) -> Result<InvocationObject, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"invocation_id": invocation_id, "approver": approver});
            let entry = s.invocation(invocation_id).ok_or(GateError::InvocationNotFound(invocation_id))?;
            let state = entry.invocation.state;
            match state {
                InvocationState::Approved => return Ok(entry.invocation.clone()),
                InvocationState::Validated => {}
                InvocationState::Draft => {
                    let e = GateError::NotValidated { invocation_id, state };
                    self.refuse(s, "approve", arguments, &e);
                    return Err(e);
                }
                InvocationState::Dispatched => {
                    let e = GateError::AlreadyDispatched(invocation_id);
                    self.refuse(s, "approve", arguments, &e);
                    return Err(e);
                }
            }
            let now = self.clock.now();
            let entry = s.invocation_mut(invocation_id).expect("looked up above");
            entry.invocation.state = InvocationState::Approved;
            entry.history.push(InvocationState::Approved);
            entry.approved_by = Some(approver.to_string());
            entry.approved_at = Some(now);
            let invocation = entry.invocation.clone();
            s.refresh_pending();
            let result = json!({"invocation_id": invocation_id, "state": "approved", "approver": approver, "approved_at": now});
            self.log(s, "approve", arguments, ActionOutcome::Executed, &result);
            Ok(invocation)
        })
    }

    /// The only way to start a run. Requires an approved invocation (or a
    /// validated one under `auto_approve`), re-validates it against the
    /// current registry, and submits a snapshot to the executor.
    pub fn dispatch(&self, session_id: Uuid, invocation_id: Uuid) -> Result<Uuid, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"invocation_id": invocation_id});
            match self.dispatch_in(s, invocation_id) {
                Ok(run_id) => {
                    self.log(s, "dispatch", arguments, ActionOutcome::Executed, &json!({"run_id": run_id}));
                    s.say(Role::System, format!("[dispatched] run {run_id}"));
                    Ok(run_id)
                }
                Err(e) => {
                    self.refuse(s, "dispatch", arguments, &e);
                    Err(e)
                }
            }
        })
    }

    fn dispatch_in(&self, s: &mut SessionContext, invocation_id: Uuid) -> Result<Uuid, GateError> {
        let entry = s.invocation(invocation_id).ok_or(GateError::InvocationNotFound(invocation_id))?;
        let invocation = entry.invocation.clone();
        let auto = self.config.auto_approve && invocation.state == InvocationState::Validated;
        match invocation.state {
            InvocationState::Approved => {}
            InvocationState::Validated if auto => {}
            InvocationState::Dispatched => return Err(GateError::AlreadyDispatched(invocation_id)),
            InvocationState::Draft => {
                return Err(GateError::NotValidated { invocation_id, state: InvocationState::Draft })
            }
            state => return Err(GateError::NotApproved { invocation_id, state }),
        }

        let regression = |diagnostics: Vec<Diagnostic>| GateError::GateRegression { diagnostics };
        let wf = self
            .registry
            .workflow(&invocation.workflow_id, VersionReq::Exact(invocation.version))
            .map_err(|e| regression(vec![Diagnostic::error(Check::ToolAvailability, "workflow_id", e.to_string())]))?;
        let prompts = clarification_prompts(&wf, &invocation.parameters);
        if !prompts.is_empty() {
            let diags = prompts
                .iter()
                .map(|p| Diagnostic::error(Check::ParameterResolution, format!("parameters.{}", p.parameter), p.message.clone()))
                .collect();
            return Err(regression(diags));
        }
        let report = self.registry.validate_workflow(&wf);
        if !report.valid {
            return Err(regression(report.errors().into_iter().cloned().collect()));
        }
        let mut tools = BTreeMap::new();
        for step in &wf.steps {
            let tool = self.registry.tool(&step.tool_id, VersionReq::Latest).map_err(|e| {
                regression(vec![Diagnostic::error(Check::ToolAvailability, format!("steps.{}.tool_id", step.step_id), e.to_string())])
            })?;
            tools.insert(step.tool_id.clone(), tool);
        }

        let mut dispatched = invocation.clone();
        dispatched.state = InvocationState::Dispatched;
        let ticket = DispatchTicket::new(dispatched.clone(), wf, tools, self.config.seed, invocation.state);
        let run_id = self.executor.submit(ticket).map_err(|e| GateError::ExecutorUnavailable(e.to_string()))?;

        let now = self.clock.now();
        let entry = s.invocation_mut(invocation_id).expect("looked up above");
        if auto {
            entry.history.push(InvocationState::Approved);
            entry.approved_by = Some("auto_approve".into());
            entry.approved_at = Some(now);
        }
        entry.history.push(InvocationState::Dispatched);
        entry.invocation.state = InvocationState::Dispatched;
        entry.run_id = Some(run_id);
        s.last_run_ids.push(run_id);
        s.refresh_pending();
        Ok(run_id)
    }

    /// A new invocation from an earlier one with `overrides` applied (`null`
    /// removes a parameter), validated from scratch.
    pub fn amend(&self, session_id: Uuid, prior: Uuid, overrides: Map<String, Value>) -> Result<Proposal, GateError> {
        self.with_session(session_id, |s| {
            let arguments = json!({"base_invocation": prior, "parameters": overrides});
            match self.amend_in(s, prior, &overrides) {
                Ok(p) => {
                    self.log(s, "amend", arguments, ActionOutcome::Executed, &proposal_document(&p));
                    Ok(p)
                }
                Err(e) => {
                    self.refuse(s, "amend", arguments, &e);
                    Err(e)
                }
            }
        })
    }

    fn amend_in(&self, s: &mut SessionContext, prior: Uuid, overrides: &Map<String, Value>) -> Result<Proposal, GateError> {
        let base = s.invocation(prior).ok_or(GateError::InvocationNotFound(prior))?.invocation.clone();
        let wf = self
            .registry
            .workflow(&base.workflow_id, VersionReq::Exact(base.version))
            .map_err(GateError::NotFound)?;
        check_known(&wf, overrides)?;
        let merged = merge(&base.parameters, overrides);
        self.create(s, &base.workflow_id, Some(base.version), merged, Some(prior))
    }

    /// Waits for a run to finish and feeds its outcome back into the
    /// session as a system message.
    pub fn observe_run(&self, session_id: Uuid, run_id: Uuid, timeout: Duration) -> Result<RunRecord, GateError> {
        self.handle(session_id)?;
        let record = self.executor.wait(run_id, timeout).map_err(|e| match e {
            ExecutorError::NotFound(_) => GateError::ExecutorUnavailable(e.to_string()),
            other => GateError::ExecutorUnavailable(other.to_string()),
        })?;
        self.with_session(session_id, |s| {
            s.say(Role::System, run_feedback(&record));
            Ok(record)
        })
    }
}

/// `[run <id> <status>]` followed by step metrics and any failure.
pub fn run_feedback(record: &RunRecord) -> String {
    let mut parts = vec![format!("[run {} {}]", record.run_id, record.status)];
    for step in &record.steps {
        if let Some(m) = &step.metrics {
            parts.push(format!("{} metrics {}", step.step_id, Value::Object(m.clone())));
        }
        if let Some(best) = step.outputs.get("best_candidate") {
            parts.push(format!("{} best_candidate {best}", step.step_id));
        }
    }
    if let Some(f) = &record.failure {
        parts.push(format!("failed at {}: {}", f.step_id, f.message));
    }
    parts.join("; ")
}

/// The parameter schema document returned by `get_parameters`.
pub fn parameter_schema(wf: &WorkflowDefinition) -> Value {
    let required: Vec<&String> = wf.parameters.iter().filter(|(_, p)| p.is_required()).map(|(n, _)| n).collect();
    json!({
        "workflow_id": wf.workflow_id,
        "version": wf.version,
        "name": wf.name,
        "required": required,
        "parameters": parameters_document(&wf.parameters),
    })
}

fn proposal_document(p: &Proposal) -> Value {
    json!({
        "invocation_id": p.invocation.invocation_id,
        "workflow_id": p.invocation.workflow_id,
        "version": p.invocation.version,
        "state": p.invocation.state,
        "parent_invocation": p.invocation.parent_invocation,
        "parameters": p.invocation.parameters,
        "prompts": p.prompts,
        "workflow_diagnostics": p.workflow_diagnostics,
    })
}

fn check_known(wf: &WorkflowDefinition, parameters: &Map<String, Value>) -> Result<(), GateError> {
    let names: Vec<String> = parameters.keys().filter(|k| !wf.parameters.contains_key(*k)).cloned().collect();
    if names.is_empty() {
        Ok(())
    } else {
        Err(GateError::UnknownParameter { workflow_id: wf.workflow_id.clone(), names })
    }
}

fn strip_nulls(parameters: Map<String, Value>) -> Map<String, Value> {
    parameters.into_iter().filter(|(_, v)| !v.is_null()).collect()
}

/// `base` with `overrides` applied; a `null` override removes the key.
pub fn merge(base: &Map<String, Value>, overrides: &Map<String, Value>) -> Map<String, Value> {
    let mut out = base.clone();
    for (k, v) in overrides {
        if v.is_null() {
            out.remove(k);
        } else {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}

/// One prompt per defective workflow parameter, in declaration order.
pub fn clarification_prompts(wf: &WorkflowDefinition, parameters: &Map<String, Value>) -> Vec<ClarificationPrompt> {
    let mut prompts = Vec::new();
    for (name, param) in &wf.parameters {
        let value = parameters.get(name).unwrap_or(&Value::Null);
        let diags = validate_value(value, param);
        let Some(first) = diags.first() else {
            continue;
        };
        let reason = match first.check {
            Check::Required => PromptReason::Missing,
            Check::TypeMismatch => PromptReason::TypeMismatch,
            _ => PromptReason::ConstraintViolation,
        };
        let message = match reason {
            PromptReason::Missing => format!("Please provide `{name}`: {} ({})", param.description, expected(param)),
            _ => {
                let details: Vec<&str> = diags.iter().map(|d| d.message.as_str()).collect();
                format!("`{name}` is invalid: {}. Expected {}", details.join("; "), expected(param))
            }
        };
        prompts.push(ClarificationPrompt { parameter: name.clone(), reason, expected: expected(param), message });
    }
    prompts
}

/// The type and rules of a parameter, e.g. `string; one of: "a", "b"`.
pub fn expected(param: &ParameterDefinition) -> String {
    let mut parts = vec![param.ty.to_string()];
    if let Some(allowed) = &param.allowed_values {
        let items: Vec<String> = allowed.iter().map(Value::to_string).collect();
        parts.push(format!("one of: {}", items.join(", ")));
    }
    if param.rules.not_empty {
        parts.push("not empty".into());
    }
    let bounds = match (param.rules.min, param.rules.max) {
        (Some(lo), Some(hi)) => Some(format!("between {lo} and {hi}")),
        (Some(lo), None) => Some(format!("at least {lo}")),
        (None, Some(hi)) => Some(format!("at most {hi}")),
        (None, None) => None,
    };
    if let Some(b) = bounds {
        if matches!(param.ty, crate::schema::SemanticType::Dict { .. }) {
            parts.push(format!("each entry {{\"min\"?, \"max\"?}} {b}"));
        } else {
            parts.push(b);
        }
    }
    parts.join("; ")
}
