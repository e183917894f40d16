//! Asynchronous DAG execution with a provenance record per run.
//!
//! Work arrives only as a [`DispatchTicket`], which the gate mints from an
//! approved invocation. Each run executes on its own thread in waves: every
//! step whose upstream steps have all finished starts together, and a step
//! downstream of a failure is skipped. The record is persisted after every
//! transition, and an ordered event log per run serves progress streaming.

pub mod adapters;
pub mod frame;
mod record;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use uuid::Uuid;

pub use adapters::{AdapterContext, AdapterSet, ToolAdapter, ValueMap};
pub use record::{
    EnvironmentMetadata, Failure, MetricDelta, RunComparison, RunFilter, RunRecord, RunStatus, RunSummary,
    StepResult, StepStatus, WorkflowSnapshot,
};
pub use store::{RunStore, StoreError, RUN_DIR_ENV};

use crate::clock::{Clock, IdSource, RandomIds, SystemClock};
use crate::gate::{DispatchTicket, InvocationState};
use crate::registry::Registry;
use crate::schema::{value_conforms, StepBinding, StepDefinition, ToolDefinition, WorkflowDefinition};

#[derive(Debug, thiserror::Error)]
pub enum ExecutorError {
    #[error("no adapter registered for tool `{tool_id}` (step `{step_id}`)")]
    AdapterMissing { step_id: String, tool_id: String },
    #[error("run {0} not found")]
    NotFound(Uuid),
    #[error("timed out waiting for run {0}")]
    Timeout(Uuid),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStarted,
    StepStarted,
    StepSucceeded,
    StepFailed,
    StepSkipped,
    RunFinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub run_id: Uuid,
    pub step_id: Option<String>,
    pub event: EventKind,
    pub timestamp: DateTime<Utc>,
    /// Final run status on `run_finished`, the error on `step_failed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// One accepted submission, kept for auditing the dispatch path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Submission {
    pub run_id: Uuid,
    pub invocation_id: Uuid,
    /// State of the invocation when the gate accepted it for dispatch.
    pub invocation_state: InvocationState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepState {
    pub step_id: String,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatusView {
    pub run_id: Uuid,
    pub status: RunStatus,
    pub steps: Vec<StepState>,
}

struct RunHandle {
    record: Mutex<RunRecord>,
    events: Mutex<Vec<RunEvent>>,
    changed: Condvar,
    abort: AtomicBool,
}

impl RunHandle {
    fn finished(events: &[RunEvent]) -> bool {
        events.last().is_some_and(|e| e.event == EventKind::RunFinished)
    }
}

struct Inner {
    adapters: AdapterSet,
    store: RunStore,
    registry: Option<Arc<Registry>>,
    base_dir: PathBuf,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    runs: Mutex<HashMap<Uuid, Arc<RunHandle>>>,
    submissions: Mutex<Vec<Submission>>,
}

pub struct ExecutorBuilder {
    adapters: AdapterSet,
    store: RunStore,
    registry: Option<Arc<Registry>>,
    base_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
}

impl ExecutorBuilder {
    pub fn store(mut self, store: RunStore) -> Self {
        self.store = store;
        self
    }

    /// Lets `data_loader` resolve registered dataset ids and names.
    pub fn registry(mut self, registry: Arc<Registry>) -> Self {
        self.registry = Some(registry);
        self
    }

    pub fn base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn build(self) -> Executor {
        let base_dir = self
            .base_dir
            .unwrap_or_else(|| std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")));
        Executor {
            inner: Arc::new(Inner {
                adapters: self.adapters,
                store: self.store,
                registry: self.registry,
                base_dir,
                clock: self.clock,
                ids: self.ids,
                runs: Mutex::new(HashMap::new()),
                submissions: Mutex::new(Vec::new()),
            }),
        }
    }
}

#[derive(Clone)]
pub struct Executor {
    inner: Arc<Inner>,
}

impl Executor {
    /// In-memory store, system clock, random ids.
    pub fn builder(adapters: AdapterSet) -> ExecutorBuilder {
        ExecutorBuilder {
            adapters,
            store: RunStore::ephemeral(),
            registry: None,
            base_dir: None,
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
        }
    }

    pub fn adapters(&self) -> &AdapterSet {
        &self.inner.adapters
    }

    pub fn store(&self) -> &RunStore {
        &self.inner.store
    }

    /// Starts a run and returns its id at once; the record fills in as the
    /// run proceeds.
    pub fn submit(&self, ticket: DispatchTicket) -> Result<Uuid, ExecutorError> {
        let inner = &self.inner;
        let wf = ticket.workflow().clone();
        let mut adapter_versions = BTreeMap::new();
        for step in &wf.steps {
            let adapter = inner.adapters.get(&step.tool_id).filter(|_| ticket.tools().contains_key(&step.tool_id));
            let Some(adapter) = adapter else {
                return Err(ExecutorError::AdapterMissing { step_id: step.step_id.clone(), tool_id: step.tool_id.clone() });
            };
            adapter_versions.insert(step.tool_id.clone(), adapter.version());
        }

        let run_id = inner.ids.next_id();
        let started_at = inner.clock.now();
        let record = RunRecord {
            run_id,
            invocation: ticket.invocation().clone(),
            workflow_snapshot: WorkflowSnapshot {
                document: wf.to_document(),
                content_hash: ticket.workflow_hash().to_string(),
            },
            resolved_parameters: resolve_parameters(&wf, &ticket.invocation().parameters),
            started_at,
            finished_at: None,
            environment: EnvironmentMetadata::capture(adapter_versions, Some(ticket.seed())),
            status: RunStatus::Running,
            steps: wf.steps.iter().map(|s| StepResult::pending(&s.step_id, &s.tool_id)).collect(),
            failure: None,
        };
        inner.store.save(&record)?;
        inner.submissions.lock().unwrap().push(Submission {
            run_id,
            invocation_id: ticket.invocation().invocation_id,
            invocation_state: ticket.admitted_from(),
        });
        let handle = Arc::new(RunHandle {
            record: Mutex::new(record),
            events: Mutex::new(Vec::new()),
            changed: Condvar::new(),
            abort: AtomicBool::new(false),
        });
        inner.runs.lock().unwrap().insert(run_id, handle.clone());
        emit(inner, &handle, None, EventKind::RunStarted, None);

        let inner = self.inner.clone();
        std::thread::Builder::new()
            .name(format!("run-{run_id}"))
            .spawn(move || execute(&inner, &handle, &ticket))
            .expect("spawn run thread");
        Ok(run_id)
    }

    fn handle(&self, run_id: Uuid) -> Option<Arc<RunHandle>> {
        self.inner.runs.lock().unwrap().get(&run_id).cloned()
    }

    pub fn get_run(&self, run_id: Uuid) -> Result<RunRecord, ExecutorError> {
        match self.handle(run_id) {
            Some(h) => Ok(h.record.lock().unwrap().clone()),
            None => self.inner.store.get(run_id).ok_or(ExecutorError::NotFound(run_id)),
        }
    }

    pub fn run_status(&self, run_id: Uuid) -> Result<RunStatusView, ExecutorError> {
        let record = self.get_run(run_id)?;
        Ok(RunStatusView {
            run_id,
            status: record.status,
            steps: record.steps.iter().map(|s| StepState { step_id: s.step_id.clone(), status: s.status }).collect(),
        })
    }

    /// Events with `seq >= from`. Runs from an earlier process get a log
    /// reconstructed from their record.
    pub fn events(&self, run_id: Uuid, from: u64) -> Result<Vec<RunEvent>, ExecutorError> {
        match self.handle(run_id) {
            Some(h) => Ok(h.events.lock().unwrap().iter().skip(from as usize).cloned().collect()),
            None => {
                let record = self.inner.store.get(run_id).ok_or(ExecutorError::NotFound(run_id))?;
                Ok(reconstruct_events(&record).into_iter().skip(from as usize).collect())
            }
        }
    }

    /// Blocks until events past `from` exist, the run has finished, or
    /// `timeout` elapses. Returns the new events and whether the run is done.
    pub fn wait_events(&self, run_id: Uuid, from: u64, timeout: Duration) -> Result<(Vec<RunEvent>, bool), ExecutorError> {
        let Some(h) = self.handle(run_id) else {
            return Ok((self.events(run_id, from)?, true));
        };
        let deadline = Instant::now() + timeout;
        let mut events = h.events.lock().unwrap();
        while events.len() as u64 <= from && !RunHandle::finished(&events) {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            events = h.changed.wait_timeout(events, left).unwrap().0;
        }
        let done = RunHandle::finished(&events);
        Ok((events.iter().skip(from as usize).cloned().collect(), done))
    }

    /// Blocks until the run reaches a terminal status.
    pub fn wait(&self, run_id: Uuid, timeout: Duration) -> Result<RunRecord, ExecutorError> {
        if let Some(h) = self.handle(run_id) {
            let deadline = Instant::now() + timeout;
            let mut events = h.events.lock().unwrap();
            while !RunHandle::finished(&events) {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    return Err(ExecutorError::Timeout(run_id));
                }
                events = h.changed.wait_timeout(events, left).unwrap().0;
            }
        }
        self.get_run(run_id)
    }

    /// Requests an abort: steps already running finish, nothing further
    /// starts, and the run ends `aborted`. A finished run is left as is.
    pub fn abort(&self, run_id: Uuid) -> Result<RunStatus, ExecutorError> {
        match self.handle(run_id) {
            Some(h) => {
                h.abort.store(true, Ordering::SeqCst);
                Ok(h.record.lock().unwrap().status)
            }
            None => Ok(self.get_run(run_id)?.status),
        }
    }

    pub fn compare_runs(&self, a: Uuid, b: Uuid) -> Result<RunComparison, ExecutorError> {
        Ok(RunComparison::between(&self.get_run(a)?, &self.get_run(b)?))
    }

    pub fn query_runs(&self, filter: &RunFilter) -> Vec<RunSummary> {
        self.inner.store.query(filter)
    }

    /// Every submission this executor accepted, in order.
    pub fn submissions(&self) -> Vec<Submission> {
        self.inner.submissions.lock().unwrap().clone()
    }
}

/// Workflow parameters in declaration order: the supplied value, else the
/// default, else absent.
pub fn resolve_parameters(wf: &WorkflowDefinition, supplied: &Map<String, Value>) -> Map<String, Value> {
    wf.parameters
        .iter()
        .filter_map(|(name, p)| supplied.get(name).or(p.default.as_ref()).map(|v| (name.clone(), v.clone())))
        .collect()
}

fn emit(inner: &Inner, h: &RunHandle, step_id: Option<&str>, event: EventKind, detail: Option<String>) {
    let mut events = h.events.lock().unwrap();
    let record = h.record.lock().unwrap();
    let seq = events.len() as u64;
    events.push(RunEvent {
        seq,
        run_id: record.run_id,
        step_id: step_id.map(str::to_string),
        event,
        timestamp: inner.clock.now(),
        detail,
    });
    drop(record);
    h.changed.notify_all();
}

fn update(inner: &Inner, h: &RunHandle, change: impl FnOnce(&mut RunRecord)) {
    let mut record = h.record.lock().unwrap();
    change(&mut record);
    if let Err(e) = inner.store.save(&record) {
        tracing::error!(run_id = %record.run_id, "could not persist run record: {e}");
    }
}

fn set_step(inner: &Inner, h: &RunHandle, index: usize, change: impl FnOnce(&mut StepResult)) {
    update(inner, h, |r| change(&mut r.steps[index]));
}

fn execute(inner: &Inner, h: &RunHandle, ticket: &DispatchTicket) {
    let wf = ticket.workflow();
    let resolved = h.record.lock().unwrap().resolved_parameters.clone();
    let ctx = AdapterContext {
        seed: ticket.seed(),
        registry: inner.registry.clone(),
        base_dir: inner.base_dir.clone(),
        artifacts: Mutex::new(HashMap::new()),
    };
    let pairs = wf.ordering_pairs();
    let upstream: Vec<Vec<usize>> = wf
        .steps
        .iter()
        .map(|s| {
            pairs.iter().filter(|(_, b)| *b == s.step_id).filter_map(|(a, _)| wf.step_index(a)).collect()
        })
        .collect();
    let mut status = vec![StepStatus::Pending; wf.steps.len()];
    let mut outputs: Vec<Option<ValueMap>> = vec![None; wf.steps.len()];
    let mut aborted = false;

    loop {
        let ready: Vec<usize> = (0..wf.steps.len())
            .filter(|&i| status[i] == StepStatus::Pending && upstream[i].iter().all(|&u| status[u].is_finished()))
            .collect();
        if ready.is_empty() {
            break;
        }
        if h.abort.load(Ordering::SeqCst) {
            aborted = true;
            break;
        }
        let (runnable, blocked): (Vec<usize>, Vec<usize>) =
            ready.into_iter().partition(|&i| upstream[i].iter().all(|&u| status[u] == StepStatus::Succeeded));
        for i in blocked {
            status[i] = StepStatus::Skipped;
            set_step(inner, h, i, |s| s.status = StepStatus::Skipped);
            emit(inner, h, Some(&wf.steps[i].step_id), EventKind::StepSkipped, None);
        }
        for &i in &runnable {
            status[i] = StepStatus::Running;
            let now = inner.clock.now();
            set_step(inner, h, i, |s| {
                s.status = StepStatus::Running;
                s.started_at = Some(now);
            });
            emit(inner, h, Some(&wf.steps[i].step_id), EventKind::StepStarted, None);
        }
        let results: Vec<Result<ValueMap, String>> = std::thread::scope(|scope| {
            let workers: Vec<_> = runnable
                .iter()
                .map(|&i| {
                    let (ctx, outputs, resolved) = (&ctx, &outputs, &resolved);
                    scope.spawn(move || run_step(inner, ticket, i, ctx, outputs, resolved))
                })
                .collect();
            workers.into_iter().map(|w| w.join().unwrap_or_else(|_| Err("step worker panicked".into()))).collect()
        });
        for (&i, result) in runnable.iter().zip(results) {
            let step = &wf.steps[i];
            let now = inner.clock.now();
            match result {
                Ok(out) => {
                    status[i] = StepStatus::Succeeded;
                    let metrics = out.get("metrics").and_then(Value::as_object).cloned();
                    let recorded = out.clone();
                    set_step(inner, h, i, |s| {
                        s.status = StepStatus::Succeeded;
                        s.outputs = recorded;
                        s.metrics = metrics;
                        s.finished_at = Some(now);
                    });
                    outputs[i] = Some(out);
                    emit(inner, h, Some(&step.step_id), EventKind::StepSucceeded, None);
                }
                Err(message) => {
                    status[i] = StepStatus::Failed;
                    let m = message.clone();
                    update(inner, h, |r| {
                        let s = &mut r.steps[i];
                        s.status = StepStatus::Failed;
                        s.error = Some(m.clone());
                        s.finished_at = Some(now);
                        if r.failure.is_none() {
                            r.failure = Some(Failure { step_id: step.step_id.clone(), message: m });
                        }
                    });
                    emit(inner, h, Some(&step.step_id), EventKind::StepFailed, Some(message));
                }
            }
        }
    }

    if aborted {
        let pending: Vec<usize> = (0..wf.steps.len()).filter(|&i| status[i] == StepStatus::Pending).collect();
        for i in pending {
            status[i] = StepStatus::Skipped;
            set_step(inner, h, i, |s| s.status = StepStatus::Skipped);
            emit(inner, h, Some(&wf.steps[i].step_id), EventKind::StepSkipped, None);
        }
    }
    let final_status = if aborted {
        RunStatus::Aborted
    } else if status.contains(&StepStatus::Failed) {
        RunStatus::Failed
    } else {
        RunStatus::Succeeded
    };
    let now = inner.clock.now();
    update(inner, h, |r| {
        r.status = final_status;
        r.finished_at = Some(now);
    });
    emit(inner, h, None, EventKind::RunFinished, Some(final_status.to_string()));
}

/// Parameters and inputs for one step, then the adapter call and the
/// output contract check.
fn run_step(
    inner: &Inner,
    ticket: &DispatchTicket,
    index: usize,
    ctx: &AdapterContext,
    outputs: &[Option<ValueMap>],
    resolved: &Map<String, Value>,
) -> Result<ValueMap, String> {
    let wf = ticket.workflow();
    let step = &wf.steps[index];
    let tool = ticket.tools().get(&step.tool_id).ok_or_else(|| format!("tool `{}` missing from dispatch", step.tool_id))?;
    let adapter = inner.adapters.get(&step.tool_id).ok_or_else(|| format!("no adapter for `{}`", step.tool_id))?;
    let parameters = step_parameters(wf, step, tool, resolved);
    let inputs = step_inputs(wf, step, tool, outputs, resolved)?;

    let out = match catch_unwind(AssertUnwindSafe(|| adapter.run(ctx, &inputs, &parameters))) {
        Ok(result) => result?,
        Err(panic) => {
            let reason = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            return Err(format!("adapter panicked: {reason}"));
        }
    };
    for (name, value) in &out {
        let ty = tool.io.outputs.get(name).ok_or_else(|| format!("adapter returned undeclared output `{name}`"))?;
        value_conforms(ty, value).map_err(|e| format!("output `{name}`: {e}"))?;
    }
    Ok(out)
}

/// Precedence per tool parameter: the same-named workflow parameter, the
/// step literal, the workflow parameter the step references, the tool
/// default.
pub(crate) fn step_parameters(
    wf: &WorkflowDefinition,
    step: &StepDefinition,
    tool: &ToolDefinition,
    resolved: &Map<String, Value>,
) -> ValueMap {
    let mut out = Map::new();
    for p in &tool.parameters {
        let shadow = wf.parameters.contains_key(&p.name).then(|| resolved.get(&p.name)).flatten();
        let bound = match step.parameters.get(&p.name) {
            Some(StepBinding::Literal(v)) => Some(v),
            Some(StepBinding::Reference(name)) => resolved.get(name),
            None => None,
        };
        if let Some(v) = shadow.or(bound).or(p.default.as_ref()) {
            out.insert(p.name.clone(), v.clone());
        }
    }
    out
}

fn step_inputs(
    wf: &WorkflowDefinition,
    step: &StepDefinition,
    tool: &ToolDefinition,
    outputs: &[Option<ValueMap>],
    resolved: &Map<String, Value>,
) -> Result<ValueMap, String> {
    let flows = wf.data_flows();
    let mut out = Map::new();
    for input in tool.io.inputs.keys() {
        let flow = flows.iter().find(|f| f.to_step == step.step_id && f.to_input == *input);
        let value = match flow {
            Some(f) => {
                let from = wf.step_index(&f.from_step).ok_or_else(|| format!("unknown step `{}`", f.from_step))?;
                let produced = outputs[from].as_ref().ok_or_else(|| format!("step `{}` produced no outputs", f.from_step))?;
                Some(produced.get(&f.from_output).cloned().ok_or_else(|| {
                    format!("step `{}` did not produce `{}` for input `{input}`", f.from_step, f.from_output)
                })?)
            }
            None => match step.parameters.get(input) {
                Some(StepBinding::Literal(v)) => Some(v.clone()),
                Some(StepBinding::Reference(name)) => resolved.get(name).cloned(),
                None => None,
            },
        };
        if let Some(v) = value {
            out.insert(input.clone(), v);
        }
    }
    Ok(out)
}

fn reconstruct_events(record: &RunRecord) -> Vec<RunEvent> {
    let mut events = Vec::new();
    let mut push = |step_id: Option<&str>, event, timestamp, detail| {
        let seq = events.len() as u64;
        events.push(RunEvent {
            seq,
            run_id: record.run_id,
            step_id: step_id.map(str::to_string),
            event,
            timestamp,
            detail,
        })
    };
    push(None, EventKind::RunStarted, record.started_at, None);
    let mut steps: Vec<&StepResult> = record.steps.iter().collect();
    steps.sort_by_key(|s| (s.started_at.or(s.finished_at).unwrap_or(record.started_at), s.finished_at));
    for s in steps {
        let at = s.finished_at.or(s.started_at).unwrap_or(record.started_at);
        match s.status {
            StepStatus::Skipped => push(Some(&s.step_id), EventKind::StepSkipped, at, None),
            StepStatus::Succeeded | StepStatus::Failed => {
                push(Some(&s.step_id), EventKind::StepStarted, s.started_at.unwrap_or(at), None);
                let kind =
                    if s.status == StepStatus::Succeeded { EventKind::StepSucceeded } else { EventKind::StepFailed };
                push(Some(&s.step_id), kind, at, s.error.clone());
            }
            StepStatus::Pending | StepStatus::Running => {}
        }
    }
    if record.status.is_terminal() {
        push(None, EventKind::RunFinished, record.finished_at.unwrap_or(record.started_at), Some(record.status.to_string()));
    }
    events
}
