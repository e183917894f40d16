#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Map, Value};
use uuid::Uuid;

use schemagate_core::bootstrap::bootstrap;
use schemagate_core::clock::{SeededIds, SteppingClock};
use schemagate_core::executor::{AdapterSet, Executor, RunRecord, RunStore};
use schemagate_core::gate::{Gate, GateConfig};
use schemagate_core::registry::Registry;

pub mod fuzz;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub struct Stack {
    pub registry: Arc<Registry>,
    pub gate: Gate,
}

impl Stack {
    pub fn executor(&self) -> &Executor {
        self.gate.executor()
    }
}

pub struct StackBuilder<'a> {
    dir: &'a Path,
    seed: u64,
    adapters: AdapterSet,
    persistent: bool,
    auto_approve: bool,
}

pub fn stack(dir: &Path) -> StackBuilder<'_> {
    StackBuilder { dir, seed: 7, adapters: AdapterSet::builtin(), persistent: false, auto_approve: false }
}

impl<'a> StackBuilder<'a> {
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn adapters(mut self, adapters: AdapterSet) -> Self {
        self.adapters = adapters;
        self
    }

    pub fn persistent(mut self) -> Self {
        self.persistent = true;
        self
    }

    pub fn auto_approve(mut self) -> Self {
        self.auto_approve = true;
        self
    }

    pub fn build(self) -> Stack {
        let root = self.dir.join("registry");
        let registry = if root.exists() {
            Registry::open(&root).unwrap()
        } else {
            Registry::init(&root).unwrap()
        };
        let registry = Arc::new(registry);
        bootstrap(&registry, &fixtures()).unwrap();
        let store = if self.persistent { RunStore::open(self.dir.join("store")).unwrap() } else { RunStore::ephemeral() };
        let executor = Executor::builder(self.adapters)
            .store(store)
            .registry(registry.clone())
            .clock(Arc::new(SteppingClock::fixed()))
            .ids(Arc::new(SeededIds::new(self.seed + 1)))
            .build();
        let gate = Gate::new(registry.clone(), executor)
            .with_clock(Arc::new(SteppingClock::fixed()))
            .with_ids(Arc::new(SeededIds::new(self.seed)))
            .with_config(GateConfig { seed: self.seed, auto_approve: self.auto_approve });
        Stack { registry, gate }
    }
}

pub fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        other => panic!("not an object: {other}"),
    }
}

pub fn d2_parameters() -> Map<String, Value> {
    object(json!({"dataset_file": "sample_measurements.csv"}))
}

pub fn alloy_parameters() -> Map<String, Value> {
    object(json!({
        "dataset_id": "123e4567-e89b-12d3-a456-426614174000",
        "model_id": "alloy-sm-01",
        "target_properties": ["yield_strength", "creep_life"],
        "constraints": {"Cr": {"max": 12.0}, "Co": {"min": 5.0}},
        "n_candidates": 50
    }))
}

/// Proposes, approves and dispatches in a fresh session; returns the run id.
pub fn dispatch(gate: &Gate, workflow_id: &str, parameters: Map<String, Value>) -> (Uuid, Uuid) {
    let session = gate.open_session().session_id;
    let proposal = gate.propose(session, workflow_id, None, parameters).unwrap();
    assert!(proposal.prompts.is_empty(), "{:?}", proposal.prompts);
    let invocation = proposal.invocation.invocation_id;
    gate.approve(session, invocation, "test").unwrap();
    (session, gate.dispatch(session, invocation).unwrap())
}

pub fn run_to_end(gate: &Gate, workflow_id: &str, parameters: Map<String, Value>) -> RunRecord {
    let (_, run_id) = dispatch(gate, workflow_id, parameters);
    gate.executor().wait(run_id, Duration::from_secs(60)).unwrap()
}

/// Every provenance category is populated.
pub fn assert_provenance(record: &RunRecord) {
    assert!(!record.workflow_snapshot.content_hash.is_empty());
    assert!(record.workflow_snapshot.document.is_object());
    assert!(!record.resolved_parameters.is_empty());
    if record.status.is_terminal() {
        assert!(record.finished_at.is_some());
        assert!(record.finished_at.unwrap() >= record.started_at);
    }
    assert!(!record.environment.os.is_empty());
    assert!(!record.environment.hostname.is_empty());
    assert!(!record.environment.tool_adapter_versions.is_empty());
}
