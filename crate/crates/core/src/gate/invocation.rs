use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use uuid::Uuid;

use crate::schema::{ToolDefinition, Version, WorkflowDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvocationState {
    Draft,
    Validated,
    Approved,
    Dispatched,
}

impl InvocationState {
    pub fn as_str(self) -> &'static str {
        match self {
            InvocationState::Draft => "draft",
            InvocationState::Validated => "validated",
            InvocationState::Approved => "approved",
            InvocationState::Dispatched => "dispatched",
        }
    }
}

impl fmt::Display for InvocationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to run: a workflow version plus the parameter values supplied for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationObject {
    pub invocation_id: Uuid,
    pub workflow_id: String,
    pub version: Version,
    pub parameters: Map<String, Value>,
    pub state: InvocationState,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_invocation: Option<Uuid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptReason {
    Missing,
    TypeMismatch,
    ConstraintViolation,
}

/// A request to the user to supply or fix one workflow parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationPrompt {
    pub parameter: String,
    pub reason: PromptReason,
    /// Rendered type plus any rules, e.g. `string (one of: 5-fold, 10-fold)`.
    pub expected: String,
    pub message: String,
}

/// Everything the executor needs for one run. Only the gate can mint one,
/// and only from an approved invocation that re-validated at dispatch time.
#[derive(Debug, Clone)]
pub struct DispatchTicket {
    invocation: InvocationObject,
    workflow: Arc<WorkflowDefinition>,
    workflow_hash: String,
    tools: BTreeMap<String, Arc<ToolDefinition>>,
    seed: u64,
    admitted_from: InvocationState,
}

impl DispatchTicket {
    pub(crate) fn new(
        invocation: InvocationObject,
        workflow: Arc<WorkflowDefinition>,
        tools: BTreeMap<String, Arc<ToolDefinition>>,
        seed: u64,
        admitted_from: InvocationState,
    ) -> Self {
        debug_assert_eq!(invocation.state, InvocationState::Dispatched);
        let workflow_hash = workflow.content_hash();
        Self { invocation, workflow, workflow_hash, tools, seed, admitted_from }
    }

    pub fn invocation(&self) -> &InvocationObject {
        &self.invocation
    }

    pub fn workflow(&self) -> &Arc<WorkflowDefinition> {
        &self.workflow
    }

    pub fn workflow_hash(&self) -> &str {
        &self.workflow_hash
    }

    /// Tool definitions keyed by tool id, as resolved at dispatch.
    pub fn tools(&self) -> &BTreeMap<String, Arc<ToolDefinition>> {
        &self.tools
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The state the invocation was in when dispatch accepted it.
    pub fn admitted_from(&self) -> InvocationState {
        self.admitted_from
    }
}
