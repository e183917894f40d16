use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use super::invocation::{ClarificationPrompt, InvocationObject, InvocationState};
use crate::schema::Version;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOutcome {
    Executed,
    Refused,
}

/// One entry of the append-only action log. Platform actions and gate
/// operations (propose, clarify, approve, dispatch, amend) both land here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub seq: u64,
    pub action: String,
    pub arguments: Value,
    pub outcome: ActionOutcome,
    /// `sha256:<hex>` of the canonical rendering of the result or refusal.
    pub result_digest: String,
    pub at: DateTime<Utc>,
}

/// An invocation and everything the session observed about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationEntry {
    pub invocation: InvocationObject,
    /// Every state the invocation has been in, oldest first.
    pub history: Vec<InvocationState>,
    pub prompts: Vec<ClarificationPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approved_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approved_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<Uuid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedWorkflow {
    pub workflow_id: String,
    pub version: Version,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub session_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub messages: Vec<Message>,
    pub action_log: Vec<ActionLogEntry>,
    /// The most recent invocation, unless it has been dispatched.
    pub pending_invocation: Option<InvocationObject>,
    pub invocations: Vec<InvocationEntry>,
    pub last_run_ids: Vec<Uuid>,
    /// The workflow the user picked from search results, if any.
    pub selected_workflow: Option<SelectedWorkflow>,
}

impl SessionContext {
    pub(crate) fn new(session_id: Uuid, created_at: DateTime<Utc>) -> Self {
        Self {
            session_id,
            created_at,
            messages: Vec::new(),
            action_log: Vec::new(),
            pending_invocation: None,
            invocations: Vec::new(),
            last_run_ids: Vec::new(),
            selected_workflow: None,
        }
    }

    pub fn invocation(&self, id: Uuid) -> Option<&InvocationEntry> {
        self.invocations.iter().find(|e| e.invocation.invocation_id == id)
    }

    pub(crate) fn invocation_mut(&mut self, id: Uuid) -> Option<&mut InvocationEntry> {
        self.invocations.iter_mut().find(|e| e.invocation.invocation_id == id)
    }

    pub fn latest_invocation(&self) -> Option<&InvocationEntry> {
        self.invocations.last()
    }

    pub fn last_message(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub(crate) fn say(&mut self, role: Role, text: impl Into<String>) {
        self.messages.push(Message { role, text: text.into() });
    }

    pub(crate) fn refresh_pending(&mut self) {
        self.pending_invocation = self
            .invocations
            .last()
            .filter(|e| e.invocation.state != InvocationState::Dispatched)
            .map(|e| e.invocation.clone());
    }
}
