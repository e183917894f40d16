//! Planner backed by an OpenAI-compatible chat-completion endpoint.

use std::time::Duration;

use serde_json::{json, Value};

use super::actions::catalog;
use super::planner::{Planner, PlannerDecision, PlannerError};
use super::session::{Role, SessionContext};

pub const API_KEY_ENV: &str = "SCHEMAGATE_PLANNER_API_KEY";
pub const BASE_URL_ENV: &str = "SCHEMAGATE_PLANNER_URL";
pub const MODEL_ENV: &str = "SCHEMAGATE_PLANNER_MODEL";

pub struct RemotePlanner {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: String,
}

impl RemotePlanner {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: api_key.into(),
        }
    }

    /// Reads the key, endpoint and model from the environment.
    pub fn from_env() -> Result<Self, PlannerError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| PlannerError(format!("{API_KEY_ENV} is not set")))?;
        let url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| "gpt-4o-mini".into());
        Ok(Self::new(url, model, key))
    }

    fn system_prompt() -> String {
        let actions: Vec<Value> = catalog()
            .values()
            .map(|a| {
                let params: Vec<Value> = a
                    .parameters
                    .iter()
                    .map(|p| {
                        json!({"name": p.name, "type": p.ty.to_string(), "required": p.required, "description": p.description})
                    })
                    .collect();
                json!({"action": a.name, "description": a.description, "arguments": params})
            })
            .collect();
        format!(
            "You help a scientist run registered workflows. You cannot run anything yourself; you may propose at \
             most one platform action per turn and the system validates it. Reply with a single JSON object \
             {{\"assistant_message\": string, \"proposed_action\": {{\"action\": string, \"arguments\": object}} | null}}. \
             Platform actions:\n{}",
            serde_json::to_string_pretty(&actions).unwrap_or_default()
        )
    }
}

impl Planner for RemotePlanner {
    fn decide(&self, context: &SessionContext) -> Result<PlannerDecision, PlannerError> {
        let mut messages = vec![json!({"role": "system", "content": Self::system_prompt()})];
        for m in &context.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::System => "system",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        let body = json!({
            "model": self.model,
            "messages": messages,
            "response_format": {"type": "json_object"},
            "temperature": 0,
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| PlannerError(e.to_string()))?;
        if !response.status().is_success() {
            return Err(PlannerError(format!("chat completion returned {}", response.status())));
        }
        let reply: Value = response.json().map_err(|e| PlannerError(e.to_string()))?;
        let content = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| PlannerError("chat completion had no message content".into()))?;
        parse_reply(content)
    }
}

/// Parses the model's reply. Text that is not a decision document becomes a
/// plain assistant message with no action.
pub fn parse_reply(content: &str) -> Result<PlannerDecision, PlannerError> {
    match serde_json::from_str::<PlannerDecision>(content.trim()) {
        Ok(d) => Ok(d),
        Err(_) => Ok(PlannerDecision::say(content.trim())),
    }
}
