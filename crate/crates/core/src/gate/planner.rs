use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::session::SessionContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedAction {
    pub action: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerDecision {
    pub assistant_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_action: Option<ProposedAction>,
}

impl PlannerDecision {
    pub fn say(message: impl Into<String>) -> Self {
        Self { assistant_message: message.into(), proposed_action: None }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("planner unavailable: {0}")]
pub struct PlannerError(pub String);

/// Turns the session so far into the next assistant message and, optionally,
/// one action proposal. A planner never executes anything itself.
pub trait Planner: Send + Sync {
    fn decide(&self, context: &SessionContext) -> Result<PlannerDecision, PlannerError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageMatch {
    Exact(String),
    Pattern(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: MessageMatch,
    pub decision: PlannerDecision,
}

/// Decides by matching the latest session message against an ordered rule
/// list; the first match wins. Messages no rule matches get a fixed reply
/// with no action.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    rules: Vec<(Matcher, PlannerDecision)>,
}

#[derive(Debug, Clone)]
enum Matcher {
    Exact(String),
    Pattern(Regex),
}

pub const NO_MATCH_REPLY: &str = "I have no scripted response for that.";

impl ScriptedPlanner {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, String> {
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let matcher = match r.matcher {
                    MessageMatch::Exact(text) => Matcher::Exact(text),
                    MessageMatch::Pattern(p) => {
                        Matcher::Pattern(Regex::new(&p).map_err(|e| format!("rule {i}: bad pattern: {e}"))?)
                    }
                };
                Ok((matcher, r.decision))
            })
            .collect::<Result<_, String>>()?;
        Ok(Self { rules })
    }

    /// Parses a JSON list of `{"match": {"exact"|"pattern": ...}, "decision": ...}`.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        let rules: Vec<ScriptRule> = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
        Self::new(rules)
    }

    pub fn decide_for(&self, text: &str) -> PlannerDecision {
        self.rules
            .iter()
            .find(|(m, _)| match m {
                Matcher::Exact(t) => t == text,
                Matcher::Pattern(re) => re.is_match(text),
            })
            .map(|(_, d)| d.clone())
            .unwrap_or_else(|| PlannerDecision::say(NO_MATCH_REPLY))
    }
}

impl Planner for ScriptedPlanner {
    fn decide(&self, context: &SessionContext) -> Result<PlannerDecision, PlannerError> {
        Ok(self.decide_for(context.last_message().map(|m| m.text.as_str()).unwrap_or_default()))
    }
}
