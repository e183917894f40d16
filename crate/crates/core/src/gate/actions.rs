//! The closed set of platform actions a planner may propose, with argument
//! schemas shipped in `actions.json`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde_json::{Map, Value};
use uuid::Uuid;

use crate::schema::{parse_parameter_definitions, validate_value, Check, Diagnostic, ParameterDefinition, Version};

const CATALOG: &str = include_str!("actions.json");

pub struct ActionSchema {
    pub name: String,
    pub description: String,
    pub read_only: bool,
    pub parameters: Vec<ParameterDefinition>,
}

/// Every platform action, keyed by name.
pub fn catalog() -> &'static BTreeMap<String, ActionSchema> {
    static CELL: OnceLock<BTreeMap<String, ActionSchema>> = OnceLock::new();
    CELL.get_or_init(|| {
        let doc: Map<String, Value> = serde_json::from_str(CATALOG).expect("actions.json is valid JSON");
        doc.into_iter()
            .map(|(name, spec)| {
                let parameters = parse_parameter_definitions(&spec["parameters"])
                    .unwrap_or_else(|d| panic!("actions.json: {name}: {d:?}"));
                let schema = ActionSchema {
                    name: name.clone(),
                    description: spec["description"].as_str().unwrap_or_default().to_string(),
                    read_only: spec["read_only"].as_bool().unwrap_or(false),
                    parameters,
                };
                (name, schema)
            })
            .collect()
    })
}

/// Which earlier invocation an `execute_workflow` proposal amends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseInvocation {
    Latest,
    Id(Uuid),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlatformAction {
    SearchWorkflows { query: String, tags: Vec<String> },
    GetParameters { workflow_id: String, version: Option<Version> },
    ListDatasets,
    ExecuteWorkflow {
        workflow_id: String,
        version: Option<Version>,
        parameters: Map<String, Value>,
        base_invocation: Option<BaseInvocation>,
    },
}

impl PlatformAction {
    pub fn name(&self) -> &'static str {
        match self {
            PlatformAction::SearchWorkflows { .. } => "search_workflows",
            PlatformAction::GetParameters { .. } => "get_parameters",
            PlatformAction::ListDatasets => "list_datasets",
            PlatformAction::ExecuteWorkflow { .. } => "execute_workflow",
        }
    }
}

/// Checks a proposal against its action's argument schema. Diagnostics are
/// located at `arguments.<name>`.
pub fn parse_action(action: &str, arguments: &Map<String, Value>) -> Result<PlatformAction, Vec<Diagnostic>> {
    let Some(schema) = catalog().get(action) else {
        let known: Vec<&str> = catalog().keys().map(String::as_str).collect();
        return Err(vec![Diagnostic::error(
            Check::UnknownAction,
            "action",
            format!("`{action}` is not a platform action (expected one of: {})", known.join(", ")),
        )]);
    };
    let mut diags = Vec::new();
    for key in arguments.keys() {
        if !schema.parameters.iter().any(|p| p.name == *key) {
            diags.push(Diagnostic::error(
                Check::ActionArguments,
                format!("arguments.{key}"),
                format!("{action} takes no argument `{key}`"),
            ));
        }
    }
    for p in &schema.parameters {
        let value = arguments.get(&p.name).unwrap_or(&Value::Null);
        for d in validate_value(value, p) {
            diags.push(Diagnostic { location: d.location.replacen("parameters.", "arguments.", 1), ..d });
        }
    }
    let version = match arguments.get("version").and_then(Value::as_str) {
        Some(text) => match text.parse::<Version>() {
            Ok(v) => Some(v),
            Err(e) => {
                diags.push(Diagnostic::error(Check::ActionArguments, "arguments.version", e.to_string()));
                None
            }
        },
        None => None,
    };
    let base_invocation = match arguments.get("base_invocation").and_then(Value::as_str) {
        Some("latest") => Some(BaseInvocation::Latest),
        Some(text) => match Uuid::parse_str(text) {
            Ok(id) => Some(BaseInvocation::Id(id)),
            Err(_) => {
                diags.push(Diagnostic::error(
                    Check::ActionArguments,
                    "arguments.base_invocation",
                    format!("`{text}` is neither \"latest\" nor an invocation id"),
                ));
                None
            }
        },
        None => None,
    };
    if !diags.is_empty() {
        return Err(diags);
    }

    let text = |k: &str| arguments.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    Ok(match action {
        "search_workflows" => PlatformAction::SearchWorkflows {
            query: text("query"),
            tags: arguments
                .get("tags")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default(),
        },
        "get_parameters" => PlatformAction::GetParameters { workflow_id: text("workflow_id"), version },
        "list_datasets" => PlatformAction::ListDatasets,
        "execute_workflow" => PlatformAction::ExecuteWorkflow {
            workflow_id: text("workflow_id"),
            version,
            parameters: arguments.get("parameters").and_then(Value::as_object).cloned().unwrap_or_default(),
            base_invocation,
        },
        other => unreachable!("catalog entry `{other}` has no decoder"),
    })
}
