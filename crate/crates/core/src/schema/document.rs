//! JSON document encoding of tool and workflow definitions.
//!
//! Decoding is split in two passes. The structural pass rejects malformed
//! JSON, unknown fields, missing required fields, wrongly typed fields and
//! unparseable type or version strings. The invariant pass checks everything
//! the definition types promise (identifiers, duplicates, references,
//! default/allowed-value coherence, documentation). `parse_*` runs both and
//! reports every violation it finds; admission runs the structural pass and
//! then re-checks invariants itself so it can attribute them to named checks.
//!
//! Canonical rendering emits keys in the listing order of the document
//! formats, two-space indentation and a trailing LF.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Serialize, Serializer};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use super::definitions::*;
use super::diagnostic::{Check, Diagnostic};
use super::types::{parse_semantic_type, Columns, SemanticType};
use super::value::{literal_eq, validate_value, value_conforms};
use super::version::Version;

// ---------------------------------------------------------------------------
// canonical rendering

/// Two-space indented JSON with a trailing newline.
pub fn render_canonical(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialise");
    text.push('\n');
    text
}

/// `sha256:<hex>` digest of a text.
pub fn content_hash(text: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

/// Canonical rendering of any serialisable value.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("document types always serialise");
    render_canonical(&value)
}

fn io_type_document(ty: &SemanticType) -> Value {
    let mut map = Map::new();
    match ty {
        SemanticType::Dataframe(columns) => {
            map.insert("type".into(), "dataframe".into());
            let cols = match columns {
                Columns::Dynamic => Value::from("dynamic"),
                Columns::Declared(set) => set.iter().cloned().collect::<Vec<_>>().into(),
            };
            map.insert("columns".into(), cols);
        }
        SemanticType::Dict { keys: Some(keys) } => {
            map.insert("type".into(), "dict".into());
            map.insert("keys".into(), keys.clone().into());
        }
        other => {
            map.insert("type".into(), other.to_string().into());
        }
    }
    Value::Object(map)
}

fn io_map_document(map: &IndexMap<String, SemanticType>) -> Value {
    Value::Object(map.iter().map(|(k, t)| (k.clone(), io_type_document(t))).collect())
}

fn rules_document(param: &ParameterDefinition, include_allowed: bool) -> Option<Value> {
    let mut map = Map::new();
    if param.rules.not_empty {
        map.insert("not_empty".into(), true.into());
    }
    if include_allowed {
        if let Some(allowed) = &param.allowed_values {
            map.insert("allowed_values".into(), allowed.clone().into());
        }
    }
    if let Some(min) = param.rules.min {
        map.insert("min".into(), number(min));
    }
    if let Some(max) = param.rules.max {
        map.insert("max".into(), number(max));
    }
    if let Some(required) = param.rules.required {
        map.insert("required".into(), required.into());
    }
    (!map.is_empty()).then_some(Value::Object(map))
}

fn number(x: f64) -> Value {
    Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn tool_parameter_document(param: &ParameterDefinition) -> Value {
    let mut map = Map::new();
    map.insert("name".into(), param.name.clone().into());
    map.insert("type".into(), param.ty.to_string().into());
    map.insert("description".into(), param.description.clone().into());
    map.insert("required".into(), param.required.into());
    if let Some(default) = &param.default {
        map.insert("default".into(), default.clone());
    }
    if let Some(allowed) = &param.allowed_values {
        map.insert("allowed_values".into(), allowed.clone().into());
    }
    if let Some(examples) = &param.examples {
        map.insert("examples".into(), examples.clone().into());
    }
    if let Some(rules) = rules_document(param, false) {
        map.insert("validation_rules".into(), rules);
    }
    Value::Object(map)
}

/// Workflow-level parameter document (name is the enclosing map key).
pub fn workflow_parameter_document(param: &ParameterDefinition) -> Value {
    let mut map = Map::new();
    map.insert("type".into(), param.ty.to_string().into());
    map.insert("required".into(), param.required.into());
    if let Some(default) = &param.default {
        map.insert("default".into(), default.clone());
    }
    map.insert("description".into(), param.description.clone().into());
    if let Some(rules) = rules_document(param, true) {
        map.insert("validation_rules".into(), rules);
    }
    if let Some(examples) = &param.examples {
        map.insert("examples".into(), examples.clone().into());
    }
    Value::Object(map)
}

pub fn parameters_document(params: &IndexMap<String, ParameterDefinition>) -> Value {
    Value::Object(params.iter().map(|(k, p)| (k.clone(), workflow_parameter_document(p))).collect())
}

pub fn tool_to_document(tool: &ToolDefinition) -> Value {
    let mut map = Map::new();
    map.insert("id".into(), tool.id.clone().into());
    map.insert("name".into(), tool.name.clone().into());
    map.insert("description".into(), tool.description.clone().into());
    map.insert("version".into(), tool.version.to_string().into());
    map.insert(
        "parameters".into(),
        Value::Array(tool.parameters.iter().map(tool_parameter_document).collect()),
    );
    map.insert("input_schema".into(), io_map_document(&tool.io.inputs));
    map.insert("output_schema".into(), io_map_document(&tool.io.outputs));
    map.insert("dependencies".into(), tool.dependencies.clone().into());
    map.insert("domain_tags".into(), tool.domain_tags.clone().into());
    let mut provenance = Map::new();
    provenance.insert("origin".into(), tool.provenance.origin.clone().into());
    provenance.insert("maintainer".into(), tool.provenance.maintainer.clone().into());
    map.insert("provenance".into(), Value::Object(provenance));
    map.insert("estimated_duration".into(), number(tool.estimated_duration));
    map.insert("requires_network".into(), tool.requires_network.into());
    Value::Object(map)
}

fn step_document(step: &StepDefinition) -> Value {
    let mut map = Map::new();
    map.insert("step_id".into(), step.step_id.clone().into());
    map.insert("tool_id".into(), step.tool_id.clone().into());
    map.insert("name".into(), step.name.clone().into());
    map.insert("description".into(), step.description.clone().into());
    map.insert(
        "parameters".into(),
        Value::Object(step.parameters.iter().map(|(k, b)| (k.clone(), b.to_literal())).collect()),
    );
    map.insert("dependencies".into(), step.dependencies.clone().into());
    map.insert("estimated_duration".into(), number(step.estimated_duration));
    Value::Object(map)
}

pub fn workflow_to_document(wf: &WorkflowDefinition) -> Value {
    let mut map = Map::new();
    map.insert("workflow_id".into(), wf.workflow_id.clone().into());
    map.insert("name".into(), wf.name.clone().into());
    map.insert("description".into(), wf.description.clone().into());
    map.insert("version".into(), wf.version.to_string().into());
    map.insert("steps".into(), Value::Array(wf.steps.iter().map(step_document).collect()));
    let mappings = wf
        .parameter_mappings
        .iter()
        .map(|m| {
            let mut map = Map::new();
            map.insert("from_step".into(), m.from_step.clone().into());
            map.insert("from_parameter".into(), m.from_parameter.clone().into());
            map.insert("to_step".into(), m.to_step.clone().into());
            map.insert("to_parameter".into(), m.to_parameter.clone().into());
            map.insert("description".into(), m.description.clone().into());
            Value::Object(map)
        })
        .collect();
    map.insert("parameter_mappings".into(), Value::Array(mappings));
    let edges = wf
        .edges
        .iter()
        .map(|e| {
            let mut map = Map::new();
            map.insert("edge_id".into(), e.edge_id.clone().into());
            map.insert("source_node_id".into(), e.source_node_id.clone().into());
            map.insert("target_node_id".into(), e.target_node_id.clone().into());
            map.insert("source_output".into(), e.source_output.clone().into());
            map.insert("target_input".into(), e.target_input.clone().into());
            Value::Object(map)
        })
        .collect();
    map.insert("edges".into(), Value::Array(edges));
    map.insert("parameters".into(), parameters_document(&wf.parameters));
    let meta = &wf.metadata;
    let mut metadata = Map::new();
    if let Some(complexity) = &meta.complexity {
        metadata.insert("complexity".into(), complexity.clone().into());
    }
    if let Some(minutes) = &meta.estimated_duration_minutes {
        metadata.insert("estimated_duration_minutes".into(), Value::Number(minutes.clone()));
    }
    metadata.insert("tags".into(), meta.tags.clone().into());
    metadata.insert("categories".into(), meta.categories.clone().into());
    metadata.insert("use_cases".into(), meta.use_cases.clone().into());
    map.insert("metadata".into(), Value::Object(metadata));
    Value::Object(map)
}

impl ToolDefinition {
    pub fn to_document(&self) -> Value {
        tool_to_document(self)
    }

    pub fn canonical(&self) -> String {
        render_canonical(&self.to_document())
    }

    pub fn content_hash(&self) -> String {
        content_hash(&self.canonical())
    }
}

impl WorkflowDefinition {
    pub fn to_document(&self) -> Value {
        workflow_to_document(self)
    }

    pub fn canonical(&self) -> String {
        render_canonical(&self.to_document())
    }

    pub fn content_hash(&self) -> String {
        content_hash(&self.canonical())
    }
}

impl Serialize for ToolDefinition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl Serialize for WorkflowDefinition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

/// Serialises a workflow-level parameter map in document form.
pub fn serialize_parameters<S: Serializer>(
    params: &IndexMap<String, ParameterDefinition>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    parameters_document(params).serialize(serializer)
}

// ---------------------------------------------------------------------------
// structural decoding

struct Decoder {
    diags: Vec<Diagnostic>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// A JSON object whose keys are consumed as they are read; leftovers are
/// unknown fields.
struct Obj<'v> {
    map: &'v Map<String, Value>,
    path: String,
    seen: Vec<&'static str>,
}

impl<'v> Obj<'v> {
    fn req(&mut self, d: &mut Decoder, key: &'static str) -> Option<&'v Value> {
        self.seen.push(key);
        let value = self.map.get(key);
        if value.is_none() {
            d.error(Check::RequiredField, join(&self.path, key), format!("missing required field `{key}`"));
        }
        value
    }

    fn opt(&mut self, key: &'static str) -> Option<&'v Value> {
        self.seen.push(key);
        self.map.get(key)
    }

    fn finish(self, d: &mut Decoder) {
        for key in self.map.keys() {
            if !self.seen.contains(&key.as_str()) {
                d.error(Check::UnknownField, join(&self.path, key), format!("unknown field `{key}`"));
            }
        }
    }

    fn at(&self, key: &str) -> String {
        join(&self.path, key)
    }
}

impl Decoder {
    fn error(&mut self, check: Check, location: String, message: String) {
        self.diags.push(Diagnostic::error(check, location, message));
    }

    fn object<'v>(&mut self, value: &'v Value, path: &str) -> Option<Obj<'v>> {
        match value.as_object() {
            Some(map) => Some(Obj { map, path: path.to_string(), seen: Vec::new() }),
            None => {
                self.error(Check::FieldType, path.to_string(), "expected an object".into());
                None
            }
        }
    }

    fn string(&mut self, value: Option<&Value>, path: String) -> String {
        match value {
            None => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a string".into());
                String::new()
            }
        }
    }

    fn strings(&mut self, value: Option<&Value>, path: String) -> Vec<String> {
        match value {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| match v {
                    Value::String(s) => Some(s.clone()),
                    _ => {
                        self.error(Check::FieldType, format!("{path}[{i}]"), "expected a string".into());
                        None
                    }
                })
                .collect(),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a list of strings".into());
                Vec::new()
            }
        }
    }

    fn number(&mut self, value: Option<&Value>, path: String) -> Option<f64> {
        match value {
            None => None,
            Some(Value::Number(n)) => n.as_f64(),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a number".into());
                None
            }
        }
    }

    fn boolean(&mut self, value: Option<&Value>, path: String) -> Option<bool> {
        match value {
            None => None,
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a boolean".into());
                None
            }
        }
    }

    fn literal_list(&mut self, value: Option<&Value>, path: String) -> Option<Vec<Value>> {
        match value {
            None => None,
            Some(Value::Array(items)) => Some(items.clone()),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a list".into());
                None
            }
        }
    }

    fn version(&mut self, value: Option<&Value>, path: String) -> Version {
        let text = match value {
            None => return Version::new(0, 0, 0),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a version string".into());
                return Version::new(0, 0, 0);
            }
        };
        text.parse().unwrap_or_else(|e: super::version::VersionError| {
            self.error(Check::VersionFormat, path, e.to_string());
            Version::new(0, 0, 0)
        })
    }

    fn type_expr(&mut self, value: Option<&Value>, path: String) -> SemanticType {
        let text = match value {
            None => return SemanticType::String,
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.error(Check::FieldType, path, "expected a type expression string".into());
                return SemanticType::String;
            }
        };
        parse_semantic_type(&text).unwrap_or_else(|e| {
            self.error(Check::TypeSyntax, path, e.to_string());
            SemanticType::String
        })
    }

    fn io_type(&mut self, value: &Value, path: &str) -> SemanticType {
        let Some(mut obj) = self.object(value, path) else {
            return SemanticType::String;
        };
        let ty_value = obj.req(self, "type");
        let mut ty = self.type_expr(ty_value, obj.at("type"));
        if let Some(columns) = obj.opt("columns") {
            let at = obj.at("columns");
            match (&ty, columns) {
                (SemanticType::Dataframe(Columns::Dynamic), Value::String(s)) if s == "dynamic" => {}
                (SemanticType::Dataframe(Columns::Dynamic), Value::Array(_)) => {
                    let names = self.strings(Some(columns), at.clone());
                    let set: std::collections::BTreeSet<String> = names.iter().cloned().collect();
                    if names.is_empty() {
                        self.error(Check::FieldType, at, "column set must not be empty".into());
                    } else if set.len() != names.len() {
                        self.error(Check::DuplicateIdentifier, at, "duplicate column name".into());
                    } else {
                        ty = SemanticType::Dataframe(Columns::Declared(set));
                    }
                }
                (SemanticType::Dataframe(Columns::Dynamic), _) => {
                    self.error(Check::FieldType, at, "expected \"dynamic\" or a list of column names".into())
                }
                _ => self.error(
                    Check::FieldType,
                    at,
                    "`columns` only applies to a dataframe without a column set".into(),
                ),
            }
        }
        if let Some(keys) = obj.opt("keys") {
            let at = obj.at("keys");
            if matches!(ty, SemanticType::Dict { keys: None }) {
                let keys = self.strings(Some(keys), at);
                ty = SemanticType::Dict { keys: Some(keys) };
            } else {
                self.error(Check::FieldType, at, "`keys` only applies to a dict type".into());
            }
        }
        obj.finish(self);
        ty
    }

    fn io_map(&mut self, value: Option<&Value>, path: String) -> IndexMap<String, SemanticType> {
        let Some(value) = value else {
            return IndexMap::new();
        };
        let Some(map) = value.as_object() else {
            self.error(Check::FieldType, path, "expected an object".into());
            return IndexMap::new();
        };
        map.iter().map(|(k, v)| (k.clone(), self.io_type(v, &join(&path, k)))).collect()
    }

    fn rules(&mut self, value: Option<&Value>, path: String, allow_allowed: bool) -> (ValidationRules, Option<Vec<Value>>) {
        let mut rules = ValidationRules::default();
        let Some(value) = value else {
            return (rules, None);
        };
        let Some(mut obj) = self.object(value, &path) else {
            return (rules, None);
        };
        let v = obj.opt("not_empty");
        rules.not_empty = self.boolean(v, obj.at("not_empty")).unwrap_or(false);
        let mut allowed = None;
        if allow_allowed {
            let v = obj.opt("allowed_values");
            allowed = self.literal_list(v, obj.at("allowed_values"));
        }
        let v = obj.opt("min");
        rules.min = self.number(v, obj.at("min"));
        let v = obj.opt("max");
        rules.max = self.number(v, obj.at("max"));
        let v = obj.opt("required");
        rules.required = self.boolean(v, obj.at("required"));
        obj.finish(self);
        (rules, allowed)
    }

    fn tool_parameter(&mut self, value: &Value, path: &str) -> Option<ParameterDefinition> {
        let mut obj = self.object(value, path)?;
        let v = obj.req(self, "name");
        let name = self.string(v, obj.at("name"));
        let v = obj.req(self, "type");
        let ty = self.type_expr(v, obj.at("type"));
        let v = obj.opt("description");
        let description = self.string(v, obj.at("description"));
        let v = obj.opt("required");
        let required = self.boolean(v, obj.at("required")).unwrap_or(false);
        let default = obj.opt("default").cloned();
        let v = obj.opt("allowed_values");
        let allowed_values = self.literal_list(v, obj.at("allowed_values"));
        let v = obj.opt("examples");
        let examples = self.literal_list(v, obj.at("examples"));
        let v = obj.opt("validation_rules");
        let (rules, _) = self.rules(v, obj.at("validation_rules"), false);
        obj.finish(self);
        Some(ParameterDefinition { name, ty, description, required, default, allowed_values, examples, rules })
    }

    fn workflow_parameter(&mut self, name: &str, value: &Value, path: &str) -> Option<ParameterDefinition> {
        let mut obj = self.object(value, path)?;
        let v = obj.req(self, "type");
        let ty = self.type_expr(v, obj.at("type"));
        let v = obj.opt("required");
        let required = self.boolean(v, obj.at("required")).unwrap_or(false);
        let default = obj.opt("default").cloned();
        let v = obj.opt("description");
        let description = self.string(v, obj.at("description"));
        let v = obj.opt("validation_rules");
        let (rules, allowed_values) = self.rules(v, obj.at("validation_rules"), true);
        let v = obj.opt("examples");
        let examples = self.literal_list(v, obj.at("examples"));
        obj.finish(self);
        Some(ParameterDefinition {
            name: name.to_string(),
            ty,
            description,
            required,
            default,
            allowed_values,
            examples,
            rules,
        })
    }

    fn tool(&mut self, value: &Value) -> ToolDefinition {
        let mut tool = ToolDefinition {
            id: String::new(),
            name: String::new(),
            description: String::new(),
            version: Version::new(0, 0, 0),
            parameters: Vec::new(),
            io: IoContract::default(),
            dependencies: Vec::new(),
            domain_tags: Vec::new(),
            provenance: Provenance::default(),
            estimated_duration: 0.0,
            requires_network: false,
        };
        let Some(mut obj) = self.object(value, "") else {
            return tool;
        };
        let v = obj.req(self, "id");
        tool.id = self.string(v, "id".into());
        let v = obj.req(self, "name");
        tool.name = self.string(v, "name".into());
        // absent and empty descriptions are both a documentation defect
        let v = obj.opt("description");
        tool.description = self.string(v, "description".into());
        let v = obj.req(self, "version");
        tool.version = self.version(v, "version".into());
        match obj.req(self, "parameters") {
            Some(Value::Array(items)) => {
                tool.parameters = items
                    .iter()
                    .enumerate()
                    .filter_map(|(i, p)| self.tool_parameter(p, &format!("parameters[{i}]")))
                    .collect();
            }
            Some(_) => self.error(Check::FieldType, "parameters".into(), "expected a list".into()),
            None => {}
        }
        let v = obj.req(self, "input_schema");
        tool.io.inputs = self.io_map(v, "input_schema".into());
        let v = obj.req(self, "output_schema");
        tool.io.outputs = self.io_map(v, "output_schema".into());
        let v = obj.opt("dependencies");
        tool.dependencies = self.strings(v, "dependencies".into());
        let v = obj.opt("domain_tags");
        tool.domain_tags = self.strings(v, "domain_tags".into());
        if let Some(p) = obj.req(self, "provenance") {
            if let Some(mut prov) = self.object(p, "provenance") {
                let v = prov.req(self, "origin");
                tool.provenance.origin = self.string(v, "provenance.origin".into());
                let v = prov.req(self, "maintainer");
                tool.provenance.maintainer = self.string(v, "provenance.maintainer".into());
                prov.finish(self);
            }
        }
        let v = obj.opt("estimated_duration");
        tool.estimated_duration = self.number(v, "estimated_duration".into()).unwrap_or(0.0);
        let v = obj.opt("requires_network");
        tool.requires_network = self.boolean(v, "requires_network".into()).unwrap_or(false);
        obj.finish(self);
        tool
    }

    fn step(&mut self, value: &Value, path: &str) -> Option<StepDefinition> {
        let mut obj = self.object(value, path)?;
        let v = obj.req(self, "step_id");
        let step_id = self.string(v, obj.at("step_id"));
        let v = obj.req(self, "tool_id");
        let tool_id = self.string(v, obj.at("tool_id"));
        let v = obj.opt("name");
        let name = self.string(v, obj.at("name"));
        let v = obj.opt("description");
        let description = self.string(v, obj.at("description"));
        let parameters = match obj.opt("parameters") {
            None => IndexMap::new(),
            Some(Value::Object(map)) => {
                map.iter().map(|(k, v)| (k.clone(), StepBinding::from_literal(v.clone()))).collect()
            }
            Some(_) => {
                self.error(Check::FieldType, obj.at("parameters"), "expected an object".into());
                IndexMap::new()
            }
        };
        let v = obj.opt("dependencies");
        let dependencies = self.strings(v, obj.at("dependencies"));
        let v = obj.opt("estimated_duration");
        let estimated_duration = self.number(v, obj.at("estimated_duration")).unwrap_or(0.0);
        obj.finish(self);
        Some(StepDefinition { step_id, tool_id, name, description, parameters, dependencies, estimated_duration })
    }

    fn mapping(&mut self, value: &Value, path: &str) -> Option<ParameterMapping> {
        let mut obj = self.object(value, path)?;
        let mut field = |d: &mut Decoder, key: &'static str| {
            let v = obj.req(d, key);
            d.string(v, join(path, key))
        };
        let from_step = field(self, "from_step");
        let from_parameter = field(self, "from_parameter");
        let to_step = field(self, "to_step");
        let to_parameter = field(self, "to_parameter");
        let v = obj.opt("description");
        let description = self.string(v, obj.at("description"));
        obj.finish(self);
        Some(ParameterMapping { from_step, from_parameter, to_step, to_parameter, description })
    }

    fn edge(&mut self, value: &Value, path: &str) -> Option<EdgeDefinition> {
        let mut obj = self.object(value, path)?;
        let mut field = |d: &mut Decoder, key: &'static str| {
            let v = obj.req(d, key);
            d.string(v, join(path, key))
        };
        let edge = EdgeDefinition {
            edge_id: field(self, "edge_id"),
            source_node_id: field(self, "source_node_id"),
            target_node_id: field(self, "target_node_id"),
            source_output: field(self, "source_output"),
            target_input: field(self, "target_input"),
        };
        obj.finish(self);
        Some(edge)
    }

    fn list<T>(
        &mut self,
        value: Option<&Value>,
        path: &str,
        mut item: impl FnMut(&mut Self, &Value, &str) -> Option<T>,
    ) -> Vec<T> {
        match value {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| item(self, v, &format!("{path}[{i}]")))
                .collect(),
            Some(_) => {
                self.error(Check::FieldType, path.to_string(), "expected a list".into());
                Vec::new()
            }
        }
    }

    fn workflow(&mut self, value: &Value) -> WorkflowDefinition {
        let mut wf = WorkflowDefinition {
            workflow_id: String::new(),
            name: String::new(),
            description: String::new(),
            version: Version::new(1, 0, 0),
            steps: Vec::new(),
            parameter_mappings: Vec::new(),
            edges: Vec::new(),
            parameters: IndexMap::new(),
            metadata: WorkflowMetadata::default(),
        };
        let Some(mut obj) = self.object(value, "") else {
            return wf;
        };
        let v = obj.req(self, "workflow_id");
        wf.workflow_id = self.string(v, "workflow_id".into());
        let v = obj.req(self, "name");
        wf.name = self.string(v, "name".into());
        let v = obj.opt("description");
        wf.description = self.string(v, "description".into());
        if let Some(v) = obj.opt("version") {
            wf.version = self.version(Some(v), "version".into());
        }
        let v = obj.req(self, "steps");
        wf.steps = self.list(v, "steps", Self::step);
        let v = obj.opt("parameter_mappings");
        wf.parameter_mappings = self.list(v, "parameter_mappings", Self::mapping);
        let v = obj.opt("edges");
        wf.edges = self.list(v, "edges", Self::edge);
        match obj.opt("parameters") {
            None => {}
            Some(Value::Object(map)) => {
                for (name, p) in map {
                    if let Some(param) = self.workflow_parameter(name, p, &format!("parameters.{name}")) {
                        wf.parameters.insert(name.clone(), param);
                    }
                }
            }
            Some(_) => self.error(Check::FieldType, "parameters".into(), "expected an object".into()),
        }
        if let Some(meta) = obj.opt("metadata") {
            if let Some(mut m) = self.object(meta, "metadata") {
                let v = m.opt("complexity");
                wf.metadata.complexity = v.map(|v| self.string(Some(v), "metadata.complexity".into()));
                match m.opt("estimated_duration_minutes") {
                    None => {}
                    Some(Value::Number(n)) => wf.metadata.estimated_duration_minutes = Some(n.clone()),
                    Some(_) => self.error(
                        Check::FieldType,
                        "metadata.estimated_duration_minutes".into(),
                        "expected a number".into(),
                    ),
                }
                let v = m.opt("tags");
                wf.metadata.tags = self.strings(v, "metadata.tags".into());
                let v = m.opt("categories");
                wf.metadata.categories = self.strings(v, "metadata.categories".into());
                let v = m.opt("use_cases");
                wf.metadata.use_cases = self.strings(v, "metadata.use_cases".into());
                m.finish(self);
            }
        }
        obj.finish(self);
        wf
    }
}

fn parse_json(text: &str) -> Result<Value, Vec<Diagnostic>> {
    serde_json::from_str(text).map_err(|e| {
        vec![Diagnostic::error(Check::JsonSyntax, format!("line {} column {}", e.line(), e.column()), e.to_string())]
    })
}

/// Structural decoding only (see module docs).
pub fn decode_tool_definition(document: &Value) -> Result<ToolDefinition, Vec<Diagnostic>> {
    let mut d = Decoder { diags: Vec::new() };
    let tool = d.tool(document);
    if d.diags.is_empty() {
        Ok(tool)
    } else {
        Err(d.diags)
    }
}

pub fn decode_workflow_definition(document: &Value) -> Result<WorkflowDefinition, Vec<Diagnostic>> {
    let mut d = Decoder { diags: Vec::new() };
    let wf = d.workflow(document);
    if d.diags.is_empty() {
        Ok(wf)
    } else {
        Err(d.diags)
    }
}

pub fn decode_tool_text(text: &str) -> Result<ToolDefinition, Vec<Diagnostic>> {
    decode_tool_definition(&parse_json(text)?)
}

pub fn decode_workflow_text(text: &str) -> Result<WorkflowDefinition, Vec<Diagnostic>> {
    decode_workflow_definition(&parse_json(text)?)
}

/// Merges invariant findings into structural ones, dropping any invariant
/// diagnostic at a location that already failed structurally.
fn merge(structural: Vec<Diagnostic>, invariants: Vec<Diagnostic>) -> Vec<Diagnostic> {
    let seen: HashSet<String> = structural.iter().map(|d| d.location.clone()).collect();
    let mut all = structural;
    all.extend(invariants.into_iter().filter(|d| !seen.contains(&d.location)));
    all
}

/// Decodes a tool document and verifies every invariant, collecting all
/// violations.
pub fn parse_tool_definition(document: &Value) -> Result<ToolDefinition, Vec<Diagnostic>> {
    let mut d = Decoder { diags: Vec::new() };
    let tool = d.tool(document);
    let all = merge(d.diags, check_tool(&tool));
    if all.iter().any(Diagnostic::is_error) {
        Err(all)
    } else {
        Ok(tool)
    }
}

pub fn parse_workflow_definition(document: &Value) -> Result<WorkflowDefinition, Vec<Diagnostic>> {
    let mut d = Decoder { diags: Vec::new() };
    let wf = d.workflow(document);
    let all = merge(d.diags, check_workflow(&wf));
    if all.iter().any(Diagnostic::is_error) {
        Err(all)
    } else {
        Ok(wf)
    }
}

pub fn parse_tool_text(text: &str) -> Result<ToolDefinition, Vec<Diagnostic>> {
    parse_tool_definition(&parse_json(text)?)
}

pub fn parse_workflow_text(text: &str) -> Result<WorkflowDefinition, Vec<Diagnostic>> {
    parse_workflow_definition(&parse_json(text)?)
}

/// A list of parameter definitions in the tool `parameters` format.
pub fn parse_parameter_definitions(document: &Value) -> Result<Vec<ParameterDefinition>, Vec<Diagnostic>> {
    let mut d = Decoder { diags: Vec::new() };
    if !document.is_array() {
        return Err(vec![Diagnostic::error(Check::FieldType, "parameters", "expected a list")]);
    }
    let params = d.list(Some(document), "parameters", |d, v, p| d.tool_parameter(v, p));
    let mut invariants = Vec::new();
    check_distinct(&mut invariants, params.iter().enumerate().map(|(i, p)| (p.name.as_str(), format!("parameters[{i}].name"))), "parameter");
    for (i, p) in params.iter().enumerate() {
        invariants.extend(check_parameter(p, &format!("parameters[{i}]")));
    }
    let all = merge(d.diags, invariants);
    if all.iter().any(Diagnostic::is_error) {
        Err(all)
    } else {
        Ok(params)
    }
}

// ---------------------------------------------------------------------------
// invariants

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(out: &mut Vec<Diagnostic>, value: &str, location: String) {
    if !is_identifier(value) {
        out.push(Diagnostic::error(
            Check::IdentifierFormat,
            location,
            format!("`{value}` is not an identifier (letters, digits and `_`, not starting with a digit)"),
        ));
    }
}

fn check_distinct<'a>(out: &mut Vec<Diagnostic>, items: impl IntoIterator<Item = (&'a str, String)>, what: &str) {
    let mut seen = HashSet::new();
    for (name, location) in items {
        if !seen.insert(name) {
            out.push(Diagnostic::error(Check::DuplicateIdentifier, location, format!("duplicate {what} `{name}`")));
        }
    }
}

fn check_duration(out: &mut Vec<Diagnostic>, minutes: f64, location: String) {
    if !minutes.is_finite() || minutes < 0.0 {
        out.push(Diagnostic::error(Check::NumericRange, location, "duration must be a non-negative number of minutes"));
    }
}

/// Invariants of a single parameter definition; `location` is its path.
pub fn check_parameter(param: &ParameterDefinition, location: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let at = |field: &str| format!("{location}.{field}");

    if param.description.trim().is_empty() {
        out.push(Diagnostic::error(
            Check::DocumentationCompleteness,
            at("description"),
            format!("parameter `{}` has no description", param.name),
        ));
    }

    let lenient = ParameterDefinition { required: false, rules: ValidationRules { required: None, ..param.rules.clone() }, ..param.clone() };

    if let Some(allowed) = &param.allowed_values {
        let loc = if location.starts_with("parameters.") { at("validation_rules.allowed_values") } else { at("allowed_values") };
        if allowed.is_empty() {
            out.push(Diagnostic::error(Check::AllowedValuesConsistency, loc.clone(), "allowed_values must not be empty"));
        }
        for (i, v) in allowed.iter().enumerate() {
            if let Err(reason) = value_conforms(&param.ty, v) {
                out.push(Diagnostic::error(Check::AllowedValuesConsistency, format!("{loc}[{i}]"), reason));
            }
            if allowed[..i].iter().any(|w| literal_eq(v, w)) {
                out.push(Diagnostic::error(
                    Check::AllowedValuesConsistency,
                    format!("{loc}[{i}]"),
                    format!("duplicate allowed value {v}"),
                ));
            }
        }
    }

    if let Some(default) = &param.default {
        if param.is_required() {
            out.push(Diagnostic::error(
                Check::DefaultConsistency,
                at("default"),
                "a required parameter cannot carry a default",
            ));
        }
        for diag in validate_value(default, &lenient) {
            out.push(Diagnostic::error(Check::DefaultConsistency, at("default"), format!("default {}", diag.message)));
        }
    }

    if let Some(examples) = &param.examples {
        for (i, example) in examples.iter().enumerate() {
            for diag in validate_value(example, &lenient) {
                out.push(Diagnostic::error(
                    Check::ExampleConsistency,
                    format!("{}[{i}]", at("examples")),
                    format!("example {}", diag.message),
                ));
            }
        }
    }

    if let (Some(min), Some(max)) = (param.rules.min, param.rules.max) {
        if min > max {
            out.push(Diagnostic::error(
                Check::RuleConsistency,
                at("validation_rules"),
                format!("min {min} exceeds max {max}"),
            ));
        }
    }
    if (param.rules.min.is_some() || param.rules.max.is_some())
        && !matches!(&param.ty, SemanticType::Number | SemanticType::Integer | SemanticType::Dict { .. })
        && !matches!(&param.ty, SemanticType::List(e) if e.is_numeric())
    {
        out.push(Diagnostic::error(
            Check::RuleConsistency,
            at("validation_rules"),
            format!("min/max rules do not apply to {}", param.ty),
        ));
    }
    out
}

/// Every invariant of a tool definition.
pub fn check_tool(tool: &ToolDefinition) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_identifier(&mut out, &tool.id, "id".into());
    if tool.description.trim().is_empty() {
        out.push(Diagnostic::error(Check::DocumentationCompleteness, "description", "tool has no description"));
    }
    for (i, param) in tool.parameters.iter().enumerate() {
        let loc = format!("parameters[{i}]");
        check_identifier(&mut out, &param.name, format!("{loc}.name"));
        out.extend(check_parameter(param, &loc));
    }
    check_distinct(
        &mut out,
        tool.parameters.iter().enumerate().map(|(i, p)| (p.name.as_str(), format!("parameters[{i}].name"))),
        "parameter",
    );
    for name in tool.io.inputs.keys() {
        check_identifier(&mut out, name, format!("input_schema.{name}"));
    }
    for name in tool.io.outputs.keys() {
        check_identifier(&mut out, name, format!("output_schema.{name}"));
    }
    for (i, dep) in tool.dependencies.iter().enumerate() {
        check_identifier(&mut out, dep, format!("dependencies[{i}]"));
        if *dep == tool.id {
            out.push(Diagnostic::error(Check::SelfReference, format!("dependencies[{i}]"), "a tool cannot depend on itself"));
        }
    }
    check_distinct(
        &mut out,
        tool.dependencies.iter().enumerate().map(|(i, d)| (d.as_str(), format!("dependencies[{i}]"))),
        "dependency",
    );
    check_duration(&mut out, tool.estimated_duration, "estimated_duration".into());
    out
}

/// Every invariant of a workflow definition, including reference resolution
/// among its own steps and parameters.
pub fn check_workflow(wf: &WorkflowDefinition) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_identifier(&mut out, &wf.workflow_id, "workflow_id".into());
    if wf.steps.is_empty() {
        out.push(Diagnostic::error(Check::NonemptySteps, "steps", "a workflow needs at least one step"));
    }
    let step_ids: HashSet<&str> = wf.steps.iter().map(|s| s.step_id.as_str()).collect();
    check_distinct(
        &mut out,
        wf.steps.iter().enumerate().map(|(i, s)| (s.step_id.as_str(), format!("steps[{i}].step_id"))),
        "step_id",
    );
    let dangling = |out: &mut Vec<Diagnostic>, id: &str, location: String| {
        if !step_ids.contains(id) {
            out.push(Diagnostic::error(Check::DanglingReference, location, format!("no step named `{id}`")));
        }
    };

    for (i, step) in wf.steps.iter().enumerate() {
        let loc = format!("steps[{i}]");
        check_identifier(&mut out, &step.step_id, format!("{loc}.step_id"));
        check_identifier(&mut out, &step.tool_id, format!("{loc}.tool_id"));
        for (j, dep) in step.dependencies.iter().enumerate() {
            let at = format!("{loc}.dependencies[{j}]");
            if *dep == step.step_id {
                out.push(Diagnostic::error(Check::SelfReference, at, "a step cannot depend on itself"));
            } else {
                dangling(&mut out, dep, at);
            }
        }
        check_distinct(
            &mut out,
            step.dependencies.iter().enumerate().map(|(j, d)| (d.as_str(), format!("{loc}.dependencies[{j}]"))),
            "dependency",
        );
        for (key, binding) in &step.parameters {
            let at = format!("{loc}.parameters.{key}");
            check_identifier(&mut out, key, at.clone());
            if let StepBinding::Reference(name) = binding {
                if !wf.parameters.contains_key(name) {
                    out.push(Diagnostic::error(
                        Check::DanglingReference,
                        at,
                        format!("no workflow-level parameter named `{name}`"),
                    ));
                }
            }
        }
        check_duration(&mut out, step.estimated_duration, format!("{loc}.estimated_duration"));
    }

    for (i, m) in wf.parameter_mappings.iter().enumerate() {
        let loc = format!("parameter_mappings[{i}]");
        if m.from_step == m.to_step {
            out.push(Diagnostic::error(Check::SelfReference, loc.clone(), "a mapping cannot connect a step to itself"));
        }
        dangling(&mut out, &m.from_step, format!("{loc}.from_step"));
        dangling(&mut out, &m.to_step, format!("{loc}.to_step"));
        check_identifier(&mut out, &m.from_parameter, format!("{loc}.from_parameter"));
        check_identifier(&mut out, &m.to_parameter, format!("{loc}.to_parameter"));
    }

    check_distinct(
        &mut out,
        wf.edges.iter().enumerate().map(|(i, e)| (e.edge_id.as_str(), format!("edges[{i}].edge_id"))),
        "edge_id",
    );
    for (i, e) in wf.edges.iter().enumerate() {
        let loc = format!("edges[{i}]");
        check_identifier(&mut out, &e.edge_id, format!("{loc}.edge_id"));
        if e.source_node_id == e.target_node_id {
            out.push(Diagnostic::error(Check::SelfReference, loc.clone(), "an edge cannot connect a step to itself"));
        }
        dangling(&mut out, &e.source_node_id, format!("{loc}.source_node_id"));
        dangling(&mut out, &e.target_node_id, format!("{loc}.target_node_id"));
        check_identifier(&mut out, &e.source_output, format!("{loc}.source_output"));
        check_identifier(&mut out, &e.target_input, format!("{loc}.target_input"));
    }

    for (name, param) in &wf.parameters {
        let loc = format!("parameters.{name}");
        check_identifier(&mut out, name, loc.clone());
        out.extend(check_parameter(param, &loc));
    }
    out
}
