//! Tool and workflow definitions as in-memory values.
//!
//! Decoding, invariant checks and canonical rendering live in
//! [`super::document`]; these types carry no validation of their own so that
//! candidates can be built programmatically and handed to admission.

use indexmap::IndexMap;
use serde_json::{Number, Value};

use super::types::SemanticType;
use super::version::Version;

pub type Literal = Value;

/// Rule set attached to a parameter. `allowed_values` lives on
/// [`ParameterDefinition`] because tool documents place it beside the type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationRules {
    pub not_empty: bool,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub required: Option<bool>,
}

impl ValidationRules {
    pub fn is_empty(&self) -> bool {
        !self.not_empty && self.min.is_none() && self.max.is_none() && self.required.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDefinition {
    pub name: String,
    pub ty: SemanticType,
    pub description: String,
    pub required: bool,
    pub default: Option<Literal>,
    pub allowed_values: Option<Vec<Literal>>,
    pub examples: Option<Vec<Literal>>,
    pub rules: ValidationRules,
}

impl ParameterDefinition {
    pub fn new(name: impl Into<String>, ty: SemanticType, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty,
            description: description.into(),
            required: false,
            default: None,
            allowed_values: None,
            examples: None,
            rules: ValidationRules::default(),
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn with_default(mut self, value: Literal) -> Self {
        self.default = Some(value);
        self
    }

    pub fn with_allowed(mut self, values: Vec<Literal>) -> Self {
        self.allowed_values = Some(values);
        self
    }

    pub fn with_examples(mut self, values: Vec<Literal>) -> Self {
        self.examples = Some(values);
        self
    }

    /// Required either by flag or by a `required` validation rule.
    pub fn is_required(&self) -> bool {
        self.required || self.rules.required == Some(true)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoContract {
    pub inputs: IndexMap<String, SemanticType>,
    pub outputs: IndexMap<String, SemanticType>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub origin: String,
    pub maintainer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolDefinition {
    pub id: String,
    pub name: String,
    pub description: String,
    pub version: Version,
    pub parameters: Vec<ParameterDefinition>,
    pub io: IoContract,
    pub dependencies: Vec<String>,
    pub domain_tags: Vec<String>,
    pub provenance: Provenance,
    /// Minutes.
    pub estimated_duration: f64,
    pub requires_network: bool,
}

impl ToolDefinition {
    pub fn parameter(&self, name: &str) -> Option<&ParameterDefinition> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// A step-local parameter binding: either a literal or a reference to a
/// workflow-level parameter, written `{"$param": "<name>"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepBinding {
    Literal(Literal),
    Reference(String),
}

pub const REFERENCE_KEY: &str = "$param";

impl StepBinding {
    pub fn from_literal(value: Literal) -> Self {
        if let Value::Object(map) = &value {
            if map.len() == 1 {
                if let Some(Value::String(name)) = map.get(REFERENCE_KEY) {
                    return StepBinding::Reference(name.clone());
                }
            }
        }
        StepBinding::Literal(value)
    }

    pub fn to_literal(&self) -> Literal {
        match self {
            StepBinding::Literal(v) => v.clone(),
            StepBinding::Reference(name) => {
                let mut map = serde_json::Map::new();
                map.insert(REFERENCE_KEY.into(), Value::String(name.clone()));
                Value::Object(map)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDefinition {
    pub step_id: String,
    pub tool_id: String,
    pub name: String,
    pub description: String,
    pub parameters: IndexMap<String, StepBinding>,
    pub dependencies: Vec<String>,
    pub estimated_duration: f64,
}

impl StepDefinition {
    pub fn new(step_id: impl Into<String>, tool_id: impl Into<String>) -> Self {
        let step_id = step_id.into();
        Self {
            name: step_id.clone(),
            step_id,
            tool_id: tool_id.into(),
            description: String::new(),
            parameters: IndexMap::new(),
            dependencies: Vec::new(),
            estimated_duration: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMapping {
    pub from_step: String,
    pub from_parameter: String,
    pub to_step: String,
    pub to_parameter: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDefinition {
    pub edge_id: String,
    pub source_node_id: String,
    pub target_node_id: String,
    pub source_output: String,
    pub target_input: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkflowMetadata {
    pub complexity: Option<String>,
    pub estimated_duration_minutes: Option<Number>,
    pub tags: Vec<String>,
    pub categories: Vec<String>,
    pub use_cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowDefinition {
    pub workflow_id: String,
    pub name: String,
    pub description: String,
    pub version: Version,
    pub steps: Vec<StepDefinition>,
    pub parameter_mappings: Vec<ParameterMapping>,
    pub edges: Vec<EdgeDefinition>,
    /// Workflow-level parameters in declaration order.
    pub parameters: IndexMap<String, ParameterDefinition>,
    pub metadata: WorkflowMetadata,
}

impl WorkflowDefinition {
    pub fn step(&self, step_id: &str) -> Option<&StepDefinition> {
        self.steps.iter().find(|s| s.step_id == step_id)
    }

    pub fn step_index(&self, step_id: &str) -> Option<usize> {
        self.steps.iter().position(|s| s.step_id == step_id)
    }

    /// Ordering pairs `(upstream, downstream)` implied by step dependencies
    /// and edges, deduplicated, in definition order.
    pub fn ordering_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |a: &str, b: &str| {
            let pair = (a.to_string(), b.to_string());
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        };
        for step in &self.steps {
            for dep in &step.dependencies {
                push(dep, &step.step_id);
            }
        }
        for edge in &self.edges {
            push(&edge.source_node_id, &edge.target_node_id);
        }
        pairs
    }

    /// Data flows along mappings and edges, with an edge that mirrors a
    /// mapping counted once.
    pub fn data_flows(&self) -> Vec<DataFlow> {
        let mut flows: Vec<DataFlow> = Vec::new();
        for (index, edge) in self.edges.iter().enumerate() {
            let flow = DataFlow {
                from_step: edge.source_node_id.clone(),
                from_output: edge.source_output.clone(),
                to_step: edge.target_node_id.clone(),
                to_input: edge.target_input.clone(),
                origin: FlowOrigin::Edge(index),
            };
            if !flows.iter().any(|f| f.same_endpoints(&flow)) {
                flows.push(flow);
            }
        }
        for (index, mapping) in self.parameter_mappings.iter().enumerate() {
            let flow = DataFlow {
                from_step: mapping.from_step.clone(),
                from_output: mapping.from_parameter.clone(),
                to_step: mapping.to_step.clone(),
                to_input: mapping.to_parameter.clone(),
                origin: FlowOrigin::Mapping(index),
            };
            if !flows.iter().any(|f| f.same_endpoints(&flow)) {
                flows.push(flow);
            }
        }
        flows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowOrigin {
    Edge(usize),
    Mapping(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFlow {
    pub from_step: String,
    pub from_output: String,
    pub to_step: String,
    pub to_input: String,
    pub origin: FlowOrigin,
}

impl DataFlow {
    fn same_endpoints(&self, other: &DataFlow) -> bool {
        self.from_step == other.from_step
            && self.from_output == other.from_output
            && self.to_step == other.to_step
            && self.to_input == other.to_input
    }

    pub fn location(&self) -> String {
        match self.origin {
            FlowOrigin::Edge(i) => format!("edges[{i}]"),
            FlowOrigin::Mapping(i) => format!("parameter_mappings[{i}]"),
        }
    }
}
