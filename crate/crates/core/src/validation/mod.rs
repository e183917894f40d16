//! Composed-workflow validation.
//!
//! A workflow is checked as a whole DAG against the tools it invokes:
//! acyclicity, type compatibility along every data flow, parameter binding,
//! tool availability and the consistency of mappings and edges with the tool
//! contracts. Every check is a pure function of the workflow and a
//! [`ToolResolver`] snapshot.

mod checks;
pub mod graph;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::registry::RegistryError;
use crate::schema::{check_workflow, Check, Diagnostic, ToolDefinition, WorkflowDefinition};

pub use checks::{
    check_acyclicity, check_edge_types, check_mapping_consistency, check_parameter_resolution,
    check_tool_availability,
};
pub use graph::{suggest_composition, CompositionError, DependencyGraph, GraphError};

/// Looks up the published definition a workflow step's `tool_id` refers to.
pub trait ToolResolver {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError>;
}

/// An in-memory resolver; every tool it holds counts as published.
#[derive(Debug, Default, Clone)]
pub struct StaticResolver {
    tools: HashMap<String, Arc<ToolDefinition>>,
}

impl StaticResolver {
    pub fn new(tools: impl IntoIterator<Item = ToolDefinition>) -> Self {
        Self { tools: tools.into_iter().map(|t| (t.id.clone(), Arc::new(t))).collect() }
    }

    pub fn insert(&mut self, tool: ToolDefinition) {
        self.tools.insert(tool.id.clone(), Arc::new(tool));
    }

    pub fn remove(&mut self, tool_id: &str) {
        self.tools.remove(tool_id);
    }
}

impl ToolResolver for StaticResolver {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError> {
        self.tools.get(tool_id).cloned().ok_or_else(|| RegistryError::not_found_tool(tool_id, None))
    }
}

impl<R: ToolResolver + ?Sized> ToolResolver for &R {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError> {
        (**self).resolve_tool(tool_id)
    }
}

impl<R: ToolResolver + ?Sized> ToolResolver for Arc<R> {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError> {
        (**self).resolve_tool(tool_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        !self.diagnostics.iter().any(Diagnostic::is_error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub workflow_id: String,
    pub checks: Vec<CheckResult>,
    pub valid: bool,
}

pub const WORKFLOW_CHECKS: [Check; 5] = [
    Check::Acyclicity,
    Check::EdgeTypeCompatibility,
    Check::ParameterResolution,
    Check::ToolAvailability,
    Check::MappingConsistency,
];

impl ValidationReport {
    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.checks.iter().flat_map(|c| c.diagnostics.iter())
    }

    pub fn errors(&self) -> Vec<&Diagnostic> {
        self.diagnostics().filter(|d| d.is_error()).collect()
    }

    pub fn check(&self, check: Check) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == check)
    }

    /// Fixed-width table for terminals.
    pub fn render_text(&self) -> String {
        let mut out = format!("workflow {}: {}\n", self.workflow_id, if self.valid { "valid" } else { "INVALID" });
        for result in &self.checks {
            let verdict = if result.passed() { "pass" } else { "FAIL" };
            out.push_str(&format!("  {:<24} {}\n", result.check.as_str(), verdict));
            for d in &result.diagnostics {
                out.push_str(&format!("      {d}\n"));
            }
        }
        out
    }
}

/// Runs all five checks.
///
/// Definition invariants are re-checked first; violations (for example an
/// empty step list) are reported under `parameter_resolution`, since the
/// remaining checks presume a well-formed definition.
pub fn validate_workflow(workflow: &WorkflowDefinition, tools: &dyn ToolResolver) -> ValidationReport {
    let mut resolution = check_workflow(workflow);
    resolution.retain(Diagnostic::is_error);
    resolution.extend(check_parameter_resolution(workflow, tools));
    let checks = vec![
        CheckResult { check: Check::Acyclicity, diagnostics: check_acyclicity(workflow) },
        CheckResult { check: Check::EdgeTypeCompatibility, diagnostics: check_edge_types(workflow, tools) },
        CheckResult { check: Check::ParameterResolution, diagnostics: resolution },
        CheckResult { check: Check::ToolAvailability, diagnostics: check_tool_availability(workflow, tools) },
        CheckResult { check: Check::MappingConsistency, diagnostics: check_mapping_consistency(workflow, tools) },
    ];
    let valid = checks.iter().all(CheckResult::passed);
    ValidationReport { workflow_id: workflow.workflow_id.clone(), checks, valid }
}
