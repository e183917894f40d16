use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// Every check that can produce a [`Diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    // document structure
    JsonSyntax,
    UnknownField,
    RequiredField,
    FieldType,
    TypeSyntax,
    VersionFormat,
    // definition invariants
    IdentifierFormat,
    DuplicateIdentifier,
    SelfReference,
    DanglingReference,
    NonemptySteps,
    NumericRange,
    DefaultConsistency,
    AllowedValuesConsistency,
    ExampleConsistency,
    RuleConsistency,
    DocumentationCompleteness,
    // value-level rules
    TypeMismatch,
    Required,
    NotEmpty,
    AllowedValues,
    Min,
    Max,
    // tool admission
    ParameterConsistency,
    ServiceAvailability,
    // workflow validation
    Acyclicity,
    EdgeTypeCompatibility,
    ParameterResolution,
    ToolAvailability,
    MappingConsistency,
    // gate
    UnknownAction,
    ActionArguments,
    UnknownParameter,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::JsonSyntax => "json_syntax",
            Check::UnknownField => "unknown_field",
            Check::RequiredField => "required_field",
            Check::FieldType => "field_type",
            Check::TypeSyntax => "type_syntax",
            Check::VersionFormat => "version_format",
            Check::IdentifierFormat => "identifier_format",
            Check::DuplicateIdentifier => "duplicate_identifier",
            Check::SelfReference => "self_reference",
            Check::DanglingReference => "dangling_reference",
            Check::NonemptySteps => "nonempty_steps",
            Check::NumericRange => "numeric_range",
            Check::DefaultConsistency => "default_consistency",
            Check::AllowedValuesConsistency => "allowed_values_consistency",
            Check::ExampleConsistency => "example_consistency",
            Check::RuleConsistency => "rule_consistency",
            Check::DocumentationCompleteness => "documentation_completeness",
            Check::TypeMismatch => "type_mismatch",
            Check::Required => "required",
            Check::NotEmpty => "not_empty",
            Check::AllowedValues => "allowed_values",
            Check::Min => "min",
            Check::Max => "max",
            Check::ParameterConsistency => "parameter_consistency",
            Check::ServiceAvailability => "service_availability",
            Check::Acyclicity => "acyclicity",
            Check::EdgeTypeCompatibility => "edge_type_compatibility",
            Check::ParameterResolution => "parameter_resolution",
            Check::ToolAvailability => "tool_availability",
            Check::MappingConsistency => "mapping_consistency",
            Check::UnknownAction => "unknown_action",
            Check::ActionArguments => "action_arguments",
            Check::UnknownParameter => "unknown_parameter",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One violated check, located by a document path such as
/// `steps[1].parameters.missing_strategy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub check: Check,
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(check: Check, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, check, location: location.into(), message: message.into() }
    }

    pub fn warning(check: Check, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, check, location: location.into(), message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}[{}] {}: {}", self.check, self.location, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

/// Renders diagnostics one per line, the form the CLI writes to stderr.
pub fn render_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(|d| format!("{d}\n")).collect()
}
