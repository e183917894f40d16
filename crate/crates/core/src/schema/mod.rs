//! Type system, definition documents and value-level validation.

pub mod definitions;
pub mod diagnostic;
pub mod document;
pub mod types;
pub mod value;
pub mod version;

pub use definitions::*;
pub use diagnostic::{has_errors, render_diagnostics, Check, Diagnostic, Severity};
pub use document::{
    canonical_json, check_parameter, check_tool, check_workflow, content_hash, decode_tool_definition,
    decode_tool_text, decode_workflow_definition, decode_workflow_text, is_identifier, parse_tool_definition,
    parse_parameter_definitions, parse_tool_text, parse_workflow_definition, parse_workflow_text, render_canonical,
    workflow_parameter_document, parameters_document, tool_to_document, workflow_to_document,
};
pub use types::{parse_semantic_type, types_compatible, Columns, SemanticType, TypeSyntaxError};
pub use value::{literal_eq, validate_value, value_conforms};
pub use version::{Version, VersionError};
