//! Schema-gated workflow orchestration.
//!
//! Tools and workflows are versioned, machine-checked documents held in a
//! [`registry`]. Workflows are validated as whole DAGs by [`validation`]. The
//! [`gate`] turns planner proposals into invocation objects, negotiates
//! missing or invalid parameters, and is the only path to the [`executor`],
//! which runs approved invocations and keeps a provenance record per run.

pub mod bootstrap;
pub mod clock;
pub mod executor;
pub mod gate;
pub mod registry;
pub mod replay;
pub mod runtime;
pub mod schema;
pub mod storage;
pub mod validation;

pub use schema::{Check, Diagnostic, Severity};

/// Engine version recorded in every run's environment metadata.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
