//! Loads a fixture tree (`tools/`, `workflows/`, `datasets/datasets.json`)
//! into a registry.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::registry::{HealthProbe, Registry, RegistryError};
use crate::schema::{parse_tool_text, parse_workflow_text, render_diagnostics, ToolDefinition, Version};

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:\n{diagnostics}")]
    Invalid { path: PathBuf, diagnostics: String },
    #[error("{path}: {message}")]
    Rejected { path: PathBuf, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub tools: Vec<(String, Version)>,
    pub workflows: Vec<(String, Version)>,
    pub datasets: Vec<Uuid>,
    /// Entries that were already present.
    pub skipped: Vec<String>,
}

#[derive(Deserialize)]
struct DatasetEntry {
    dataset_id: Uuid,
    name: String,
    file: String,
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, BootstrapError> {
    let io = |source| BootstrapError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read(path: &Path) -> Result<String, BootstrapError> {
    fs::read_to_string(path).map_err(|source| BootstrapError::Io { path: path.to_path_buf(), source })
}

/// Admits every tool (dependencies first, with declared-stub probes), then
/// every workflow, then the datasets listed in `datasets/datasets.json`
/// under their fixed ids. Entries already present are skipped, so running
/// it twice is harmless.
pub fn bootstrap(registry: &Registry, fixtures: &Path) -> Result<BootstrapReport, BootstrapError> {
    let mut report = BootstrapReport::default();

    let mut tools: Vec<(PathBuf, ToolDefinition)> = Vec::new();
    for path in json_files(&fixtures.join("tools"))? {
        let tool = parse_tool_text(&read(&path)?)
            .map_err(|d| BootstrapError::Invalid { path: path.clone(), diagnostics: render_diagnostics(&d) })?;
        tools.push((path, tool));
    }
    // dependencies before dependents; ties keep file order
    let mut placed: BTreeSet<String> = BTreeSet::new();
    let mut ordered = Vec::new();
    while !tools.is_empty() {
        let index = tools
            .iter()
            .position(|(_, t)| t.dependencies.iter().all(|d| placed.contains(d) || !tools.iter().any(|(_, o)| o.id == *d)))
            .unwrap_or(0);
        let (path, tool) = tools.remove(index);
        placed.insert(tool.id.clone());
        ordered.push((path, tool));
    }
    for (path, tool) in ordered {
        match registry.admit_tool(&tool, &HealthProbe::declared_stub(&tool.id)) {
            Ok(r) if r.admitted => report.tools.push((tool.id.clone(), tool.version)),
            Ok(r) => return Err(BootstrapError::Rejected { path, message: r.render_text() }),
            Err(RegistryError::DuplicateVersion { .. }) => report.skipped.push(format!("tool {} {}", tool.id, tool.version)),
            Err(e) => return Err(e.into()),
        }
    }

    for path in json_files(&fixtures.join("workflows"))? {
        let wf = parse_workflow_text(&read(&path)?)
            .map_err(|d| BootstrapError::Invalid { path: path.clone(), diagnostics: render_diagnostics(&d) })?;
        match registry.admit_workflow(&wf) {
            Ok(r) if r.admitted => report.workflows.push((wf.workflow_id.clone(), wf.version)),
            Ok(r) => return Err(BootstrapError::Rejected { path, message: r.render_text() }),
            Err(RegistryError::DuplicateVersion { .. }) => {
                report.skipped.push(format!("workflow {} {}", wf.workflow_id, wf.version))
            }
            Err(e) => return Err(e.into()),
        }
    }

    let index = fixtures.join("datasets").join("datasets.json");
    if index.exists() {
        let entries: Vec<DatasetEntry> = serde_json::from_str(&read(&index)?)
            .map_err(|e| BootstrapError::Rejected { path: index.clone(), message: e.to_string() })?;
        for entry in entries {
            if registry.dataset(&entry.dataset_id.to_string()).is_ok() {
                report.skipped.push(format!("dataset {}", entry.dataset_id));
                continue;
            }
            let source = fixtures.join("datasets").join(&entry.file);
            registry.add_dataset(&source, Some(&entry.name), Some(entry.dataset_id))?;
            report.datasets.push(entry.dataset_id);
        }
    }
    Ok(report)
}
