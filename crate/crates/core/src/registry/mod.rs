//! Versioned, persistent stores of admitted tools and workflows.
//!
//! On disk a registry is a directory:
//!
//! ```text
//! <root>/manifest.json                   id -> version -> {status, content_hash, admitted_at}
//! <root>/tools/<id>/<version>.json       canonical tool document
//! <root>/workflows/<id>/<version>.json   canonical workflow document
//! <root>/datasets/<uuid>.csv             registered datasets
//! <root>/datasets/index.json
//! ```
//!
//! Writers serialise through an advisory lock on `<root>/.lock` and reload
//! the manifest under it, so concurrent processes never lose an admission.
//! Published entries are immutable; a change needs a new version.

mod datasets;
pub mod probe;
pub mod search;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::{Clock, IdSource, RandomIds, SystemClock};
use crate::schema::{
    canonical_json, check_tool, check_workflow, content_hash, parse_tool_text, parse_workflow_text, Check,
    Diagnostic, ParameterDefinition, ToolDefinition, Version, WorkflowDefinition,
};
use crate::storage::{write_atomic, DirLock};
use crate::validation::{validate_workflow, ToolResolver, ValidationReport};

pub use datasets::{inspect_csv, DatasetDescriptor, DatasetFormat};
pub use probe::{HealthProbe, ProbeMode};
pub use search::SearchHit;

pub const REGISTRY_DIR_ENV: &str = "SCHEMAGATE_REGISTRY_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Tool,
    Workflow,
}

impl Kind {
    fn dir(self) -> &'static str {
        match self {
            Kind::Tool => "tools",
            Kind::Workflow => "workflows",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Tool => "tool",
            Kind::Workflow => "workflow",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Draft,
    Published,
    Retired,
}

impl fmt::Display for EntryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryStatus::Draft => "draft",
            EntryStatus::Published => "published",
            EntryStatus::Retired => "retired",
        })
    }
}

fn version_suffix(version: &Option<Version>) -> String {
    version.map(|v| format!(" {v}")).unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("{kind} `{id}`{} not found", version_suffix(.version))]
    NotFound { kind: Kind, id: String, version: Option<Version> },
    #[error("{kind} `{id}` {version} is retired")]
    Retired { kind: Kind, id: String, version: Version },
    #[error("{kind} `{id}` {version} is a draft, not published")]
    Unpublished { kind: Kind, id: String, version: Version },
    #[error("{kind} `{id}` {version} is already published")]
    DuplicateVersion { kind: Kind, id: String, version: Version },
    #[error("definition violates its invariants")]
    Invalid(Vec<Diagnostic>),
    #[error("dataset {0} is already registered")]
    DuplicateDataset(Uuid),
    #[error("dataset `{0}` not found")]
    DatasetNotFound(String),
    #[error("dataset rejected: {0}")]
    Dataset(String),
    #[error("registry store is corrupt: {0}")]
    Corrupt(String),
    #[error("no registry at {} (initialise it first)", .0.display())]
    NotInitialised(PathBuf),
    #[error("storage failure at {}: {source}", path.display())]
    Storage { path: PathBuf, source: io::Error },
}

impl RegistryError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        RegistryError::Storage { path: path.to_path_buf(), source }
    }

    pub fn not_found_tool(id: &str, version: Option<Version>) -> Self {
        RegistryError::NotFound { kind: Kind::Tool, id: id.to_string(), version }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, RegistryError::NotFound { .. } | RegistryError::DatasetNotFound(_))
    }
}

/// Which version a lookup wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionReq {
    Latest,
    Exact(Version),
}

impl From<Option<Version>> for VersionReq {
    fn from(v: Option<Version>) -> Self {
        v.map_or(VersionReq::Latest, VersionReq::Exact)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub status: EntryStatus,
    pub content_hash: String,
    pub admitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tools: BTreeMap<String, BTreeMap<Version, ManifestEntry>>,
    pub workflows: BTreeMap<String, BTreeMap<Version, ManifestEntry>>,
}

impl Manifest {
    fn table(&self, kind: Kind) -> &BTreeMap<String, BTreeMap<Version, ManifestEntry>> {
        match kind {
            Kind::Tool => &self.tools,
            Kind::Workflow => &self.workflows,
        }
    }

    fn table_mut(&mut self, kind: Kind) -> &mut BTreeMap<String, BTreeMap<Version, ManifestEntry>> {
        match kind {
            Kind::Tool => &mut self.tools,
            Kind::Workflow => &mut self.workflows,
        }
    }
}

/// A stored definition with its lifecycle metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry<T> {
    pub definition: Arc<T>,
    pub status: EntryStatus,
    pub admitted_at: DateTime<Utc>,
    pub content_hash: String,
}

/// One row of a registry listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySummary {
    pub kind: Kind,
    pub id: String,
    pub version: Version,
    pub status: EntryStatus,
    pub content_hash: String,
    pub admitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionCheck {
    pub check: Check,
    pub outcome: Outcome,
    pub diagnostics: Vec<Diagnostic>,
}

impl AdmissionCheck {
    fn from_diagnostics(check: Check, diagnostics: Vec<Diagnostic>) -> Self {
        let outcome = if diagnostics.iter().any(Diagnostic::is_error) { Outcome::Fail } else { Outcome::Pass };
        Self { check, outcome, diagnostics }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionReport {
    pub candidate_id: String,
    pub version: Version,
    pub checks: Vec<AdmissionCheck>,
    pub admitted: bool,
}

impl AdmissionReport {
    fn new(candidate_id: &str, version: Version, checks: Vec<AdmissionCheck>) -> Self {
        let admitted = checks.iter().all(|c| c.outcome == Outcome::Pass);
        Self { candidate_id: candidate_id.to_string(), version, checks, admitted }
    }

    pub fn failed_checks(&self) -> Vec<Check> {
        self.checks.iter().filter(|c| c.outcome == Outcome::Fail).map(|c| c.check).collect()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.checks.iter().flat_map(|c| c.diagnostics.iter().cloned()).collect()
    }

    pub fn render_text(&self) -> String {
        let verdict = if self.admitted { "admitted" } else { "REJECTED" };
        let mut out = format!("{} {}: {verdict}\n", self.candidate_id, self.version);
        for c in &self.checks {
            let o = if c.outcome == Outcome::Pass { "pass" } else { "FAIL" };
            out.push_str(&format!("  {:<28} {o}\n", c.check.as_str()));
            for d in &c.diagnostics {
                out.push_str(&format!("      {d}\n"));
            }
        }
        out
    }
}

/// Tool admission checks, independent of any store.
///
/// `parameter_consistency` covers every definition invariant apart from
/// documentation; `documentation_completeness` wants a description on the
/// tool and each parameter and at least one example on every required
/// parameter; `service_availability` runs the probe.
pub fn tool_admission_report(candidate: &ToolDefinition, probe: &HealthProbe) -> AdmissionReport {
    let (mut docs, consistency): (Vec<Diagnostic>, Vec<Diagnostic>) =
        check_tool(candidate).into_iter().partition(|d| d.check == Check::DocumentationCompleteness);
    for (i, p) in candidate.parameters.iter().enumerate() {
        if p.is_required() && p.examples.as_ref().is_none_or(Vec::is_empty) {
            docs.push(Diagnostic::error(
                Check::DocumentationCompleteness,
                format!("parameters[{i}].examples"),
                format!("required parameter `{}` needs at least one example", p.name),
            ));
        }
    }
    let mut availability = Vec::new();
    if probe.tool_id != candidate.id {
        availability.push(Diagnostic::error(
            Check::ServiceAvailability,
            "provenance",
            format!("probe is for `{}`, not `{}`", probe.tool_id, candidate.id),
        ));
    } else if let Err(reason) = probe.check() {
        availability.push(Diagnostic::error(Check::ServiceAvailability, "provenance", reason));
    }
    AdmissionReport::new(
        &candidate.id,
        candidate.version,
        vec![
            AdmissionCheck::from_diagnostics(Check::ParameterConsistency, consistency),
            AdmissionCheck::from_diagnostics(Check::DocumentationCompleteness, docs),
            AdmissionCheck::from_diagnostics(Check::ServiceAvailability, availability),
        ],
    )
}

pub fn workflow_admission_report(candidate: &WorkflowDefinition, report: &ValidationReport) -> AdmissionReport {
    AdmissionReport::new(
        &candidate.workflow_id,
        candidate.version,
        report
            .checks
            .iter()
            .map(|c| AdmissionCheck::from_diagnostics(c.check, c.diagnostics.clone()))
            .collect(),
    )
}

#[derive(Default)]
struct State {
    manifest: Manifest,
    tools: HashMap<(String, Version), Arc<ToolDefinition>>,
    workflows: HashMap<(String, Version), Arc<WorkflowDefinition>>,
    datasets: Vec<DatasetDescriptor>,
}

/// Counts reported by health checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryCounts {
    pub tools: usize,
    pub workflows: usize,
    pub datasets: usize,
}

pub struct Registry {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    state: RwLock<State>,
    writer: Mutex<()>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("root", &self.root).finish_non_exhaustive()
    }
}

impl Registry {
    /// Creates an empty registry at `root` (idempotent) and opens it.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        for dir in ["tools", "workflows", "datasets"] {
            let path = root.join(dir);
            fs::create_dir_all(&path).map_err(|e| RegistryError::io(&path, e))?;
        }
        let manifest = root.join("manifest.json");
        if !manifest.exists() {
            let _lock = DirLock::acquire(&root).map_err(|e| RegistryError::io(&root, e))?;
            if !manifest.exists() {
                write_atomic(&manifest, &canonical_json(&Manifest::default()))
                    .map_err(|e| RegistryError::io(&manifest, e))?;
            }
        }
        Self::open(root)
    }

    /// Opens an existing registry.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        if !root.join("manifest.json").exists() {
            return Err(RegistryError::NotInitialised(root));
        }
        let registry = Self {
            root,
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
            state: RwLock::new(State::default()),
            writer: Mutex::new(()),
        };
        registry.refresh()?;
        Ok(registry)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn document_path(&self, kind: Kind, id: &str, version: Version) -> PathBuf {
        self.root.join(kind.dir()).join(id).join(format!("{version}.json"))
    }

    fn read_manifest(&self) -> Result<Manifest, RegistryError> {
        let path = self.manifest_path();
        let text = fs::read_to_string(&path).map_err(|e| RegistryError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| RegistryError::Corrupt(format!("{}: {e}", path.display())))
    }

    /// Reloads the manifest and any documents not yet in memory.
    pub fn refresh(&self) -> Result<(), RegistryError> {
        let manifest = self.read_manifest()?;
        let datasets = datasets::DatasetStore::new(&self.root).load()?;
        let mut state = self.state.write().unwrap();
        for (id, versions) in &manifest.tools {
            for version in versions.keys() {
                let key = (id.clone(), *version);
                if !state.tools.contains_key(&key) {
                    let tool = self.load_document(Kind::Tool, id, *version, parse_tool_text)?;
                    state.tools.insert(key, Arc::new(tool));
                }
            }
        }
        for (id, versions) in &manifest.workflows {
            for version in versions.keys() {
                let key = (id.clone(), *version);
                if !state.workflows.contains_key(&key) {
                    let wf = self.load_document(Kind::Workflow, id, *version, parse_workflow_text)?;
                    state.workflows.insert(key, Arc::new(wf));
                }
            }
        }
        state.manifest = manifest;
        state.datasets = datasets;
        Ok(())
    }

    fn load_document<T>(
        &self,
        kind: Kind,
        id: &str,
        version: Version,
        parse: fn(&str) -> Result<T, Vec<Diagnostic>>,
    ) -> Result<T, RegistryError> {
        let path = self.document_path(kind, id, version);
        let text = fs::read_to_string(&path).map_err(|e| RegistryError::io(&path, e))?;
        parse(&text).map_err(|diags| {
            RegistryError::Corrupt(format!("{}: {}", path.display(), crate::schema::render_diagnostics(&diags).trim_end()))
        })
    }

    /// Runs `mutate` under the process and directory write locks against a
    /// freshly loaded manifest, then persists the manifest.
    fn write<R>(
        &self,
        mutate: impl FnOnce(&mut Manifest, &mut State) -> Result<R, RegistryError>,
    ) -> Result<R, RegistryError> {
        let _guard = self.writer.lock().unwrap();
        let _lock = DirLock::acquire(&self.root).map_err(|e| RegistryError::io(&self.root, e))?;
        self.refresh()?;
        let mut state = self.state.write().unwrap();
        let mut manifest = state.manifest.clone();
        let result = mutate(&mut manifest, &mut state)?;
        let path = self.manifest_path();
        write_atomic(&path, &canonical_json(&manifest)).map_err(|e| RegistryError::io(&path, e))?;
        state.manifest = manifest;
        Ok(result)
    }

    fn store(
        &self,
        manifest: &mut Manifest,
        kind: Kind,
        id: &str,
        version: Version,
        canonical: &str,
        status: EntryStatus,
    ) -> Result<(), RegistryError> {
        let path = self.document_path(kind, id, version);
        write_atomic(&path, canonical).map_err(|e| RegistryError::io(&path, e))?;
        manifest.table_mut(kind).entry(id.to_string()).or_default().insert(
            version,
            ManifestEntry { status, content_hash: content_hash(canonical), admitted_at: self.clock.now() },
        );
        Ok(())
    }

    fn ensure_new(manifest: &Manifest, kind: Kind, id: &str, version: Version) -> Result<(), RegistryError> {
        match manifest.table(kind).get(id).and_then(|v| v.get(&version)) {
            Some(entry) if entry.status != EntryStatus::Draft => {
                Err(RegistryError::DuplicateVersion { kind, id: id.to_string(), version })
            }
            _ => Ok(()),
        }
    }

    // -- tools ---------------------------------------------------------------

    /// Dry-run admission: the report `admit_tool` would produce, without
    /// persisting anything.
    pub fn check_tool(&self, candidate: &ToolDefinition, probe: &HealthProbe) -> Result<AdmissionReport, RegistryError> {
        Self::ensure_new(&self.state.read().unwrap().manifest, Kind::Tool, &candidate.id, candidate.version)?;
        Ok(tool_admission_report(candidate, probe))
    }

    /// Runs the admission checks and publishes the tool iff all pass.
    pub fn admit_tool(&self, candidate: &ToolDefinition, probe: &HealthProbe) -> Result<AdmissionReport, RegistryError> {
        self.write(|manifest, state| {
            Self::ensure_new(manifest, Kind::Tool, &candidate.id, candidate.version)?;
            let report = tool_admission_report(candidate, probe);
            if report.admitted {
                self.store(manifest, Kind::Tool, &candidate.id, candidate.version, &candidate.canonical(), EntryStatus::Published)?;
                state.tools.insert((candidate.id.clone(), candidate.version), Arc::new(candidate.clone()));
            }
            Ok(report)
        })
    }

    /// Stores a tool as a draft. Drafts are invisible to resolution and
    /// search but reserve nothing: a later admission replaces them.
    pub fn stage_tool(&self, candidate: &ToolDefinition) -> Result<(), RegistryError> {
        let diags: Vec<Diagnostic> = check_tool(candidate).into_iter().filter(Diagnostic::is_error).collect();
        if !diags.is_empty() {
            return Err(RegistryError::Invalid(diags));
        }
        self.write(|manifest, state| {
            Self::ensure_new(manifest, Kind::Tool, &candidate.id, candidate.version)?;
            self.store(manifest, Kind::Tool, &candidate.id, candidate.version, &candidate.canonical(), EntryStatus::Draft)?;
            state.tools.insert((candidate.id.clone(), candidate.version), Arc::new(candidate.clone()));
            Ok(())
        })
    }

    pub fn retire_tool(&self, id: &str, version: Version) -> Result<(), RegistryError> {
        self.retire(Kind::Tool, id, version)
    }

    pub fn tool(&self, id: &str, req: VersionReq) -> Result<Arc<ToolDefinition>, RegistryError> {
        let state = self.state.read().unwrap();
        let version = Self::select(&state.manifest, Kind::Tool, id, req)?;
        Ok(state.tools[&(id.to_string(), version)].clone())
    }

    pub fn tool_entry(&self, id: &str, version: Version) -> Option<RegistryEntry<ToolDefinition>> {
        let state = self.state.read().unwrap();
        let meta = state.manifest.tools.get(id)?.get(&version)?;
        Some(RegistryEntry {
            definition: state.tools[&(id.to_string(), version)].clone(),
            status: meta.status,
            admitted_at: meta.admitted_at,
            content_hash: meta.content_hash.clone(),
        })
    }

    // -- workflows -----------------------------------------------------------

    /// Validates a candidate workflow against the currently published tools.
    pub fn validate_workflow(&self, candidate: &WorkflowDefinition) -> ValidationReport {
        validate_workflow(candidate, self)
    }

    pub fn check_workflow(&self, candidate: &WorkflowDefinition) -> Result<AdmissionReport, RegistryError> {
        Self::ensure_new(&self.state.read().unwrap().manifest, Kind::Workflow, &candidate.workflow_id, candidate.version)?;
        Ok(workflow_admission_report(candidate, &self.validate_workflow(candidate)))
    }

    /// Validates the workflow and publishes it iff the report is valid.
    pub fn admit_workflow(&self, candidate: &WorkflowDefinition) -> Result<AdmissionReport, RegistryError> {
        self.write(|manifest, state| {
            Self::ensure_new(manifest, Kind::Workflow, &candidate.workflow_id, candidate.version)?;
            let report = workflow_admission_report(candidate, &validate_workflow(candidate, &Snapshot(manifest, state)));
            if report.admitted {
                let id = &candidate.workflow_id;
                self.store(manifest, Kind::Workflow, id, candidate.version, &candidate.canonical(), EntryStatus::Published)?;
                state.workflows.insert((id.clone(), candidate.version), Arc::new(candidate.clone()));
            }
            Ok(report)
        })
    }

    pub fn stage_workflow(&self, candidate: &WorkflowDefinition) -> Result<(), RegistryError> {
        let diags: Vec<Diagnostic> = check_workflow(candidate).into_iter().filter(Diagnostic::is_error).collect();
        if !diags.is_empty() {
            return Err(RegistryError::Invalid(diags));
        }
        self.write(|manifest, state| {
            let id = &candidate.workflow_id;
            Self::ensure_new(manifest, Kind::Workflow, id, candidate.version)?;
            self.store(manifest, Kind::Workflow, id, candidate.version, &candidate.canonical(), EntryStatus::Draft)?;
            state.workflows.insert((id.clone(), candidate.version), Arc::new(candidate.clone()));
            Ok(())
        })
    }

    pub fn retire_workflow(&self, id: &str, version: Version) -> Result<(), RegistryError> {
        self.retire(Kind::Workflow, id, version)
    }

    pub fn workflow(&self, id: &str, req: VersionReq) -> Result<Arc<WorkflowDefinition>, RegistryError> {
        let state = self.state.read().unwrap();
        let version = Self::select(&state.manifest, Kind::Workflow, id, req)?;
        Ok(state.workflows[&(id.to_string(), version)].clone())
    }

    pub fn workflow_entry(&self, id: &str, version: Version) -> Option<RegistryEntry<WorkflowDefinition>> {
        let state = self.state.read().unwrap();
        let meta = state.manifest.workflows.get(id)?.get(&version)?;
        Some(RegistryEntry {
            definition: state.workflows[&(id.to_string(), version)].clone(),
            status: meta.status,
            admitted_at: meta.admitted_at,
            content_hash: meta.content_hash.clone(),
        })
    }

    /// Workflow-level parameter schema, verbatim. `None` means the highest
    /// published version.
    pub fn get_parameters(
        &self,
        workflow_id: &str,
        version: Option<Version>,
    ) -> Result<IndexMap<String, ParameterDefinition>, RegistryError> {
        Ok(self.workflow(workflow_id, version.into())?.parameters.clone())
    }

    /// Ranked search over the highest published version of every workflow.
    pub fn search_workflows(&self, query: &str, tags: &[String]) -> Vec<SearchHit> {
        let state = self.state.read().unwrap();
        let latest: Vec<Arc<WorkflowDefinition>> = state
            .manifest
            .workflows
            .iter()
            .filter_map(|(id, versions)| {
                let (version, _) =
                    versions.iter().rev().find(|(_, e)| e.status == EntryStatus::Published)?;
                Some(state.workflows[&(id.clone(), *version)].clone())
            })
            .collect();
        search::rank(query, tags, latest.iter().map(|w| w.as_ref()))
    }

    // -- shared --------------------------------------------------------------

    fn retire(&self, kind: Kind, id: &str, version: Version) -> Result<(), RegistryError> {
        self.write(|manifest, _| {
            let entry = manifest
                .table_mut(kind)
                .get_mut(id)
                .and_then(|v| v.get_mut(&version))
                .ok_or_else(|| RegistryError::NotFound { kind, id: id.to_string(), version: Some(version) })?;
            entry.status = EntryStatus::Retired;
            Ok(())
        })
    }

    fn select(manifest: &Manifest, kind: Kind, id: &str, req: VersionReq) -> Result<Version, RegistryError> {
        let not_found = |version| RegistryError::NotFound { kind, id: id.to_string(), version };
        let versions = manifest.table(kind).get(id).ok_or_else(|| not_found(None))?;
        let status_error = |version: Version, status: EntryStatus| match status {
            EntryStatus::Retired => RegistryError::Retired { kind, id: id.to_string(), version },
            _ => RegistryError::Unpublished { kind, id: id.to_string(), version },
        };
        match req {
            VersionReq::Exact(v) => match versions.get(&v) {
                None => Err(not_found(Some(v))),
                Some(e) if e.status == EntryStatus::Published => Ok(v),
                Some(e) => Err(status_error(v, e.status)),
            },
            VersionReq::Latest => {
                if let Some((v, _)) = versions.iter().rev().find(|(_, e)| e.status == EntryStatus::Published) {
                    return Ok(*v);
                }
                let retired = versions.iter().rev().find(|(_, e)| e.status == EntryStatus::Retired);
                let (v, e) = retired.or_else(|| versions.iter().next_back()).ok_or_else(|| not_found(None))?;
                Err(status_error(*v, e.status))
            }
        }
    }

    pub fn entries(&self, kind: Kind) -> Vec<EntrySummary> {
        let state = self.state.read().unwrap();
        state
            .manifest
            .table(kind)
            .iter()
            .flat_map(|(id, versions)| {
                versions.iter().map(move |(version, e)| EntrySummary {
                    kind,
                    id: id.clone(),
                    version: *version,
                    status: e.status,
                    content_hash: e.content_hash.clone(),
                    admitted_at: e.admitted_at,
                })
            })
            .collect()
    }

    pub fn counts(&self) -> RegistryCounts {
        let state = self.state.read().unwrap();
        let published = |kind| {
            state.manifest.table(kind).values().flat_map(|v| v.values()).filter(|e| e.status == EntryStatus::Published).count()
        };
        RegistryCounts { tools: published(Kind::Tool), workflows: published(Kind::Workflow), datasets: state.datasets.len() }
    }

    /// Re-hashes every stored document against the manifest. Returns one
    /// line per problem; empty means the store is intact.
    pub fn integrity_scan(&self) -> Vec<String> {
        let manifest = match self.read_manifest() {
            Ok(m) => m,
            Err(e) => return vec![e.to_string()],
        };
        let mut problems = Vec::new();
        for kind in [Kind::Tool, Kind::Workflow] {
            for (id, versions) in manifest.table(kind) {
                for (version, entry) in versions {
                    let path = self.document_path(kind, id, *version);
                    match fs::read_to_string(&path) {
                        Err(e) => problems.push(format!("{}: {e}", path.display())),
                        Ok(text) => {
                            let actual = content_hash(&text);
                            if actual != entry.content_hash {
                                problems.push(format!(
                                    "{}: hash {actual} does not match manifest {}",
                                    path.display(),
                                    entry.content_hash
                                ));
                            }
                        }
                    }
                }
            }
        }
        if let Err(e) = datasets::DatasetStore::new(&self.root).load() {
            problems.push(e.to_string());
        }
        problems
    }

    // -- datasets ------------------------------------------------------------

    pub fn add_dataset(&self, source: &Path, name: Option<&str>, id: Option<Uuid>) -> Result<DatasetDescriptor, RegistryError> {
        let _guard = self.writer.lock().unwrap();
        let _lock = DirLock::acquire(&self.root).map_err(|e| RegistryError::io(&self.root, e))?;
        let store = datasets::DatasetStore::new(&self.root);
        let descriptor = store.add(source, name, id, self.ids.next_id())?;
        self.state.write().unwrap().datasets = store.load()?;
        Ok(descriptor)
    }

    /// All registered datasets, sorted by name.
    pub fn list_datasets(&self) -> Vec<DatasetDescriptor> {
        self.state.read().unwrap().datasets.clone()
    }

    /// Looks a dataset up by UUID or by name.
    pub fn dataset(&self, key: &str) -> Result<DatasetDescriptor, RegistryError> {
        let state = self.state.read().unwrap();
        let by_id = Uuid::parse_str(key).ok();
        state
            .datasets
            .iter()
            .find(|d| Some(d.dataset_id) == by_id || d.name == key)
            .cloned()
            .ok_or_else(|| RegistryError::DatasetNotFound(key.to_string()))
    }

    pub fn dataset_path(&self, descriptor: &DatasetDescriptor) -> PathBuf {
        datasets::DatasetStore::new(&self.root).file(descriptor)
    }
}

impl ToolResolver for Registry {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError> {
        self.tool(tool_id, VersionReq::Latest)
    }
}

/// Resolver over a manifest being mutated under the write lock.
struct Snapshot<'a>(&'a Manifest, &'a State);

impl ToolResolver for Snapshot<'_> {
    fn resolve_tool(&self, tool_id: &str) -> Result<Arc<ToolDefinition>, RegistryError> {
        let version = Registry::select(self.0, Kind::Tool, tool_id, VersionReq::Latest)?;
        Ok(self.1.tools[&(tool_id.to_string(), version)].clone())
    }
}
