//! `schemagate`: registry lifecycle, headless runs, scripted-session replay,
//! run inspection and the HTTP service.
//!
//! Exit codes: 0 success, 1 validation errors, 2 usage error, 3 store or IO
//! error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use schemagate_core::bootstrap::bootstrap;
use schemagate_core::executor::{RunFilter, RunStatus, RUN_DIR_ENV};
use schemagate_core::gate::remote::RemotePlanner;
use schemagate_core::gate::{GateConfig, GateError, InvocationState, Planner, ScriptedPlanner};
use schemagate_core::registry::{
    tool_admission_report, workflow_admission_report, EntryStatus, HealthProbe, Kind, RegistryError, REGISTRY_DIR_ENV,
};
use schemagate_core::replay::{replay, Script};
use schemagate_core::runtime::{Runtime, RuntimeOptions};
use schemagate_core::schema::{
    canonical_json, parse_tool_text, parse_workflow_text, render_diagnostics, Version,
};

#[derive(Parser)]
#[command(name = "schemagate", version, about = "Schema-gated workflow registry, runs and sessions")]
struct Cli {
    #[arg(long, global = true, env = REGISTRY_DIR_ENV, default_value = ".schemagate")]
    registry_dir: PathBuf,
    /// Run store root; defaults to the registry directory.
    #[arg(long, global = true, env = RUN_DIR_ENV)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Create the registry if it does not exist.
    #[arg(long, global = true)]
    init: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Doc,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Tool(DefinitionCommand),
    #[command(subcommand)]
    Workflow(DefinitionCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Admit every tool, workflow and dataset under a fixture directory.
    Bootstrap {
        #[arg(default_value = "fixtures")]
        fixtures: PathBuf,
    },
    /// Run a workflow headlessly through the gate.
    Run(RunArgs),
    #[command(subcommand)]
    Session(SessionCommand),
    #[command(subcommand)]
    Runs(RunsCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum DefinitionCommand {
    /// Admit a definition document.
    Add(DefinitionArgs),
    /// Run the admission checks without storing anything. Already
    /// published versions are checked too.
    Validate(DefinitionArgs),
    List,
    Retire { id: String, version: Version },
}

#[derive(Args)]
struct DefinitionArgs {
    file: PathBuf,
    /// Tools only: probe this endpoint instead of treating the tool as a
    /// local stub.
    #[arg(long)]
    endpoint: Option<url::Url>,
    #[arg(long, default_value_t = 2000)]
    probe_timeout_ms: u64,
}

#[derive(Subcommand)]
enum DatasetCommand {
    Add {
        file: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        id: Option<uuid::Uuid>,
    },
    List,
}

#[derive(Args)]
struct RunArgs {
    workflow_id: String,
    #[arg(long)]
    version: Option<Version>,
    /// Flat JSON document of workflow parameters.
    #[arg(long)]
    params: PathBuf,
    /// Approve the invocation; without it nothing runs.
    #[arg(long)]
    approve: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    timeout_secs: u64,
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Replay a session script and print the turn table.
    Replay {
        script: PathBuf,
        /// Bootstrap this fixture directory into the registry first.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RunsCommand {
    Show { run_id: uuid::Uuid },
    Compare { a: uuid::Uuid, b: uuid::Uuid },
    List {
        #[arg(long)]
        workflow_id: Option<String>,
        #[arg(long)]
        status: Option<RunStatus>,
        #[arg(long)]
        since: Option<chrono::DateTime<chrono::Utc>>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// `scripted:<file>` or `remote`. Defaults to `remote` when an API key
    /// is configured, otherwise to a planner with no rules.
    #[arg(long)]
    planner: Option<String>,
    /// Dispatch validated invocations without a separate approval.
    #[arg(long)]
    auto_approve: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure with its exit code; the message goes to stderr.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn store(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Invalid(d) => Failure::validation(render_diagnostics(&d)),
            RegistryError::DuplicateVersion { .. } | RegistryError::DuplicateDataset(_) | RegistryError::Dataset(_) => {
                Failure::validation(e.to_string())
            }
            other => Failure::store(other.to_string()),
        }
    }
}

impl From<GateError> for Failure {
    fn from(e: GateError) -> Self {
        let mut message = e.to_string();
        if !e.diagnostics().is_empty() {
            message = format!("{message}\n{}", render_diagnostics(e.diagnostics()).trim_end());
        }
        match e {
            GateError::NotFound(_) | GateError::ExecutorUnavailable(_) => Failure::store(message),
            _ => Failure::validation(message),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("{}", f.message.trim_end());
            }
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Tool(cmd) => definitions(cli, Kind::Tool, cmd),
        Command::Workflow(cmd) => definitions(cli, Kind::Workflow, cmd),
        Command::Dataset(cmd) => datasets(cli, cmd),
        Command::Bootstrap { fixtures } => {
            let rt = open(cli, GateConfig::default())?;
            let report = bootstrap(&rt.registry, fixtures).map_err(|e| match e {
                schemagate_core::bootstrap::BootstrapError::Io { .. } => Failure::store(e.to_string()),
                other => Failure::validation(other.to_string()),
            })?;
            emit(cli, &report, || {
                let mut out = String::new();
                for (id, v) in &report.tools {
                    out.push_str(&format!("tool     {id} {v}\n"));
                }
                for (id, v) in &report.workflows {
                    out.push_str(&format!("workflow {id} {v}\n"));
                }
                for id in &report.datasets {
                    out.push_str(&format!("dataset  {id}\n"));
                }
                for s in &report.skipped {
                    out.push_str(&format!("skipped  {s} (already present)\n"));
                }
                out
            });
            Ok(())
        }
        Command::Run(args) => run(cli, args),
        Command::Session(SessionCommand::Replay { script, fixtures }) => session_replay(cli, script, fixtures.as_deref()),
        Command::Runs(cmd) => runs(cli, cmd),
        Command::Serve(args) => serve(cli, args),
    }
}

fn open(cli: &Cli, gate: GateConfig) -> Result<Runtime, Failure> {
    let options = RuntimeOptions { registry_dir: cli.registry_dir.clone(), run_dir: cli.run_dir.clone(), init: cli.init, gate };
    Runtime::open(&options).map_err(|e| Failure::store(e.to_string()))
}

/// Prints `value` as a canonical document under `--format doc`, otherwise
/// the text from `text`.
fn emit<T: serde::Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) {
    match cli.format {
        Format::Doc => print!("{}", canonical_json(value)),
        Format::Text => print!("{}", text()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::store(format!("{}: {e}", path.display())))
}

fn definitions(cli: &Cli, kind: Kind, cmd: &DefinitionCommand) -> CliResult {
    let rt = open(cli, GateConfig::default())?;
    let registry = &rt.registry;
    match cmd {
        DefinitionCommand::Add(args) | DefinitionCommand::Validate(args) => {
            let persist = matches!(cmd, DefinitionCommand::Add(_));
            let text = read(&args.file)?;
            let report = match kind {
                Kind::Tool => {
                    let tool = parse_tool_text(&text).map_err(|d| Failure::validation(render_diagnostics(&d)))?;
                    let probe = match &args.endpoint {
                        Some(url) => HealthProbe::endpoint_ping(&tool.id, url.clone(), args.probe_timeout_ms),
                        None => HealthProbe::declared_stub(&tool.id),
                    };
                    if persist {
                        registry.admit_tool(&tool, &probe)?
                    } else {
                        tool_admission_report(&tool, &probe)
                    }
                }
                Kind::Workflow => {
                    if args.endpoint.is_some() {
                        return Err(Failure::usage("--endpoint applies to tools only"));
                    }
                    let wf = parse_workflow_text(&text).map_err(|d| Failure::validation(render_diagnostics(&d)))?;
                    if persist {
                        registry.admit_workflow(&wf)?
                    } else {
                        workflow_admission_report(&wf, &registry.validate_workflow(&wf))
                    }
                }
            };
            emit(cli, &report, || report.render_text());
            if report.admitted {
                Ok(())
            } else {
                Err(Failure::validation(render_diagnostics(&report.diagnostics())))
            }
        }
        DefinitionCommand::List => {
            let entries = registry.entries(kind);
            emit(cli, &entries, || {
                entries
                    .iter()
                    .map(|e| format!("{:<32} {:<10} {}\n", e.id, e.version.to_string(), status_name(e.status)))
                    .collect()
            });
            Ok(())
        }
        DefinitionCommand::Retire { id, version } => {
            match kind {
                Kind::Tool => registry.retire_tool(id, *version)?,
                Kind::Workflow => registry.retire_workflow(id, *version)?,
            }
            emit(cli, &json!({"id": id, "version": version, "status": "retired"}), || format!("retired {id} {version}\n"));
            Ok(())
        }
    }
}

fn status_name(status: EntryStatus) -> String {
    serde_json::to_value(status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn datasets(cli: &Cli, cmd: &DatasetCommand) -> CliResult {
    let rt = open(cli, GateConfig::default())?;
    match cmd {
        DatasetCommand::Add { file, name, id } => {
            let d = rt.registry.add_dataset(file, name.as_deref(), *id)?;
            emit(cli, &d, || format!("{} {} ({} rows; columns {})\n", d.dataset_id, d.name, d.row_count, d.columns.join(", ")));
        }
        DatasetCommand::List => {
            let list = rt.registry.list_datasets();
            emit(cli, &list, || {
                list.iter().map(|d| format!("{} {:<32} {:>6} rows\n", d.dataset_id, d.name, d.row_count)).collect()
            });
        }
    }
    Ok(())
}

fn run(cli: &Cli, args: &RunArgs) -> CliResult {
    let rt = open(cli, GateConfig { auto_approve: false, seed: args.seed })?;
    let params: Value =
        serde_json::from_str(&read(&args.params)?).map_err(|e| Failure::validation(format!("{}: {e}", args.params.display())))?;
    let Value::Object(params) = params else {
        return Err(Failure::validation(format!("{}: parameters must be a JSON object", args.params.display())));
    };
    let gate = &rt.gate;
    let session = gate.open_session().session_id;
    let proposal = gate.propose(session, &args.workflow_id, args.version, params)?;
    if proposal.invocation.state != InvocationState::Validated {
        let mut message = format!("invocation {} is {}; nothing was run\n", proposal.invocation.invocation_id, proposal.invocation.state);
        for p in &proposal.prompts {
            message.push_str(&format!("  {} ({}): {}\n", p.parameter, reason_name(p), p.message));
        }
        message.push_str(&render_diagnostics(&proposal.workflow_diagnostics));
        if cli.format == Format::Doc {
            print!("{}", canonical_json(&proposal));
        }
        return Err(Failure::validation(message));
    }
    if !args.approve {
        if cli.format == Format::Doc {
            print!("{}", canonical_json(&proposal));
        }
        return Err(Failure::validation(format!(
            "invocation {} is validated but not approved; re-run with --approve to execute it",
            proposal.invocation.invocation_id
        )));
    }
    let iid = proposal.invocation.invocation_id;
    gate.approve(session, iid, "cli")?;
    let run_id = gate.dispatch(session, iid)?;
    let record = gate
        .observe_run(session, run_id, Duration::from_secs(args.timeout_secs))
        .map_err(|e| Failure::store(e.to_string()))?;
    emit(cli, &record, || format!("run {run_id}\n{}", record.render_text()));
    if record.status == RunStatus::Succeeded {
        Ok(())
    } else {
        Err(Failure::validation(format!("run {run_id} {}", record.status)))
    }
}

fn reason_name(p: &schemagate_core::gate::ClarificationPrompt) -> String {
    serde_json::to_value(p.reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn session_replay(cli: &Cli, script_path: &Path, fixtures: Option<&Path>) -> CliResult {
    let script = Script::parse(&read(script_path)?).map_err(|e| Failure::validation(e.to_string()))?;
    let rt = open(cli, GateConfig { auto_approve: false, seed: script.seed })?;
    if let Some(dir) = fixtures {
        bootstrap(&rt.registry, dir).map_err(|e| Failure::store(e.to_string()))?;
    }
    let transcript = replay(&rt.gate, &script).map_err(|e| Failure::validation(e.to_string()))?;
    emit(cli, &transcript, || transcript.render_table());
    match &transcript.divergence {
        None => Ok(()),
        Some(d) => {
            let mut message = format!("replay diverged at turn {}", d.turn);
            for diff in &d.differences {
                message.push_str(&format!("\n  {}: expected {} actual {}", diff.key, diff.expected, diff.actual));
            }
            Err(Failure::validation(message))
        }
    }
}

fn runs(cli: &Cli, cmd: &RunsCommand) -> CliResult {
    let rt = open(cli, GateConfig::default())?;
    let executor = &rt.executor;
    let not_found = |e: schemagate_core::executor::ExecutorError| Failure::store(e.to_string());
    match cmd {
        RunsCommand::Show { run_id } => {
            let record = executor.get_run(*run_id).map_err(not_found)?;
            emit(cli, &record, || record.render_text());
        }
        RunsCommand::Compare { a, b } => {
            let c = executor.compare_runs(*a, *b).map_err(not_found)?;
            emit(cli, &c, || c.render_text());
        }
        RunsCommand::List { workflow_id, status, since } => {
            let filter = RunFilter { workflow_id: workflow_id.clone(), status: *status, since: *since };
            let list = executor.query_runs(&filter);
            emit(cli, &list, || {
                list.iter()
                    .map(|r| {
                        format!("{} {:<10} {} {} {}\n", r.run_id, r.status.as_str(), r.started_at.to_rfc3339(), r.workflow_id, r.version)
                    })
                    .collect()
            });
        }
    }
    Ok(())
}

fn planner(choice: Option<&str>) -> Result<Arc<dyn Planner>, Failure> {
    let has_key = std::env::var(schemagate_core::gate::remote::API_KEY_ENV).is_ok();
    match choice {
        Some("remote") => Ok(Arc::new(RemotePlanner::from_env().map_err(|e| Failure::usage(e.to_string()))?)),
        Some(spec) => match spec.strip_prefix("scripted:") {
            Some(path) => Ok(Arc::new(
                schemagate_server::scripted_planner_from_file(Path::new(path)).map_err(Failure::validation)?,
            )),
            None => Err(Failure::usage(format!("unknown planner `{spec}`; use scripted:<file> or remote"))),
        },
        None if has_key => Ok(Arc::new(RemotePlanner::from_env().map_err(|e| Failure::usage(e.to_string()))?)),
        None => Ok(Arc::new(ScriptedPlanner::new(Vec::new()).map_err(Failure::usage)?)),
    }
}

fn serve(cli: &Cli, args: &ServeArgs) -> CliResult {
    let rt = open(cli, GateConfig { auto_approve: args.auto_approve, seed: args.seed })?;
    schemagate_server::prepare(&rt).map_err(|problems| Failure::store(format!("store integrity scan failed:\n  {}", problems.join("\n  "))))?;
    let state = schemagate_server::AppState::new(rt.gate.clone(), planner(args.planner.as_deref())?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::store(e.to_string()))?;
    runtime
        .block_on(schemagate_server::serve(args.bind, state))
        .map_err(|e| Failure::store(format!("{}: {e}", args.bind)))
}
