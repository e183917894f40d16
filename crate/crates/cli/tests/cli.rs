use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use schemagate_core::executor::RunStore;
use schemagate_core::registry::{Kind, Registry};
use schemagate_core::schema::canonical_json;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Cli {
    dir: tempfile::TempDir,
}

impl Cli {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn registry_dir(&self) -> PathBuf {
        self.dir.path().join("registry")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_schemagate"))
            .arg("--registry-dir")
            .arg(self.registry_dir())
            .args(args)
            .env_remove("SCHEMAGATE_RUN_DIR")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn doc(&self, args: &[&str]) -> Value {
        let mut full = vec!["--format", "doc"];
        full.extend_from_slice(args);
        serde_json::from_str(&self.ok(&full)).unwrap()
    }

    fn bootstrapped() -> Self {
        let cli = Self::new();
        cli.ok(&["--init", "bootstrap", fixtures().to_str().unwrap()]);
        cli
    }

    fn params(&self, value: Value) -> String {
        let path = self.dir.path().join(format!("params-{}.json", digest(&value)));
        std::fs::write(&path, value.to_string()).unwrap();
        path.to_str().unwrap().to_string()
    }
}

fn digest(value: &Value) -> String {
    schemagate_core::schema::content_hash(&value.to_string())[..12].to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bootstrap_admits_fixtures_once() {
    let cli = Cli::bootstrapped();
    let again = cli.ok(&["bootstrap", path(&fixtures())]);
    assert!(again.lines().all(|l| l.starts_with("skipped")), "{again}");
    let registry = Registry::open(cli.registry_dir()).unwrap();
    let counts = registry.counts();
    assert_eq!(counts.workflows, 2);
    assert!(counts.tools >= 5);
}

#[test]
fn listings_in_doc_format_match_the_registry() {
    let cli = Cli::bootstrapped();
    let registry = Registry::open(cli.registry_dir()).unwrap();
    let tools = cli.ok(&["--format", "doc", "tool", "list"]);
    assert_eq!(tools, canonical_json(&registry.entries(Kind::Tool)));
    let workflows = cli.ok(&["--format", "doc", "workflow", "list"]);
    assert_eq!(workflows, canonical_json(&registry.entries(Kind::Workflow)));
    let datasets = cli.ok(&["--format", "doc", "dataset", "list"]);
    assert_eq!(datasets, canonical_json(&registry.list_datasets()));

    let text = cli.ok(&["tool", "list"]);
    assert!(text.lines().any(|l| l.starts_with("data_loader") && l.ends_with("published")), "{text}");
}

#[test]
fn invalid_definitions_exit_with_validation_errors() {
    let cli = Cli::bootstrapped();
    let out = cli.run(&["tool", "validate", path(&fixtures().join("invalid/bad_tool.json"))]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli.run(&["workflow", "add", path(&fixtures().join("invalid/alloy_pipeline_mismatch.json"))]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("edge_type_compatibility"), "{stderr}");
    assert!(stderr.contains("creep_life") && stderr.contains("yield_strength"), "{stderr}");
    assert_eq!(cli.doc(&["runs", "list"]), json!([]));

    let out = cli.run(&["workflow", "validate", path(&fixtures().join("workflows/basic_data_analysis.json"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_and_store_errors_have_their_own_codes() {
    let cli = Cli::bootstrapped();
    assert_eq!(code(&cli.run(&["frobnicate"])), 2);
    let wf = fixtures().join("workflows/basic_data_analysis.json");
    assert_eq!(code(&cli.run(&["workflow", "validate", path(&wf), "--endpoint", "http://127.0.0.1:1/"])), 2);
    assert_eq!(code(&cli.run(&["tool", "add", "/nonexistent/tool.json"])), 3);
    assert_eq!(code(&cli.run(&["runs", "show", "00000000-0000-0000-0000-000000000000"])), 3);

    let fresh = Cli::new();
    assert_eq!(code(&fresh.run(&["tool", "list"])), 3);
}

#[test]
fn headless_runs_need_approval() {
    let cli = Cli::bootstrapped();
    let params = cli.params(json!({"dataset_file": "sample_measurements.csv"}));

    let out = cli.run(&["run", "basic_data_analysis", "--params", &params]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--approve"));
    assert_eq!(cli.doc(&["runs", "list"]), json!([]));

    let bad = cli.params(json!({"dataset_file": "sample_measurements.csv", "missing_strategy": "guess"}));
    let out = cli.run(&["run", "basic_data_analysis", "--params", &bad, "--approve"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing_strategy"));
    assert_eq!(cli.doc(&["runs", "list"]), json!([]));

    let record = cli.doc(&["run", "basic_data_analysis", "--params", &params, "--approve", "--seed", "4"]);
    assert_eq!(record["status"], "succeeded");
    let run_id = record["run_id"].as_str().unwrap();

    let listed = cli.doc(&["runs", "list", "--status", "succeeded"]);
    assert_eq!(listed.as_array().unwrap().len(), 1);
    let shown = cli.ok(&["--format", "doc", "runs", "show", run_id]);
    let stored = RunStore::open(cli.registry_dir()).unwrap().get(run_id.parse().unwrap()).unwrap();
    assert_eq!(shown, canonical_json(&stored));

    let text = cli.ok(&["runs", "show", run_id]);
    assert!(text.contains("succeeded"), "{text}");
}

#[test]
fn repeated_seeded_runs_compare_empty() {
    let cli = Cli::bootstrapped();
    let params = cli.params(json!({"dataset_file": "sample_measurements.csv"}));
    let a = cli.doc(&["run", "basic_data_analysis", "--params", &params, "--approve", "--seed", "9"]);
    let b = cli.doc(&["run", "basic_data_analysis", "--params", &params, "--approve", "--seed", "9"]);
    let diff = cli.doc(&["runs", "compare", a["run_id"].as_str().unwrap(), b["run_id"].as_str().unwrap()]);
    assert_eq!(diff["parameter_diff"], json!({}));
    assert_eq!(diff["metric_diff"], json!({}));
    assert_eq!(diff["same_workflow"], true);
}

#[test]
fn session_replay_prints_the_turn_table() {
    let cli = Cli::new();
    let script = fixtures().join("sessions/alloy_refinement.session");
    let table = cli.ok(&["--init", "session", "replay", path(&script), "--fixtures", path(&fixtures())]);
    let header = table.lines().next().unwrap();
    assert!(header.contains("Schema Gate"), "{header}");
    assert!(table.lines().count() >= 13);

    let diverging = cli.dir.path().join("diverging.session");
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&script).unwrap()).unwrap();
    doc["turns"][4]["expect"]["gate"] = json!("passed");
    std::fs::write(&diverging, doc.to_string()).unwrap();
    let out = cli.run(&["session", "replay", path(&diverging)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged at turn 5"));
}
