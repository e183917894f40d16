//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::*;
use schemagate_core::registry::{tool_admission_report, HealthProbe, VersionReq};
use schemagate_core::schema::{
    decode_tool_definition, decode_workflow_text, parse_tool_text, parse_workflow_text, Check, StepDefinition,
    Version, WorkflowDefinition, WorkflowMetadata,
};
use schemagate_core::validation::check_acyclicity;

type Outcome = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn cli(registry: &Path, args: &[&str]) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_schemagate"))
        .arg("--registry-dir")
        .arg(registry)
        .args(["--format", "doc"])
        .args(args)
        .env_remove("SCHEMAGATE_RUN_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("schemagate {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("schemagate {args:?}: {e}"))
}

fn reference_session_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry");
    let script = fixtures().join("sessions/alloy_refinement.session");
    let started = Instant::now();
    let fixture_dir = fixtures();
    let transcript = cli(
        &registry,
        &["--init", "session", "replay", script.to_str().unwrap(), "--fixtures", fixture_dir.to_str().unwrap()],
    )?;
    let rows = transcript["rows"].as_array().ok_or("no rows")?;
    ensure(rows.len() == 12, || format!("{} turns replayed", rows.len()))?;
    ensure(transcript["divergence"].is_null(), || format!("diverged: {}", transcript["divergence"]))?;

    let turn = |n: u64| rows.iter().find(|r| r["turn"] == n).ok_or(format!("turn {n} missing"));
    for n in 1..7 {
        ensure(turn(n)?["observed"]["runs"] == 0, || format!("a run exists at turn {n}"))?;
    }
    let refused: Vec<u64> =
        rows.iter().filter(|r| r["observed"]["gate"] == "blocked").map(|r| r["turn"].as_u64().unwrap()).collect();
    ensure(!refused.is_empty() && refused.iter().all(|&t| t < 7), || format!("dispatch refused at turns {refused:?}"))?;
    ensure(turn(7)?["observed"]["state"] == "validated", || format!("turn 7: {}", turn(7).unwrap()["observed"]))?;

    let runs = cli(&registry, &["runs", "list"])?;
    let runs = runs.as_array().ok_or("runs list is not a list")?;
    ensure(runs.len() == 2, || format!("{} run records", runs.len()))?;
    let ids: Vec<&str> = transcript["run_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let diff = cli(&registry, &["runs", "compare", ids[0], ids[1]])?;
    let expected = json!({"validation_strategy": ["5-fold", "leave-one-out"]});
    ensure(diff["parameter_diff"] == expected, || format!("parameter diff {}", diff["parameter_diff"]))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("12 turns, refused at {refused:?}, 2 runs, diff {expected}, {elapsed:.2?}"))
}

fn distinct_complete_rows(csv: &str) -> usize {
    csv.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::trim).map(String::from).collect::<Vec<_>>())
        .filter(|cells| cells.iter().all(|c| !c.is_empty()))
        .collect::<BTreeSet<_>>()
        .len()
}

fn shipped_definition_fidelity() -> Outcome {
    let tool_text = std::fs::read_to_string(fixtures().join("tools/materials_property_predictor.json")).unwrap();
    let tool = parse_tool_text(&tool_text).map_err(|d| format!("tool: {d:?}"))?;
    let again = parse_tool_text(&tool.canonical()).map_err(|d| format!("tool canonical: {d:?}"))?;
    ensure(again == tool && again.canonical() == tool.canonical(), || "tool does not round-trip".into())?;

    let wf_text = std::fs::read_to_string(fixtures().join("workflows/basic_data_analysis.json")).unwrap();
    let wf = parse_workflow_text(&wf_text).map_err(|d| format!("workflow: {d:?}"))?;
    let again = parse_workflow_text(&wf.canonical()).map_err(|d| format!("workflow canonical: {d:?}"))?;
    ensure(again == wf && again.canonical() == wf.canonical(), || "workflow does not round-trip".into())?;

    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let admitted = s.registry.workflow("basic_data_analysis", VersionReq::Latest).map_err(|e| e.to_string())?;
    ensure(*admitted == wf, || "admitted workflow differs from the fixture".into())?;
    ensure(s.registry.tool("materials_property_predictor", VersionReq::Latest).is_ok(), || "predictor not admitted".into())?;

    let record = run_to_end(&s.gate, "basic_data_analysis", d2_parameters());
    ensure(record.status.as_str() == "succeeded", || format!("run {}", record.status.as_str()))?;
    let csv = std::fs::read_to_string(fixtures().join("datasets/sample_measurements.csv")).unwrap();
    let expected = distinct_complete_rows(&csv);
    let cleaned = record.step("clean_data").unwrap().outputs["cleaned_data"]["row_count"].as_u64().unwrap();
    ensure(cleaned as usize == expected, || format!("clean_data kept {cleaned} rows, oracle says {expected}"))?;
    catch_unwind(AssertUnwindSafe(|| assert_provenance(&record))).map_err(|_| "provenance incomplete".to_string())?;
    ensure(record.workflow_snapshot.content_hash == wf.content_hash(), || "snapshot hash differs".into())?;
    Ok(format!("round trips exact, {cleaned} distinct complete rows, provenance complete"))
}

fn cross_step_rejection() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let text = std::fs::read_to_string(fixtures().join("invalid/alloy_pipeline_mismatch.json")).unwrap();
    let wf = decode_workflow_text(&text).map_err(|d| format!("{d:?}"))?;
    let report = s.registry.validate_workflow(&wf);
    ensure(!report.valid, || "mismatched pipeline validated".into())?;
    let edge = report.check(Check::EdgeTypeCompatibility).unwrap();
    let errors: Vec<&str> = edge.diagnostics.iter().filter(|d| d.is_error()).map(|d| d.message.as_str()).collect();
    ensure(!errors.is_empty(), || "no edge_type_compatibility error".into())?;
    for column in ["yield_strength", "creep_life"] {
        ensure(errors.iter().any(|m| m.contains(column)), || format!("{column} not named: {errors:?}"))?;
    }
    let admission = s.registry.admit_workflow(&wf).map_err(|e| e.to_string())?;
    ensure(!admission.admitted, || "mismatched pipeline admitted".into())?;
    let session = s.gate.open_session().session_id;
    ensure(s.gate.propose(session, &wf.workflow_id, None, Default::default()).is_err(), || "proposal accepted".into())?;
    ensure(s.executor().submissions().is_empty(), || "a run was created".into())?;
    Ok(format!("edge_type_compatibility: {}", errors[0]))
}

fn no_bypass_fuzz() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let report = fuzz::run(&s.gate, 10_000, 2024);
    ensure(report.violations.is_empty(), || {
        format!("{} assertion failures, first: {}", report.violations.len(), report.violations[0])
    })?;
    let state_ok = s.executor().submissions().iter().all(|x| x.invocation_state.as_str() == "approved");
    ensure(state_ok, || "a submission came from a non-approved invocation".into())?;
    Ok(format!(
        "{} sequences, {} calls, {} dispatch attempts, {} accepted, 0 assertion failures",
        report.sequences, report.calls, report.dispatch_attempts, report.dispatched
    ))
}

/// Recursive three-colour depth-first search.
fn dfs_has_cycle(adj: &[Vec<usize>]) -> bool {
    fn visit(n: usize, adj: &[Vec<usize>], colour: &mut [u8]) -> bool {
        colour[n] = 1;
        for &m in &adj[n] {
            if colour[m] == 1 || (colour[m] == 0 && visit(m, adj, colour)) {
                return true;
            }
        }
        colour[n] = 2;
        false
    }
    let mut colour = vec![0u8; adj.len()];
    (0..adj.len()).any(|n| colour[n] == 0 && visit(n, adj, &mut colour))
}

fn acyclicity_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut cyclic = 0;
    for i in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let density = rng.gen_range(0.0..0.5);
        let mut adj = vec![Vec::new(); n];
        for (a, row) in adj.iter_mut().enumerate() {
            for b in 0..n {
                if rng.gen_bool(density) && (a != b || rng.gen_bool(0.2)) {
                    row.push(b);
                }
            }
        }
        let steps = (0..n)
            .map(|j| {
                let mut step = StepDefinition::new(format!("s{j}"), "t");
                step.dependencies = (0..n).filter(|&a| adj[a].contains(&j)).map(|a| format!("s{a}")).collect();
                step
            })
            .collect();
        let wf = WorkflowDefinition {
            workflow_id: format!("g{i}"),
            name: "graph".into(),
            description: "random digraph".into(),
            version: Version::new(1, 0, 0),
            steps,
            parameter_mappings: Vec::new(),
            edges: Vec::new(),
            parameters: Default::default(),
            metadata: WorkflowMetadata::default(),
        };
        let expected = dfs_has_cycle(&adj);
        cyclic += usize::from(expected);
        let found = !check_acyclicity(&wf).is_empty();
        ensure(found == expected, || format!("graph {i} {adj:?}: check says cyclic={found}, oracle {expected}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("10000/10000 agree ({cyclic} cyclic), {elapsed:.2?}"))
}

fn admission_mutants() -> Outcome {
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("tools/materials_property_predictor.json")).unwrap())
            .unwrap();
    let failed = |doc: &Value, probe: Option<url::Url>| -> Result<Vec<Check>, String> {
        let tool = decode_tool_definition(doc).map_err(|d| format!("{d:?}"))?;
        let probe = match probe {
            Some(url) => HealthProbe::endpoint_ping(&tool.id, url, 500),
            None => HealthProbe::declared_stub(&tool.id),
        };
        Ok(tool_admission_report(&tool, &probe).failed_checks())
    };
    ensure(failed(&doc, None)?.is_empty(), || "the unmutated tool is refused".into())?;

    let mut undocumented = doc.clone();
    undocumented["description"] = json!("");
    let mut bad_default = doc.clone();
    let strategy = bad_default["parameters"].as_array_mut().unwrap().iter_mut().find(|p| p["name"] == "validation_strategy").unwrap();
    strategy["default"] = json!("7-fold");
    let dead = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}/health", listener.local_addr().unwrap())
    };

    let cases = [
        ("empty description", failed(&undocumented, None)?, Check::DocumentationCompleteness),
        ("default outside allowed_values", failed(&bad_default, None)?, Check::ParameterConsistency),
        ("dead endpoint", failed(&doc, Some(dead.parse().unwrap()))?, Check::ServiceAvailability),
    ];
    for (name, got, want) in &cases {
        ensure(got == &[*want], || format!("{name}: failed {got:?}, expected [{want}]"))?;
    }
    Ok(cases.iter().map(|(name, _, want)| format!("{name} -> {want}")).collect::<Vec<_>>().join("; "))
}

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).seed(5).build();
    let session = s.gate.open_session().session_id;
    let proposal = s.gate.propose(session, "basic_data_analysis", None, d2_parameters()).map_err(|e| e.to_string())?;
    let first_id = proposal.invocation.invocation_id;
    s.gate.approve(session, first_id, "acceptance").map_err(|e| e.to_string())?;
    let a = s.gate.dispatch(session, first_id).map_err(|e| e.to_string())?;
    let again = s.gate.amend(session, first_id, Default::default()).map_err(|e| e.to_string())?;
    ensure(again.invocation.parameters == proposal.invocation.parameters, || "amended copy differs".into())?;
    let second_id = again.invocation.invocation_id;
    s.gate.approve(session, second_id, "acceptance").map_err(|e| e.to_string())?;
    let b = s.gate.dispatch(session, second_id).map_err(|e| e.to_string())?;

    let wait = |id| s.executor().wait(id, Duration::from_secs(60)).map_err(|e| e.to_string());
    let (ra, rb) = (wait(a)?, wait(b)?);
    ensure(ra.canonical_outputs() == rb.canonical_outputs(), || "step outputs differ".into())?;
    let c = s.executor().compare_runs(a, b).map_err(|e| e.to_string())?;
    ensure(c.parameter_diff.is_empty() && c.metric_diff.is_empty(), || c.render_text())?;
    Ok(format!("{} bytes of identical step outputs, empty diffs", ra.canonical_outputs().len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("reference-session-replay", reference_session_replay),
        ("shipped-definition-fidelity", shipped_definition_fidelity),
        ("cross-step-rejection", cross_step_rejection),
        ("no-bypass-fuzz", no_bypass_fuzz),
        ("acyclicity-oracle", acyclicity_oracle),
        ("admission-mutation-suite", admission_mutants),
        ("replay-determinism", replay_determinism),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(check).unwrap_or_else(|panic| {
            let text = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {text}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failures += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 7 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
