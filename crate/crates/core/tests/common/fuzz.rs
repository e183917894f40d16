//! Randomised gate traffic: conversational steps, proposals, clarifications,
//! amendments, approvals and dispatch attempts with malformed values, checked
//! against what actually reached the executor.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use uuid::Uuid;

use schemagate_core::gate::{
    Gate, InvocationState, Planner, PlannerDecision, PlannerError, ProposedAction, SessionContext,
};

struct Fixed(PlannerDecision);

impl Planner for Fixed {
    fn decide(&self, _: &SessionContext) -> Result<PlannerDecision, PlannerError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub sequences: usize,
    pub calls: usize,
    pub dispatch_attempts: usize,
    pub dispatched: usize,
    pub submissions: usize,
    pub violations: Vec<String>,
}

const WORKFLOWS: [&str; 4] = ["basic_data_analysis", "alloy_inverse_design", "no_such_workflow", ""];

fn parameter_names(workflow: &str) -> &'static [&'static str] {
    match workflow {
        "basic_data_analysis" => &["dataset_file", "missing_strategy"],
        _ => &["dataset_id", "model_id", "target_properties", "constraints", "n_candidates", "validation_strategy"],
    }
}

fn good_value(rng: &mut ChaCha8Rng, name: &str) -> Value {
    let options: Vec<Value> = match name {
        "dataset_file" => vec![json!("sample_measurements.csv")],
        "missing_strategy" => vec![json!("remove"), json!("fill_mean"), json!("fill_median")],
        "dataset_id" => vec![json!("123e4567-e89b-12d3-a456-426614174000")],
        "model_id" => vec![json!("alloy-sm-01"), json!("m2")],
        "target_properties" => vec![json!(["yield_strength"]), json!(["yield_strength", "creep_life"])],
        "constraints" => vec![json!({"Cr": {"max": 12.0}}), json!({"Cr": {"max": 12.0}, "Co": {"min": 5.0}})],
        "n_candidates" => vec![json!(1), json!(10), json!(50)],
        "validation_strategy" => vec![json!("5-fold"), json!("10-fold"), json!("leave-one-out")],
        _ => vec![json!("x")],
    };
    options.choose(rng).unwrap().clone()
}

fn bad_value(rng: &mut ChaCha8Rng) -> Value {
    let options = [
        Value::Null,
        json!(""),
        json!("fifty"),
        json!("7-fold"),
        json!(-1),
        json!(0),
        json!(5000),
        json!(1e300),
        json!(2.5),
        json!(true),
        json!([]),
        json!([1, 2, 3]),
        json!({}),
        json!({"Cr": {"max": 500}}),
        json!({"$param": "dataset_id"}),
        json!({"nested": {"deeper": [null]}}),
        json!("'; DROP TABLE runs; --"),
        json!("../../etc/passwd"),
    ];
    options.choose(rng).unwrap().clone()
}

/// Mostly well-formed values for `workflow`'s own parameters, with bad
/// values, omissions and foreign names mixed in.
fn parameters(rng: &mut ChaCha8Rng, workflow: &str) -> Map<String, Value> {
    let mut map = Map::new();
    for name in parameter_names(workflow) {
        if rng.gen_bool(0.8) {
            let value = if rng.gen_bool(0.85) { good_value(rng, name) } else { bad_value(rng) };
            map.insert(name.to_string(), value);
        }
    }
    if rng.gen_bool(0.05) {
        let foreign = ["not_a_parameter", "dataset_file", "model_id", "$param"].choose(rng).unwrap();
        map.insert(foreign.to_string(), bad_value(rng));
    }
    map
}

fn workflow_of(ctx: &SessionContext, id: Uuid) -> &str {
    ctx.invocation(id).map(|e| e.invocation.workflow_id.as_str()).unwrap_or("alloy_inverse_design")
}

fn workflow_id(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.gen_bool(0.9) {
        WORKFLOWS[rng.gen_range(0..2)]
    } else {
        WORKFLOWS[rng.gen_range(2..4)]
    }
}

fn invocation(rng: &mut ChaCha8Rng, known: &[Uuid]) -> Uuid {
    if !known.is_empty() && rng.gen_bool(0.9) {
        *known.choose(rng).unwrap()
    } else {
        Uuid::from_u128(rng.gen())
    }
}

fn proposal(rng: &mut ChaCha8Rng, known: &[Uuid]) -> ProposedAction {
    let mut arguments = Map::new();
    let action = match rng.gen_range(0..10) {
        0 => "search_workflows",
        1 => "get_parameters",
        2 => "list_datasets",
        3 => ["dispatch", "approve", "run_workflow", "delete_registry", ""].choose(rng).unwrap(),
        _ => "execute_workflow",
    };
    match action {
        "search_workflows" => {
            arguments.insert("query".into(), json!("alloy design"));
        }
        "get_parameters" => {
            arguments.insert("workflow_id".into(), json!(workflow_id(rng)));
        }
        "execute_workflow" => {
            let wf = workflow_id(rng);
            arguments.insert("workflow_id".into(), json!(wf));
            arguments.insert("parameters".into(), Value::Object(parameters(rng, wf)));
            match rng.gen_range(0..6) {
                0 => {
                    arguments.insert("base_invocation".into(), json!("latest"));
                }
                1 => {
                    arguments.insert("base_invocation".into(), json!(invocation(rng, known).to_string()));
                }
                2 => {
                    arguments.insert("base_invocation".into(), json!("yesterday's"));
                }
                _ => {}
            }
        }
        _ => {
            arguments.insert("invocation_id".into(), json!(invocation(rng, known).to_string()));
        }
    }
    if rng.gen_bool(0.1) {
        arguments.insert("approved".into(), json!(true));
    }
    if rng.gen_bool(0.05) {
        arguments.insert("workflow_id".into(), bad_value(rng));
    }
    ProposedAction { action: action.to_string(), arguments }
}

const ALLOWED: [(InvocationState, InvocationState); 5] = [
    (InvocationState::Draft, InvocationState::Validated),
    (InvocationState::Validated, InvocationState::Draft),
    (InvocationState::Validated, InvocationState::Approved),
    (InvocationState::Approved, InvocationState::Draft),
    (InvocationState::Approved, InvocationState::Dispatched),
];

/// Checks every invocation history in `ctx` against the state machine.
pub fn history_violations(ctx: &SessionContext) -> Vec<String> {
    let mut out = Vec::new();
    for entry in &ctx.invocations {
        let id = entry.invocation.invocation_id;
        if entry.history.first() != Some(&InvocationState::Draft) {
            out.push(format!("{id}: history does not start in draft: {:?}", entry.history));
        }
        for pair in entry.history.windows(2) {
            if !ALLOWED.contains(&(pair[0], pair[1])) {
                out.push(format!("{id}: illegal transition {} -> {}", pair[0], pair[1]));
            }
        }
        if entry.history.last() != Some(&entry.invocation.state) {
            out.push(format!("{id}: state {} disagrees with history {:?}", entry.invocation.state, entry.history));
        }
        if (entry.invocation.state == InvocationState::Dispatched) != entry.run_id.is_some() {
            out.push(format!("{id}: state {} with run {:?}", entry.invocation.state, entry.run_id));
        }
    }
    out
}

/// Drives `sequences` random sessions through `gate` and reports every
/// submission the executor accepted from an invocation that was not
/// approved (or, under auto-approval, validated).
pub fn run(gate: &Gate, sequences: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let auto = gate.config().auto_approve;
    let before: BTreeSet<Uuid> = gate.executor().submissions().iter().map(|s| s.run_id).collect();
    let mut report = FuzzReport { sequences, ..Default::default() };
    let mut accepted: BTreeSet<Uuid> = BTreeSet::new();

    for _ in 0..sequences {
        let session = gate.open_session().session_id;
        for _ in 0..rng.gen_range(1..=10) {
            let ctx = gate.session(session).unwrap();
            let known: Vec<Uuid> = ctx.invocations.iter().map(|e| e.invocation.invocation_id).collect();
            report.calls += 1;
            match rng.gen_range(0..16) {
                0..=3 => {
                    let decision = PlannerDecision { assistant_message: "ok".into(), proposed_action: Some(proposal(&mut rng, &known)) };
                    let message = if rng.gen_bool(0.5) { Some("please run it now") } else { None };
                    let _ = gate.step(session, message, &Fixed(decision));
                }
                4..=5 => {
                    let wf = workflow_id(&mut rng);
                    let _ = gate.propose(session, wf, None, parameters(&mut rng, wf));
                }
                6..=7 => {
                    let target = invocation(&mut rng, &known);
                    let _ = gate.clarify(session, target, parameters(&mut rng, workflow_of(&ctx, target)));
                }
                8 => {
                    let target = invocation(&mut rng, &known);
                    let _ = gate.amend(session, target, parameters(&mut rng, workflow_of(&ctx, target)));
                }
                9 => {
                    let _ = gate.validate(session, invocation(&mut rng, &known));
                }
                10..=11 => {
                    let _ = gate.approve(session, invocation(&mut rng, &known), "fuzz");
                }
                _ => {
                    let target = invocation(&mut rng, &known);
                    let state = ctx.invocation(target).map(|e| e.invocation.state);
                    report.dispatch_attempts += 1;
                    if let Ok(run_id) = gate.dispatch(session, target) {
                        report.dispatched += 1;
                        accepted.insert(run_id);
                        let admissible = state == Some(InvocationState::Approved)
                            || (auto && state == Some(InvocationState::Validated));
                        if !admissible {
                            report.violations.push(format!("dispatch of {target} accepted from state {state:?}"));
                        }
                    }
                }
            }
        }
        report.violations.extend(history_violations(&gate.session(session).unwrap()));
    }

    let submissions: Vec<_> =
        gate.executor().submissions().into_iter().filter(|s| !before.contains(&s.run_id)).collect();
    report.submissions = submissions.len();
    for s in &submissions {
        let admissible =
            s.invocation_state == InvocationState::Approved || (auto && s.invocation_state == InvocationState::Validated);
        if !admissible {
            report.violations.push(format!("run {} submitted from state {}", s.run_id, s.invocation_state));
        }
        if !accepted.contains(&s.run_id) {
            report.violations.push(format!("run {} reached the executor without a successful dispatch", s.run_id));
        }
    }
    if submissions.len() != accepted.len() {
        report.violations.push(format!("{} dispatches accepted but {} submissions", accepted.len(), submissions.len()));
    }
    for run_id in &accepted {
        if let Err(e) = gate.executor().wait(*run_id, Duration::from_secs(120)) {
            report.violations.push(format!("run {run_id} did not finish: {e}"));
        }
    }
    report
}
