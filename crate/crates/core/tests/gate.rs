mod common;

use serde_json::{json, Value};

use common::*;
use schemagate_core::gate::{
    merge, ActionOutcome, GateError, InvocationState, PromptReason, ScriptedPlanner,
};
use schemagate_core::registry::VersionReq;
use schemagate_core::schema::Check;

fn planner(rules: Value) -> ScriptedPlanner {
    ScriptedPlanner::from_json(&rules).unwrap()
}

#[test]
fn sessions_start_empty_and_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let a = s.gate.open_session();
    let b = s.gate.open_session();
    assert_ne!(a.session_id, b.session_id);
    assert!(a.messages.is_empty());
    assert!(a.action_log.is_empty());
    assert!(a.pending_invocation.is_none());
}

#[test]
fn a_design_request_returns_ranked_workflows() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = planner(json!([{
        "match": {"pattern": "(?i)superalloy"},
        "decision": {
            "assistant_message": "Searching the registry.",
            "proposed_action": {"action": "search_workflows", "arguments": {"query": "alloy design"}}
        }
    }]));
    let out = s.gate.step(session, Some("I want to design a new superalloy with low chromium"), &p).unwrap();
    assert_eq!(out.action.as_deref(), Some("search_workflows"));
    let result = out.result.unwrap().to_string();
    assert!(result.contains("alloy_inverse_design"), "{result}");
    let ctx = s.gate.session(session).unwrap();
    assert_eq!(ctx.action_log.len(), 1);
    assert!(ctx.messages.iter().any(|m| m.text.contains("alloy_inverse_design")));
}

#[test]
fn an_empty_execute_proposal_only_drafts() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = planner(json!([{
        "match": {"exact": "run it"},
        "decision": {
            "assistant_message": "Preparing the invocation.",
            "proposed_action": {"action": "execute_workflow", "arguments": {"workflow_id": "alloy_inverse_design", "parameters": {}}}
        }
    }]));
    let out = s.gate.step(session, Some("run it"), &p).unwrap();
    let required: Vec<&str> = out.prompts.iter().map(|p| p.parameter.as_str()).collect();
    assert_eq!(required, ["dataset_id", "model_id", "target_properties", "constraints"]);
    assert!(out.prompts.iter().all(|p| p.reason == PromptReason::Missing));
    assert_eq!(out.invocation.unwrap().state, InvocationState::Draft);
    assert!(s.executor().submissions().is_empty());
}

#[test]
fn unknown_actions_are_refused_and_logged_once() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = planner(json!([{
        "match": {"exact": "clean up"},
        "decision": {"assistant_message": "Deleting.", "proposed_action": {"action": "delete_registry", "arguments": {}}}
    }]));
    let err = s.gate.step(session, Some("clean up"), &p).unwrap_err();
    assert!(matches!(err, GateError::ActionRejected { .. }), "{err:?}");
    let ctx = s.gate.session(session).unwrap();
    assert_eq!(ctx.action_log.len(), 1);
    assert_eq!(ctx.action_log[0].outcome, ActionOutcome::Refused);
    assert_eq!(s.registry.counts().workflows, 2);
}

#[test]
fn the_full_parameter_block_validates() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = s.gate.propose(session, "alloy_inverse_design", None, alloy_parameters()).unwrap();
    assert!(p.prompts.is_empty());
    assert_eq!(p.invocation.state, InvocationState::Validated);
}

#[test]
fn one_defect_gives_one_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;

    let mut missing = alloy_parameters();
    missing.remove("target_properties");
    let p = s.gate.propose(session, "alloy_inverse_design", None, missing).unwrap();
    assert_eq!(p.prompts.len(), 1);
    assert_eq!((p.prompts[0].parameter.as_str(), p.prompts[0].reason), ("target_properties", PromptReason::Missing));

    let mut wrong = alloy_parameters();
    wrong.insert("n_candidates".into(), json!("fifty"));
    let p = s.gate.propose(session, "alloy_inverse_design", None, wrong).unwrap();
    assert_eq!(p.prompts.len(), 1);
    assert_eq!(p.prompts[0].reason, PromptReason::TypeMismatch);
    assert!(p.prompts[0].expected.starts_with("integer"), "{}", p.prompts[0].expected);
    assert_eq!(p.invocation.state, InvocationState::Draft);
}

#[test]
fn proposing_an_unknown_workflow_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let err = s.gate.propose(session, "no_such_workflow", None, Default::default()).unwrap_err();
    assert_eq!(err.code(), "not_found");
}

#[test]
fn clarification_narrows_prompts_until_validated() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let mut partial = alloy_parameters();
    partial.remove("target_properties");
    partial.remove("model_id");
    let p = s.gate.propose(session, "alloy_inverse_design", None, partial).unwrap();
    assert_eq!(p.prompts.len(), 2);
    let id = p.invocation.invocation_id;

    let p = s.gate.clarify(session, id, object(json!({"target_properties": ["yield_strength"]}))).unwrap();
    assert_eq!(p.prompts.len(), 1);

    let p = s.gate.clarify(session, id, object(json!({"validation_strategy": "7-fold"}))).unwrap();
    assert_eq!(p.prompts.len(), 2);
    let bad = p.prompts.iter().find(|p| p.parameter == "validation_strategy").unwrap();
    assert_eq!(bad.reason, PromptReason::ConstraintViolation);
    for allowed in ["5-fold", "10-fold", "leave-one-out"] {
        assert!(bad.expected.contains(allowed), "{}", bad.expected);
    }
    let order: Vec<&str> = p.prompts.iter().map(|p| p.parameter.as_str()).collect();
    assert_eq!(order, ["model_id", "validation_strategy"]);

    let p = s.gate.clarify(session, id, object(json!({"model_id": "m1", "validation_strategy": "10-fold"}))).unwrap();
    assert!(p.prompts.is_empty());
    assert_eq!(p.invocation.state, InvocationState::Validated);

    let err = s.gate.clarify(session, id, object(json!({"colour": "red"}))).unwrap_err();
    assert!(matches!(err, GateError::UnknownParameter { .. }), "{err:?}");
}

#[test]
fn drafts_cannot_be_approved_or_dispatched() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = s.gate.propose(session, "basic_data_analysis", None, Default::default()).unwrap();
    let id = p.invocation.invocation_id;
    assert!(matches!(s.gate.approve(session, id, "me"), Err(GateError::NotValidated { .. })));
    assert!(matches!(s.gate.dispatch(session, id), Err(GateError::NotValidated { .. })));
    assert!(s.executor().submissions().is_empty());
}

#[test]
fn validated_invocations_need_approval_to_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = s.gate.propose(session, "basic_data_analysis", None, d2_parameters()).unwrap();
    let err = s.gate.dispatch(session, p.invocation.invocation_id).unwrap_err();
    assert!(matches!(err, GateError::NotApproved { state: InvocationState::Validated, .. }), "{err:?}");
    assert!(s.executor().submissions().is_empty());
}

#[test]
fn approving_twice_logs_once() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = s.gate.propose(session, "alloy_inverse_design", None, alloy_parameters()).unwrap();
    let id = p.invocation.invocation_id;
    let first = s.gate.approve(session, id, "scientist").unwrap();
    let second = s.gate.approve(session, id, "scientist").unwrap();
    assert_eq!(first, second);
    assert_eq!(first.state, InvocationState::Approved);
    let ctx = s.gate.session(session).unwrap();
    assert_eq!(ctx.action_log.iter().filter(|e| e.action == "approve").count(), 1);
    assert_eq!(ctx.invocation(id).unwrap().approved_by.as_deref(), Some("scientist"));
}

#[test]
fn dispatch_runs_an_approved_invocation_once() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let (session, run_id) = dispatch(&s.gate, "basic_data_analysis", d2_parameters());
    let ctx = s.gate.session(session).unwrap();
    assert_eq!(ctx.last_run_ids, [run_id]);
    let entry = &ctx.invocations[0];
    assert_eq!(entry.history, [InvocationState::Draft, InvocationState::Validated, InvocationState::Approved, InvocationState::Dispatched]);
    let again = s.gate.dispatch(session, entry.invocation.invocation_id).unwrap_err();
    assert!(matches!(again, GateError::AlreadyDispatched(_)));
    assert_eq!(s.executor().submissions().len(), 1);
}

#[test]
fn retiring_a_tool_after_approval_blocks_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let p = s.gate.propose(session, "basic_data_analysis", None, d2_parameters()).unwrap();
    let id = p.invocation.invocation_id;
    s.gate.approve(session, id, "me").unwrap();

    let cleaner = s.registry.tool("data_cleaner", VersionReq::Latest).unwrap();
    s.registry.retire_tool("data_cleaner", cleaner.version).unwrap();

    let err = s.gate.dispatch(session, id).unwrap_err();
    let GateError::GateRegression { diagnostics } = &err else { panic!("{err:?}") };
    assert!(diagnostics.iter().any(|d| d.check == Check::ToolAvailability), "{diagnostics:?}");
    assert!(s.executor().submissions().is_empty());
    assert!(s.executor().query_runs(&Default::default()).is_empty());
    let ctx = s.gate.session(session).unwrap();
    assert_eq!(ctx.invocation(id).unwrap().invocation.state, InvocationState::Approved);
}

#[test]
fn amendments_derive_from_the_prior_invocation() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let prior = s.gate.propose(session, "alloy_inverse_design", None, alloy_parameters()).unwrap().invocation;

    let same = s.gate.amend(session, prior.invocation_id, Default::default()).unwrap().invocation;
    assert_ne!(same.invocation_id, prior.invocation_id);
    assert_eq!(same.parent_invocation, Some(prior.invocation_id));
    assert_eq!(same.parameters, prior.parameters);

    let loo = s.gate.amend(session, prior.invocation_id, object(json!({"validation_strategy": "leave-one-out"}))).unwrap();
    assert_eq!(loo.invocation.state, InvocationState::Validated);
    let changed: Vec<&String> = loo
        .invocation
        .parameters
        .iter()
        .filter(|(k, v)| prior.parameters.get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    assert_eq!(changed, ["validation_strategy"]);

    let bad = s.gate.amend(session, prior.invocation_id, object(json!({"validation_strategy": "7-fold"}))).unwrap();
    assert_eq!(bad.invocation.state, InvocationState::Draft);
    assert_eq!(bad.prompts.len(), 1);
    assert_eq!(bad.prompts[0].reason, PromptReason::ConstraintViolation);

    let err = s.gate.amend(session, prior.invocation_id, object(json!({"colour": 1}))).unwrap_err();
    assert!(matches!(err, GateError::UnknownParameter { .. }));
}

#[test]
fn amending_matches_proposing_the_merged_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let session = s.gate.open_session().session_id;
    let prior = s.gate.propose(session, "alloy_inverse_design", None, alloy_parameters()).unwrap().invocation;
    let overrides = object(json!({"n_candidates": 0, "model_id": null}));
    let amended = s.gate.amend(session, prior.invocation_id, overrides.clone()).unwrap();
    let fresh = s.gate.propose(session, "alloy_inverse_design", None, merge(&prior.parameters, &overrides)).unwrap();
    assert_eq!(amended.prompts, fresh.prompts);
    assert_eq!(amended.invocation.state, fresh.invocation.state);
    assert!(!amended.invocation.parameters.contains_key("model_id"));
}

#[test]
fn auto_approve_lets_validated_invocations_through() {
    use schemagate_core::gate::GateConfig;
    let dir = tempfile::tempdir().unwrap();
    let s = stack(dir.path()).build();
    let gate = schemagate_core::gate::Gate::new(s.registry.clone(), s.executor().clone())
        .with_config(GateConfig { auto_approve: true, seed: 0 });
    let session = gate.open_session().session_id;
    let p = gate.propose(session, "basic_data_analysis", None, d2_parameters()).unwrap();
    gate.dispatch(session, p.invocation.invocation_id).unwrap();
    let entry = gate.session(session).unwrap().invocations[0].clone();
    assert_eq!(entry.approved_by.as_deref(), Some("auto_approve"));
    assert_eq!(entry.history, [InvocationState::Draft, InvocationState::Validated, InvocationState::Approved, InvocationState::Dispatched]);
}
