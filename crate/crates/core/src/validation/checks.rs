use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use super::ToolResolver;
use crate::registry::RegistryError;
use crate::schema::types::types_compatible;
use crate::schema::{
    validate_value, value_conforms, Check, DataFlow, Diagnostic, FlowOrigin, StepBinding,
    ToolDefinition, WorkflowDefinition,
};

/// Successor lists over step indices for the union of dependencies and
/// edges, ignoring pairs that name unknown steps.
fn successors(wf: &WorkflowDefinition) -> Vec<Vec<usize>> {
    let mut next = vec![Vec::new(); wf.steps.len()];
    for (a, b) in wf.ordering_pairs() {
        if let (Some(i), Some(j)) = (wf.step_index(&a), wf.step_index(&b)) {
            if !next[i].contains(&j) {
                next[i].push(j);
            }
        }
    }
    next
}

/// Cycles in the step graph, found by a depth-first search that visits
/// steps in definition order. Each back edge yields one cycle; cycles over
/// the same step set are reported once.
pub fn check_acyclicity(wf: &WorkflowDefinition) -> Vec<Diagnostic> {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let next = successors(wf);
    let n = wf.steps.len();
    let mut colour = vec![Colour::White; n];
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    let mut seen_sets: HashSet<BTreeSet<usize>> = HashSet::new();

    for root in 0..n {
        if colour[root] != Colour::White {
            continue;
        }
        // explicit stack of (node, next successor position)
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        colour[root] = Colour::Grey;
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            if let Some(&succ) = next[node].get(*pos) {
                *pos += 1;
                match colour[succ] {
                    Colour::White => {
                        colour[succ] = Colour::Grey;
                        stack.push((succ, 0));
                    }
                    Colour::Grey => {
                        let start = stack.iter().position(|&(s, _)| s == succ).expect("grey nodes are on the stack");
                        let cycle: Vec<usize> = stack[start..].iter().map(|&(s, _)| s).collect();
                        if seen_sets.insert(cycle.iter().copied().collect()) {
                            cycles.push(cycle);
                        }
                    }
                    Colour::Black => {}
                }
            } else {
                colour[node] = Colour::Black;
                stack.pop();
            }
        }
    }

    cycles
        .into_iter()
        .map(|cycle| {
            let mut names: Vec<&str> = cycle.iter().map(|&i| wf.steps[i].step_id.as_str()).collect();
            names.push(names[0]);
            Diagnostic::error(
                Check::Acyclicity,
                format!("steps[{}]", cycle[0]),
                format!("dependency cycle: {}", names.join(" -> ")),
            )
        })
        .collect()
}

fn resolved_tools(wf: &WorkflowDefinition, tools: &dyn ToolResolver) -> HashMap<String, Arc<ToolDefinition>> {
    wf.steps
        .iter()
        .filter_map(|s| tools.resolve_tool(&s.tool_id).ok().map(|t| (s.step_id.clone(), t)))
        .collect()
}

fn flow_label(wf: &WorkflowDefinition, flow: &DataFlow) -> String {
    match flow.origin {
        FlowOrigin::Edge(i) => format!("edge {}", wf.edges[i].edge_id),
        FlowOrigin::Mapping(i) => format!("mapping parameter_mappings[{i}]"),
    }
}

/// Every data flow (edges, and mappings not mirrored by an edge) carries a
/// source output type compatible with the target input type. Flows whose
/// endpoints cannot be resolved are left to the other checks.
pub fn check_edge_types(wf: &WorkflowDefinition, tools: &dyn ToolResolver) -> Vec<Diagnostic> {
    let by_step = resolved_tools(wf, tools);
    let mut out = Vec::new();
    for flow in wf.data_flows() {
        let (Some(src), Some(dst)) = (by_step.get(&flow.from_step), by_step.get(&flow.to_step)) else {
            continue;
        };
        let (Some(out_ty), Some(in_ty)) = (src.io.outputs.get(&flow.from_output), dst.io.inputs.get(&flow.to_input))
        else {
            continue;
        };
        if types_compatible(out_ty, in_ty) {
            continue;
        }
        let mut message = format!(
            "{}: {}.{} ({out_ty}) is not compatible with {}.{} ({in_ty})",
            flow_label(wf, &flow),
            flow.from_step,
            flow.from_output,
            flow.to_step,
            flow.to_input
        );
        let missing = out_ty.missing_columns(in_ty);
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(String::as_str).collect();
            message.push_str(&format!("; missing columns: {}", names.join(", ")));
        }
        out.push(Diagnostic::error(Check::EdgeTypeCompatibility, flow.location(), message));
    }
    out
}

/// One binding of a step slot.
#[derive(Debug, Clone)]
enum Source {
    Literal,
    Reference(String),
    Workflow(String),
    Flow(String),
}

impl Source {
    fn describe(&self) -> String {
        match self {
            Source::Literal => "step literal".into(),
            Source::Reference(p) => format!("reference to workflow parameter `{p}`"),
            Source::Workflow(p) => format!("workflow parameter `{p}`"),
            Source::Flow(loc) => loc.clone(),
        }
    }
}

/// Every required tool parameter and every tool input of every step is
/// bound exactly once, by a step literal, a reference to a workflow-level
/// parameter, a same-named workflow-level parameter, or an incoming data
/// flow. A step literal shadowed by a same-named workflow-level parameter is
/// a warning: the workflow-level value is used at run time.
pub fn check_parameter_resolution(wf: &WorkflowDefinition, tools: &dyn ToolResolver) -> Vec<Diagnostic> {
    let flows = wf.data_flows();
    let mut out = Vec::new();
    for (i, step) in wf.steps.iter().enumerate() {
        let Ok(tool) = tools.resolve_tool(&step.tool_id) else {
            continue;
        };
        let at = |name: &str| format!("steps[{i}].parameters.{name}");

        for key in step.parameters.keys() {
            if tool.parameter(key).is_none() && !tool.io.inputs.contains_key(key) {
                out.push(Diagnostic::error(
                    Check::ParameterResolution,
                    at(key),
                    format!("tool {} has no parameter or input named `{key}`", tool.id),
                ));
            }
        }

        // conversation-supplied parameters
        for param in &tool.parameters {
            let mut sources = Vec::new();
            match step.parameters.get(&param.name) {
                Some(StepBinding::Literal(value)) => {
                    sources.push(Source::Literal);
                    for d in validate_value(value, param) {
                        out.push(Diagnostic::error(
                            Check::ParameterResolution,
                            d.location.replacen("parameters.", &format!("steps[{i}].parameters."), 1),
                            format!("{}.{}: {}", step.step_id, param.name, d.message),
                        ));
                    }
                }
                Some(StepBinding::Reference(name)) => sources.push(Source::Reference(name.clone())),
                None => {}
            }
            if let Some(wparam) = wf.parameters.get(&param.name) {
                let same_reference = matches!(sources.first(), Some(Source::Reference(r)) if *r == param.name);
                if matches!(sources.first(), Some(Source::Literal)) {
                    out.push(Diagnostic::warning(
                        Check::ParameterResolution,
                        at(&param.name),
                        format!(
                            "step literal for {}.{} is overridden by the workflow-level parameter of the same name",
                            step.step_id, param.name
                        ),
                    ));
                } else if !same_reference {
                    sources.push(Source::Workflow(param.name.clone()));
                }
                if !types_compatible(&wparam.ty, &param.ty) {
                    out.push(Diagnostic::error(
                        Check::ParameterResolution,
                        at(&param.name),
                        format!(
                            "workflow parameter `{}` ({}) cannot bind {}.{} ({})",
                            param.name, wparam.ty, step.step_id, param.name, param.ty
                        ),
                    ));
                }
            }
            if let Some(Source::Reference(name)) = sources.first() {
                if let Some(wparam) = wf.parameters.get(name) {
                    if !types_compatible(&wparam.ty, &param.ty) {
                        out.push(Diagnostic::error(
                            Check::ParameterResolution,
                            at(&param.name),
                            format!(
                                "workflow parameter `{name}` ({}) cannot bind {}.{} ({})",
                                wparam.ty, step.step_id, param.name, param.ty
                            ),
                        ));
                    }
                }
            }
            report_binding_count(&mut out, at(&param.name), step, &param.name, &sources, param.is_required());
        }

        // data inputs
        for (input, ty) in &tool.io.inputs {
            let mut sources = Vec::new();
            match step.parameters.get(input) {
                Some(StepBinding::Literal(value)) => {
                    sources.push(Source::Literal);
                    if let Err(reason) = value_conforms(ty, value) {
                        out.push(Diagnostic::error(
                            Check::ParameterResolution,
                            at(input),
                            format!("{}.{input}: {reason}", step.step_id),
                        ));
                    }
                }
                Some(StepBinding::Reference(name)) => {
                    if let Some(wparam) = wf.parameters.get(name) {
                        if !types_compatible(&wparam.ty, ty) {
                            out.push(Diagnostic::error(
                                Check::ParameterResolution,
                                at(input),
                                format!(
                                    "workflow parameter `{name}` ({}) cannot bind input {}.{input} ({ty})",
                                    wparam.ty, step.step_id
                                ),
                            ));
                        }
                    }
                    sources.push(Source::Reference(name.clone()));
                }
                None => {}
            }
            sources.extend(
                flows
                    .iter()
                    .filter(|f| f.to_step == step.step_id && f.to_input == *input)
                    .map(|f| Source::Flow(f.location())),
            );
            report_binding_count(&mut out, format!("steps[{i}].inputs.{input}"), step, input, &sources, true);
        }
    }
    out
}

fn report_binding_count(
    out: &mut Vec<Diagnostic>,
    location: String,
    step: &crate::schema::StepDefinition,
    slot: &str,
    sources: &[Source],
    required: bool,
) {
    if sources.is_empty() && required {
        out.push(Diagnostic::error(
            Check::ParameterResolution,
            location,
            format!("{}.{slot} is unbound", step.step_id),
        ));
    } else if sources.len() > 1 {
        let names: Vec<String> = sources.iter().map(Source::describe).collect();
        out.push(Diagnostic::error(
            Check::ParameterResolution,
            location,
            format!("{}.{slot} is bound {} times ({})", step.step_id, sources.len(), names.join(", ")),
        ));
    }
}

/// Every step's tool resolves to a published registry entry.
pub fn check_tool_availability(wf: &WorkflowDefinition, tools: &dyn ToolResolver) -> Vec<Diagnostic> {
    wf.steps
        .iter()
        .enumerate()
        .filter_map(|(i, step)| {
            let reason = match tools.resolve_tool(&step.tool_id) {
                Ok(_) => return None,
                Err(RegistryError::Retired { version, .. }) => format!("tool {} {version} is retired", step.tool_id),
                Err(RegistryError::Unpublished { version, .. }) => {
                    format!("tool {} {version} is a draft; a published version is required", step.tool_id)
                }
                Err(RegistryError::NotFound { .. }) => format!("tool {} is not in the registry", step.tool_id),
                Err(other) => format!("tool {} cannot be resolved: {other}", step.tool_id),
            };
            Some(Diagnostic::error(Check::ToolAvailability, format!("steps[{i}].tool_id"), format!("step {}: {reason}", step.step_id)))
        })
        .collect()
}

/// Mapping and edge endpoints name real outputs and inputs of their tools;
/// every edge is backed by a step dependency; every mapping runs from an
/// upstream step.
pub fn check_mapping_consistency(wf: &WorkflowDefinition, tools: &dyn ToolResolver) -> Vec<Diagnostic> {
    let by_step = resolved_tools(wf, tools);
    let mut out = Vec::new();
    let output_exists = |out: &mut Vec<Diagnostic>, step: &str, name: &str, location: String| {
        if let Some(tool) = by_step.get(step) {
            if !tool.io.outputs.contains_key(name) {
                out.push(Diagnostic::error(
                    Check::MappingConsistency,
                    location,
                    format!("tool {} (step {step}) has no output `{name}`", tool.id),
                ));
            }
        }
    };
    let input_exists = |out: &mut Vec<Diagnostic>, step: &str, name: &str, location: String| {
        if let Some(tool) = by_step.get(step) {
            if !tool.io.inputs.contains_key(name) {
                out.push(Diagnostic::error(
                    Check::MappingConsistency,
                    location,
                    format!("tool {} (step {step}) has no input `{name}`", tool.id),
                ));
            }
        }
    };

    let reach = reachability(wf);
    for (i, m) in wf.parameter_mappings.iter().enumerate() {
        let loc = format!("parameter_mappings[{i}]");
        output_exists(&mut out, &m.from_step, &m.from_parameter, format!("{loc}.from_parameter"));
        input_exists(&mut out, &m.to_step, &m.to_parameter, format!("{loc}.to_parameter"));
        if let (Some(a), Some(b)) = (wf.step_index(&m.from_step), wf.step_index(&m.to_step)) {
            if a != b && !reach[a].contains(&b) {
                out.push(Diagnostic::error(
                    Check::MappingConsistency,
                    loc,
                    format!("{} is not upstream of {}; add a dependency", m.from_step, m.to_step),
                ));
            }
        }
    }
    for (i, e) in wf.edges.iter().enumerate() {
        let loc = format!("edges[{i}]");
        output_exists(&mut out, &e.source_node_id, &e.source_output, format!("{loc}.source_output"));
        input_exists(&mut out, &e.target_node_id, &e.target_input, format!("{loc}.target_input"));
        if let Some(target) = wf.step(&e.target_node_id) {
            if wf.step(&e.source_node_id).is_some() && !target.dependencies.contains(&e.source_node_id) {
                out.push(Diagnostic::error(
                    Check::MappingConsistency,
                    loc,
                    format!(
                        "edge {} is not backed by a dependency: {} does not list {}",
                        e.edge_id, e.target_node_id, e.source_node_id
                    ),
                ));
            }
        }
    }
    out
}

/// For each step, the set of steps reachable from it.
fn reachability(wf: &WorkflowDefinition) -> Vec<HashSet<usize>> {
    let next = successors(wf);
    (0..wf.steps.len())
        .map(|start| {
            let mut seen = HashSet::new();
            let mut todo = next[start].clone();
            while let Some(n) = todo.pop() {
                if seen.insert(n) {
                    todo.extend(next[n].iter().copied());
                }
            }
            seen
        })
        .collect()
}
