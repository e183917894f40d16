mod common;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use proptest::prelude::*;
use proptest::sample::select;
use serde_json::{json, Value};

use common::fixtures;
use schemagate_core::schema::{
    parse_semantic_type, parse_tool_definition, parse_tool_text, parse_workflow_definition, parse_workflow_text,
    render_canonical, types_compatible, validate_value, Check, Columns, EdgeDefinition, IoContract,
    ParameterDefinition, ParameterMapping, Provenance, SemanticType, StepBinding, StepDefinition, ToolDefinition,
    ValidationRules, Version, WorkflowDefinition, WorkflowMetadata,
};

fn fixture(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join(path)).unwrap()).unwrap()
}

// -- examples ---------------------------------------------------------------

#[test]
fn the_predictor_document_parses() {
    let tool = parse_tool_definition(&fixture("tools/materials_property_predictor.json")).unwrap();
    assert_eq!(tool.id, "materials_property_predictor");
    assert_eq!(tool.version, Version::new(2, 1, 0));
    assert_eq!(tool.dependencies, ["data_loader"]);
}

#[test]
fn the_analysis_workflow_parses() {
    let wf = parse_workflow_definition(&fixture("workflows/basic_data_analysis.json")).unwrap();
    assert_eq!((wf.steps.len(), wf.parameter_mappings.len(), wf.edges.len()), (3, 2, 2));
}

fn diagnostics_of_tool(doc: &Value) -> Vec<(Check, String)> {
    parse_tool_definition(doc).unwrap_err().into_iter().map(|d| (d.check, d.location)).collect()
}

fn diagnostics_of_workflow(doc: &Value) -> Vec<(Check, String)> {
    parse_workflow_definition(doc).unwrap_err().into_iter().map(|d| (d.check, d.location)).collect()
}

#[test]
fn malformed_tool_documents_are_diagnosed() {
    let mut doc = fixture("tools/materials_property_predictor.json");
    doc.as_object_mut().unwrap().remove("description");
    assert!(diagnostics_of_tool(&doc).iter().any(|(c, _)| *c == Check::DocumentationCompleteness));

    let mut doc = fixture("tools/materials_property_predictor.json");
    doc["version"] = json!("2.1");
    assert!(diagnostics_of_tool(&doc).iter().any(|(c, _)| *c == Check::VersionFormat));
}

#[test]
fn malformed_workflow_documents_are_diagnosed() {
    let mut doc = fixture("workflows/basic_data_analysis.json");
    doc["steps"] = json!([]);
    assert!(diagnostics_of_workflow(&doc).iter().any(|(c, _)| *c == Check::NonemptySteps));

    let mut doc = fixture("workflows/basic_data_analysis.json");
    doc["edges"][0]["target_node_id"] = json!("analyse");
    assert!(diagnostics_of_workflow(&doc).contains(&(Check::DanglingReference, "edges[0].target_node_id".into())));
}

#[test]
fn type_expressions_parse_to_the_grammar() {
    assert_eq!(parse_semantic_type("list[str]").unwrap(), SemanticType::list_of(SemanticType::String));
    assert_eq!(parse_semantic_type("string").unwrap(), SemanticType::String);
    let cols = parse_semantic_type("dataframe{yield_strength,creep_life}").unwrap();
    assert_eq!(cols, SemanticType::dataframe_with(["creep_life", "yield_strength"]));
    assert_eq!(parse_semantic_type(&cols.to_string()).unwrap(), cols);
}

#[test]
fn compatibility_examples() {
    let dynamic = SemanticType::dataframe_dynamic();
    assert!(types_compatible(&dynamic, &dynamic));
    assert!(types_compatible(&SemanticType::String, &SemanticType::String));
    let have = SemanticType::dataframe_with(["composition", "hardness"]);
    let want = SemanticType::dataframe_with(["yield_strength"]);
    assert!(!types_compatible(&have, &want));
}

#[test]
fn value_examples() {
    let tool = parse_tool_definition(&fixture("tools/materials_property_predictor.json")).unwrap();
    let strategy = tool.parameter("validation_strategy").unwrap();
    assert!(validate_value(&json!("5-fold"), strategy).is_empty());
    let wf = parse_workflow_definition(&fixture("workflows/basic_data_analysis.json")).unwrap();
    let checks: Vec<Check> = validate_value(&json!(""), &wf.parameters["dataset_file"]).into_iter().map(|d| d.check).collect();
    assert_eq!(checks, [Check::NotEmpty]);
    let alloy = parse_workflow_definition(&fixture("workflows/alloy_inverse_design.json")).unwrap();
    assert!(validate_value(&json!(50), &alloy.parameters["n_candidates"]).is_empty());
}

#[test]
fn fixtures_round_trip_through_the_canonical_form() {
    for name in ["materials_property_predictor", "data_loader", "data_cleaner", "data_analyzer"] {
        let tool = parse_tool_definition(&fixture(&format!("tools/{name}.json"))).unwrap();
        assert_eq!(parse_tool_text(&tool.canonical()).unwrap(), tool);
    }
    for name in ["basic_data_analysis", "alloy_inverse_design"] {
        let wf = parse_workflow_definition(&fixture(&format!("workflows/{name}.json"))).unwrap();
        assert_eq!(parse_workflow_text(&wf.canonical()).unwrap(), wf);
    }
}

// -- generators -------------------------------------------------------------

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,9}"
}

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 ,.]{0,24}"
}

fn base_type() -> impl Strategy<Value = SemanticType> {
    prop_oneof![
        Just(SemanticType::String),
        Just(SemanticType::Number),
        Just(SemanticType::Integer),
        Just(SemanticType::Boolean),
        Just(SemanticType::ModelRef),
        Just(SemanticType::DatasetRef),
    ]
}

fn semantic_type() -> impl Strategy<Value = SemanticType> {
    prop_oneof![
        4 => base_type(),
        1 => base_type().prop_map(SemanticType::list_of),
        1 => proptest::option::of(proptest::collection::btree_set(ident(), 1..4))
            .prop_map(|keys| SemanticType::Dict { keys: keys.map(|k| k.into_iter().collect()) }),
        1 => Just(SemanticType::dataframe_dynamic()),
        1 => proptest::collection::btree_set(ident(), 1..4).prop_map(|c| SemanticType::Dataframe(Columns::Declared(c))),
    ]
}

/// A non-empty literal of `ty` with numbers inside [-100, 100].
fn literal(ty: &SemanticType) -> BoxedStrategy<Value> {
    match ty {
        SemanticType::String | SemanticType::ModelRef | SemanticType::DatasetRef => {
            "[a-z0-9-]{1,8}".prop_map(Value::from).boxed()
        }
        SemanticType::Number => (-400i32..400).prop_map(|n| json!(f64::from(n) / 4.0)).boxed(),
        SemanticType::Integer => (-100i64..100).prop_map(Value::from).boxed(),
        SemanticType::Boolean => any::<bool>().prop_map(Value::from).boxed(),
        SemanticType::List(element) => {
            proptest::collection::vec(literal(element), 1..4).prop_map(Value::Array).boxed()
        }
        SemanticType::Dict { keys } => {
            let names: Vec<String> = keys.clone().unwrap_or_else(|| vec!["k".into(), "other".into()]);
            proptest::sample::subsequence(names.clone(), 1..=names.len())
                .prop_map(|ks| Value::Object(ks.into_iter().map(|k| (k, json!("v"))).collect()))
                .boxed()
        }
        SemanticType::Dataframe(columns) => {
            let names: Vec<String> = match columns {
                Columns::Dynamic => vec!["a".into()],
                Columns::Declared(c) => c.iter().cloned().collect(),
            };
            Just(json!({"columns": names, "rows": []})).boxed()
        }
    }
}

fn distinct(values: Vec<Value>) -> Vec<Value> {
    let mut seen = BTreeSet::new();
    values.into_iter().filter(|v| seen.insert(render_canonical(v))).collect()
}

fn parameter(name: String) -> impl Strategy<Value = ParameterDefinition> {
    (semantic_type(), text(), any::<bool>(), any::<(bool, bool, bool, bool)>()).prop_flat_map(
        move |(ty, description, required, (with_allowed, with_default, with_examples, with_rules))| {
            let name = name.clone();
            let scalar = ty.is_scalar();
            let numeric = ty.is_numeric() || matches!(&ty, SemanticType::List(e) if e.is_numeric());
            (
                proptest::collection::vec(literal(&ty), 1..4),
                proptest::collection::vec(literal(&ty), 1..3),
                any::<prop::sample::Index>(),
                (any::<bool>(), any::<bool>(), any::<bool>()),
            )
                .prop_map(move |(pool, examples, pick, (not_empty, min, max))| {
                    let mut p = ParameterDefinition::new(name.clone(), ty.clone(), description.clone());
                    p.required = required;
                    let allowed = distinct(pool);
                    if with_allowed && scalar {
                        p.allowed_values = Some(allowed.clone());
                    }
                    if with_default && !required {
                        p.default = Some(allowed[pick.index(allowed.len())].clone());
                    }
                    if with_examples || required {
                        p.examples = Some(match &p.allowed_values {
                            Some(a) => vec![a[0].clone()],
                            None => examples,
                        });
                    }
                    if with_rules {
                        p.rules = ValidationRules {
                            not_empty,
                            min: (numeric && min).then_some(-1000.0),
                            max: (numeric && max).then_some(1000.0),
                            required: None,
                        };
                    }
                    p
                })
        },
    )
}

fn parameters(names: BTreeSet<String>) -> impl Strategy<Value = Vec<ParameterDefinition>> {
    names.into_iter().map(parameter).collect::<Vec<_>>()
}

fn version() -> impl Strategy<Value = Version> {
    (0u64..5, 0u64..20, 0u64..50).prop_map(|(a, b, c)| Version::new(a, b, c))
}

fn io_map() -> impl Strategy<Value = IndexMap<String, SemanticType>> {
    proptest::collection::vec((ident(), semantic_type()), 0..4).prop_map(|v| v.into_iter().collect())
}

fn tool_definition() -> impl Strategy<Value = ToolDefinition> {
    (
        ident(),
        (text(), text(), version()),
        proptest::collection::btree_set(ident(), 0..5).prop_flat_map(parameters),
        (io_map(), io_map()),
        proptest::collection::btree_set(ident(), 0..3),
        proptest::collection::vec(text(), 0..3),
        (text(), text(), 0u32..400, any::<bool>()),
    )
        .prop_map(|(id, (name, description, version), parameters, (inputs, outputs), deps, tags, (origin, maintainer, minutes, net))| {
            ToolDefinition {
                dependencies: deps.into_iter().filter(|d| *d != id).collect(),
                id,
                name,
                description,
                version,
                parameters,
                io: IoContract { inputs, outputs },
                domain_tags: tags,
                provenance: Provenance { origin, maintainer },
                estimated_duration: f64::from(minutes) / 4.0,
                requires_network: net,
            }
        })
}

fn binding(params: Vec<String>) -> BoxedStrategy<StepBinding> {
    let literal = prop_oneof![
        (-50i64..50).prop_map(Value::from),
        "[a-z]{1,6}".prop_map(Value::from),
        any::<bool>().prop_map(Value::from),
        proptest::collection::vec("[a-z]{1,4}".prop_map(Value::from), 0..3).prop_map(Value::Array),
    ]
    .prop_map(StepBinding::Literal);
    if params.is_empty() {
        literal.boxed()
    } else {
        prop_oneof![literal, select(params).prop_map(StepBinding::Reference)].boxed()
    }
}

fn workflow_definition() -> impl Strategy<Value = WorkflowDefinition> {
    (
        ident(),
        (text(), text(), version()),
        proptest::collection::btree_set(ident(), 1..6),
        proptest::collection::btree_set(ident(), 0..4),
        proptest::collection::vec(text(), 0..3),
        proptest::option::of(0u32..600),
    )
        .prop_flat_map(|(workflow_id, (name, description, version), step_ids, param_names, tags, minutes)| {
            let steps: Vec<String> = step_ids.into_iter().collect();
            let params: Vec<String> = param_names.iter().cloned().collect();
            let n = steps.len();
            let step_specs = steps
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let earlier = steps[..i].to_vec();
                    (
                        Just(id.clone()),
                        ident(),
                        text(),
                        proptest::collection::vec((ident(), binding(params.clone())), 0..3),
                        proptest::sample::subsequence(earlier.clone(), 0..=earlier.len()),
                        0u32..100,
                    )
                })
                .collect::<Vec<_>>();
            let arcs = proptest::collection::vec((0..n, 0..n, ident(), ident()), 0..4);
            (
                Just((workflow_id, name, description, version, tags, minutes, steps.clone())),
                step_specs,
                arcs,
                parameters(param_names),
            )
        })
        .prop_map(|((workflow_id, name, description, version, tags, minutes, steps), specs, arcs, params)| {
            let steps_def: Vec<StepDefinition> = specs
                .into_iter()
                .map(|(step_id, tool_id, description, bindings, deps, duration)| StepDefinition {
                    name: step_id.clone(),
                    step_id,
                    tool_id,
                    description,
                    parameters: bindings.into_iter().collect(),
                    dependencies: deps,
                    estimated_duration: f64::from(duration) / 2.0,
                })
                .collect();
            let arcs: Vec<_> = arcs.into_iter().filter(|(a, b, _, _)| a != b).collect();
            let edges = arcs
                .iter()
                .enumerate()
                .map(|(i, (a, b, out, inp))| EdgeDefinition {
                    edge_id: format!("e{i}"),
                    source_node_id: steps[*a].clone(),
                    target_node_id: steps[*b].clone(),
                    source_output: out.clone(),
                    target_input: inp.clone(),
                })
                .collect();
            let parameter_mappings = arcs
                .iter()
                .map(|(a, b, out, inp)| ParameterMapping {
                    from_step: steps[*a].clone(),
                    from_parameter: out.clone(),
                    to_step: steps[*b].clone(),
                    to_parameter: inp.clone(),
                    description: String::new(),
                })
                .collect();
            WorkflowDefinition {
                workflow_id,
                name,
                description,
                version,
                steps: steps_def,
                parameter_mappings,
                edges,
                parameters: params.into_iter().map(|p| (p.name.clone(), p)).collect(),
                metadata: WorkflowMetadata {
                    complexity: minutes.map(|_| "simple".into()),
                    estimated_duration_minutes: minutes.map(Into::into),
                    tags,
                    categories: vec![],
                    use_cases: vec![],
                },
            }
        })
}

// -- one-field mutations that break an invariant ----------------------------

fn mutate_tool(doc: &mut Value, which: usize, at: usize) {
    let params = doc["parameters"].as_array().unwrap().len();
    let i = at % params;
    match which % 10 {
        0 => doc["description"] = json!(" "),
        1 => doc["version"] = json!(["2.1", "2", "2.1.0.1", "v2.1.0", "2.1.x"][at % 5]),
        2 => doc["id"] = json!("9lives"),
        3 => doc["dependencies"] = json!([doc["id"].clone()]),
        4 => doc["parameters"][i]["name"] = doc["parameters"][(i + 1) % params]["name"].clone(),
        5 => doc["parameters"][i]["description"] = json!(""),
        6 => doc["parameters"][i]["type"] = json!("list[dataframe]"),
        7 => doc["estimated_duration"] = json!(-1.0),
        8 => {
            doc["parameters"][i]["required"] = json!(true);
            doc["parameters"][i]["default"] = doc["parameters"][i]["examples"][0].clone();
        }
        _ => doc.as_object_mut().unwrap().insert("unexpected".into(), json!(at)).map_or((), |_| ()),
    }
}

fn mutate_workflow(doc: &mut Value, which: usize, at: usize) {
    let steps = doc["steps"].as_array().unwrap().len();
    let i = at % steps;
    match which % 10 {
        0 => doc["steps"] = json!([]),
        1 => doc["steps"][i]["step_id"] = doc["steps"][(i + 1) % steps]["step_id"].clone(),
        2 => doc["steps"][i]["dependencies"] = json!([doc["steps"][i]["step_id"].clone()]),
        3 => doc["edges"][at % 2]["source_node_id"] = json!("nowhere"),
        4 => doc["edges"][1]["edge_id"] = doc["edges"][0]["edge_id"].clone(),
        5 => doc["parameter_mappings"][at % 2]["to_step"] = doc["parameter_mappings"][at % 2]["from_step"].clone(),
        6 => doc["parameters"]["missing_strategy"]["default"] = json!("interpolate"),
        7 => doc["parameters"]["missing_strategy"]["validation_rules"]["allowed_values"] = json!([]),
        8 => doc["version"] = json!("1.0"),
        _ => doc["steps"][i]["parameters"]["x"] = json!({"$param": "undeclared"}),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_tools_round_trip(tool in tool_definition()) {
        let text = tool.canonical();
        let parsed = parse_tool_text(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &tool);
        prop_assert_eq!(parsed.canonical(), text);
    }

    #[test]
    fn generated_workflows_round_trip(wf in workflow_definition()) {
        let text = wf.canonical();
        let parsed = parse_workflow_text(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &wf);
        prop_assert_eq!(parsed.canonical(), text);
    }

    #[test]
    fn defaults_satisfy_their_own_parameter(tool in tool_definition()) {
        for p in tool.parameters.iter().filter(|p| p.default.is_some()) {
            prop_assert!(validate_value(p.default.as_ref().unwrap(), p).is_empty());
        }
    }

    #[test]
    fn compatibility_is_reflexive_and_dynamic_is_top(ty in semantic_type(), other in semantic_type()) {
        prop_assert!(types_compatible(&ty, &ty));
        prop_assert_eq!(parse_semantic_type(&ty.to_string()).unwrap(), ty.clone());
        if matches!(ty, SemanticType::Dataframe(_)) {
            prop_assert!(types_compatible(&SemanticType::dataframe_dynamic(), &ty));
            prop_assert!(types_compatible(&ty, &SemanticType::dataframe_dynamic()));
        }
        if let (SemanticType::Dataframe(Columns::Declared(s)), SemanticType::Dataframe(Columns::Declared(t))) = (&ty, &other) {
            prop_assert_eq!(types_compatible(&ty, &other), t.is_subset(s));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn one_broken_field_is_always_diagnosed(which in 0usize..10, at in 0usize..16, tool in any::<bool>()) {
        if tool {
            let mut doc = fixture("tools/materials_property_predictor.json");
            mutate_tool(&mut doc, which, at);
            prop_assert!(parse_tool_definition(&doc).is_err(), "mutation {} accepted", which);
        } else {
            let mut doc = fixture("workflows/basic_data_analysis.json");
            mutate_workflow(&mut doc, which, at);
            prop_assert!(parse_workflow_definition(&doc).is_err(), "mutation {} accepted", which);
        }
    }
}
