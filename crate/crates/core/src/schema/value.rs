//! Value-level checks: does a literal satisfy a parameter definition?

use serde_json::Value;

use super::definitions::ParameterDefinition;
use super::diagnostic::{Check, Diagnostic};
use super::types::{Columns, SemanticType};

/// Structural type check of a literal. Returns a reason on mismatch.
pub fn value_conforms(ty: &SemanticType, value: &Value) -> Result<(), String> {
    let fail = |what: &str| Err(format!("expected {ty}, found {what}"));
    match ty {
        SemanticType::String | SemanticType::ModelRef | SemanticType::DatasetRef => {
            if value.is_string() {
                Ok(())
            } else {
                fail(json_kind(value))
            }
        }
        SemanticType::Number => {
            if value.is_number() {
                Ok(())
            } else {
                fail(json_kind(value))
            }
        }
        SemanticType::Integer => {
            if value.is_i64() || value.is_u64() {
                Ok(())
            } else {
                fail(json_kind(value))
            }
        }
        SemanticType::Boolean => {
            if value.is_boolean() {
                Ok(())
            } else {
                fail(json_kind(value))
            }
        }
        SemanticType::List(element) => {
            let Some(items) = value.as_array() else {
                return fail(json_kind(value));
            };
            for (i, item) in items.iter().enumerate() {
                value_conforms(element, item).map_err(|e| format!("element {i}: {e}"))?;
            }
            Ok(())
        }
        SemanticType::Dict { keys } => {
            let Some(map) = value.as_object() else {
                return fail(json_kind(value));
            };
            if let Some(keys) = keys {
                if let Some(extra) = map.keys().find(|k| !keys.contains(k)) {
                    return Err(format!("key `{extra}` is not one of {}", keys.join(", ")));
                }
            }
            Ok(())
        }
        SemanticType::Dataframe(columns) => {
            // literal dataframes use the rendered form {"columns": [...], "rows": [[...]]}
            let Some(map) = value.as_object() else {
                return fail(json_kind(value));
            };
            let Some(names) = map.get("columns").and_then(Value::as_array) else {
                return Err("dataframe literal needs a `columns` list".into());
            };
            if !map.get("rows").is_some_and(Value::is_array) {
                return Err("dataframe literal needs a `rows` list".into());
            }
            if let Columns::Declared(want) = columns {
                let have: Vec<&str> = names.iter().filter_map(Value::as_str).collect();
                let missing: Vec<&str> =
                    want.iter().map(String::as_str).filter(|c| !have.contains(c)).collect();
                if !missing.is_empty() {
                    return Err(format!("missing columns: {}", missing.join(", ")));
                }
            }
            Ok(())
        }
    }
}

pub fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "dict",
    }
}

/// Literal equality with numbers compared by value, so `5` equals `5.0`.
pub fn literal_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x == y,
            _ => x == y,
        },
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| literal_eq(a, b))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| literal_eq(v, w)))
        }
        _ => a == b,
    }
}

/// Checks `value` against `param`: type, admissible values and every rule.
///
/// `null` counts as "not supplied": it yields a `required` diagnostic for
/// required parameters and nothing otherwise.
pub fn validate_value(value: &Value, param: &ParameterDefinition) -> Vec<Diagnostic> {
    let location = format!("parameters.{}", param.name);
    let mut out = Vec::new();

    if value.is_null() {
        if param.is_required() {
            out.push(Diagnostic::error(
                Check::Required,
                location,
                format!("`{}` is required", param.name),
            ));
        }
        return out;
    }

    if let Err(reason) = value_conforms(&param.ty, value) {
        out.push(Diagnostic::error(Check::TypeMismatch, location, reason));
        return out;
    }

    if let Some(allowed) = &param.allowed_values {
        if !allowed.iter().any(|a| literal_eq(a, value)) {
            out.push(Diagnostic::error(
                Check::AllowedValues,
                location.clone(),
                format!("{value} is not one of {}", render_list(allowed)),
            ));
        }
    }

    if param.rules.not_empty && is_empty_value(value) {
        out.push(Diagnostic::error(
            Check::NotEmpty,
            location.clone(),
            format!("`{}` must not be empty", param.name),
        ));
    }

    for (bound, check) in [(param.rules.min, Check::Min), (param.rules.max, Check::Max)] {
        if let Some(bound) = bound {
            for (path, n) in numeric_leaves(value, &mut out, &location) {
                let violates = match check {
                    Check::Min => n < bound,
                    _ => n > bound,
                };
                if violates {
                    let relation = if check == Check::Min { "below minimum" } else { "above maximum" };
                    out.push(Diagnostic::error(check, path, format!("{n} is {relation} {bound}")));
                }
            }
        }
    }
    out
}

fn is_empty_value(value: &Value) -> bool {
    match value {
        Value::String(s) => s.trim().is_empty(),
        Value::Array(a) => a.is_empty(),
        Value::Object(o) => o.is_empty(),
        _ => false,
    }
}

/// Numbers that min/max rules apply to.
///
/// Scalars and numeric lists bound their elements. A dict under a numeric
/// rule is a bound map `{key: {"min": x, "max": y}}`; its shape is checked
/// here and every bound becomes a leaf.
fn numeric_leaves(value: &Value, out: &mut Vec<Diagnostic>, location: &str) -> Vec<(String, f64)> {
    match value {
        Value::Number(n) => n.as_f64().map(|f| vec![(location.to_string(), f)]).unwrap_or_default(),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_f64().map(|f| (format!("{location}[{i}]"), f)))
            .collect(),
        Value::Object(entries) => {
            let mut leaves = Vec::new();
            for (key, bound) in entries {
                let path = format!("{location}.{key}");
                let Some(bound) = bound.as_object() else {
                    push_shape_error(out, &path, "expected an object with `min` and/or `max`");
                    continue;
                };
                if bound.is_empty() {
                    push_shape_error(out, &path, "bound object is empty");
                    continue;
                }
                let mut lo = None;
                let mut hi = None;
                for (name, v) in bound {
                    match (name.as_str(), v.as_f64()) {
                        ("min", Some(x)) => lo = Some(x),
                        ("max", Some(x)) => hi = Some(x),
                        ("min" | "max", None) => {
                            push_shape_error(out, &format!("{path}.{name}"), "bound must be a number")
                        }
                        _ => push_shape_error(
                            out,
                            &format!("{path}.{name}"),
                            "only `min` and `max` bounds are allowed",
                        ),
                    }
                }
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if lo > hi {
                        push_shape_error(out, &path, &format!("min {lo} exceeds max {hi}"));
                    }
                }
                leaves.extend(lo.map(|x| (format!("{path}.min"), x)));
                leaves.extend(hi.map(|x| (format!("{path}.max"), x)));
            }
            leaves
        }
        _ => Vec::new(),
    }
}

fn push_shape_error(out: &mut Vec<Diagnostic>, path: &str, message: &str) {
    let diag = Diagnostic::error(Check::TypeMismatch, path, message);
    if !out.contains(&diag) {
        out.push(diag);
    }
}

pub(crate) fn render_list(values: &[Value]) -> String {
    let items: Vec<String> = values.iter().map(Value::to_string).collect();
    format!("[{}]", items.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::types::parse_semantic_type;
    use serde_json::json;

    fn param(ty: &str) -> ParameterDefinition {
        ParameterDefinition::new("p", parse_semantic_type(ty).unwrap(), "a parameter")
    }

    fn checks(diags: &[Diagnostic]) -> Vec<Check> {
        diags.iter().map(|d| d.check).collect()
    }

    #[test]
    fn allowed_values_membership() {
        let p = param("str").with_allowed(vec![json!("5-fold"), json!("10-fold"), json!("leave-one-out")]);
        assert!(validate_value(&json!("5-fold"), &p).is_empty());
        assert_eq!(checks(&validate_value(&json!("7-fold"), &p)), [Check::AllowedValues]);
    }

    #[test]
    fn not_empty_rule() {
        let mut p = param("string").required();
        p.rules.not_empty = true;
        assert_eq!(checks(&validate_value(&json!(""), &p)), [Check::NotEmpty]);
        assert_eq!(checks(&validate_value(&json!("  "), &p)), [Check::NotEmpty]);
        assert!(validate_value(&json!("data.csv"), &p).is_empty());
    }

    #[test]
    fn integers_and_numbers() {
        let p = param("integer");
        assert!(validate_value(&json!(50), &p).is_empty());
        assert_eq!(checks(&validate_value(&json!("fifty"), &p)), [Check::TypeMismatch]);
        assert_eq!(checks(&validate_value(&json!(2.5), &p)), [Check::TypeMismatch]);
        assert!(validate_value(&json!(50), &param("number")).is_empty());
    }

    #[test]
    fn null_means_not_supplied() {
        assert_eq!(checks(&validate_value(&Value::Null, &param("str").required())), [Check::Required]);
        assert!(validate_value(&Value::Null, &param("str")).is_empty());
    }

    #[test]
    fn min_max_on_scalars_and_bound_maps() {
        let mut p = param("int");
        p.rules.min = Some(1.0);
        p.rules.max = Some(1000.0);
        assert_eq!(checks(&validate_value(&json!(0), &p)), [Check::Min]);
        assert_eq!(checks(&validate_value(&json!(5000), &p)), [Check::Max]);

        let mut c = param("dict");
        c.rules.min = Some(0.0);
        c.rules.max = Some(100.0);
        assert!(validate_value(&json!({"Cr": {"max": 12.0}, "Co": {"min": 5.0}}), &c).is_empty());
        assert_eq!(checks(&validate_value(&json!({"Cr": {"max": 120.0}}), &c)), [Check::Max]);
        assert_eq!(checks(&validate_value(&json!({"Cr": "low"}), &c)), [Check::TypeMismatch]);
        assert_eq!(checks(&validate_value(&json!({"Cr": {"min": 9, "max": 3}}), &c)), [Check::TypeMismatch]);
        assert_eq!(checks(&validate_value(&json!({"Cr": {"avg": 3}}), &c)), [Check::TypeMismatch]);
    }

    #[test]
    fn lists_check_every_element() {
        let p = param("list[str]");
        assert!(validate_value(&json!(["yield_strength", "creep_life"]), &p).is_empty());
        let diags = validate_value(&json!(["a", 3]), &p);
        assert_eq!(checks(&diags), [Check::TypeMismatch]);
        assert!(diags[0].message.contains("element 1"));
    }

    #[test]
    fn dict_keys_restrict_literals() {
        let ty = SemanticType::Dict { keys: Some(vec!["r2_score".into(), "rmse".into()]) };
        assert!(value_conforms(&ty, &json!({"r2_score": 0.9})).is_ok());
        assert!(value_conforms(&ty, &json!({"mae": 0.9})).is_err());
    }

    #[test]
    fn literal_equality_is_numeric() {
        assert!(literal_eq(&json!(5), &json!(5.0)));
        assert!(literal_eq(&json!([1, {"a": 2}]), &json!([1.0, {"a": 2.0}])));
        assert!(!literal_eq(&json!("5"), &json!(5)));
    }
}
