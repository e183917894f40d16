use std::path::PathBuf;

use serde_json::{json, Map, Value};

use super::{param_str, string_list, AdapterContext, ToolAdapter, ValueMap};
use crate::executor::frame::{mean, median, Cell, ColumnType, DataFrame};
use crate::schema::Version;

fn frame_input(inputs: &ValueMap, name: &str) -> Result<DataFrame, String> {
    DataFrame::from_value(inputs.get(name).ok_or_else(|| format!("input `{name}` missing"))?)
}

/// Reads a CSV into a dataframe. `dataset_file` may name a registered
/// dataset (by UUID or name) or a path.
pub struct DataLoader;

impl ToolAdapter for DataLoader {
    fn tool_id(&self) -> &str {
        "data_loader"
    }

    fn version(&self) -> Version {
        Version::new(1, 0, 0)
    }

    fn run(&self, ctx: &AdapterContext, _inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String> {
        let file = param_str(parameters, "dataset_file")?;
        let file_type = parameters.get("file_type").and_then(Value::as_str).unwrap_or("csv");
        if file_type != "csv" {
            return Err(format!("file_type `{file_type}` is not supported (csv only)"));
        }
        let path = match ctx.registry.as_ref().and_then(|r| r.dataset(file).ok().map(|d| r.dataset_path(&d))) {
            Some(path) => path,
            None => {
                let p = PathBuf::from(file);
                if p.is_absolute() {
                    p
                } else {
                    ctx.base_dir.join(p)
                }
            }
        };
        let frame = DataFrame::read_csv(&path)?;
        let mut out = Map::new();
        out.insert("data".into(), frame.to_value());
        Ok(out)
    }
}

/// Applies `operations` in order: `remove_duplicates` keeps the first copy
/// of each row; `handle_missing` applies `missing_strategy`.
pub struct DataCleaner;

impl ToolAdapter for DataCleaner {
    fn tool_id(&self) -> &str {
        "data_cleaner"
    }

    fn version(&self) -> Version {
        Version::new(1, 0, 0)
    }

    fn run(&self, _ctx: &AdapterContext, inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String> {
        let mut frame = frame_input(inputs, "data")?;
        let operations = match parameters.get("operations") {
            None | Some(Value::Null) => vec!["remove_duplicates".to_string(), "handle_missing".to_string()],
            other => string_list(other, "operations")?,
        };
        let strategy = parameters.get("missing_strategy").and_then(Value::as_str).unwrap_or("remove");
        for op in &operations {
            frame = match op.as_str() {
                "remove_duplicates" => frame.drop_duplicates(),
                "handle_missing" => match strategy {
                    "remove" => frame.drop_incomplete(),
                    "fill_mean" => frame.fill_missing(mean)?,
                    "fill_median" => frame.fill_missing(median)?,
                    other => return Err(format!("unknown missing_strategy `{other}`")),
                },
                other => return Err(format!("unknown cleaning operation `{other}`")),
            };
        }
        let mut out = Map::new();
        out.insert("cleaned_data".into(), frame.to_value());
        Ok(out)
    }
}

/// Per-column count/mean/min/max plus a one-paragraph summary.
pub struct DataAnalyzer;

impl ToolAdapter for DataAnalyzer {
    fn tool_id(&self) -> &str {
        "data_analyzer"
    }

    fn version(&self) -> Version {
        Version::new(1, 0, 0)
    }

    fn run(&self, _ctx: &AdapterContext, inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String> {
        let frame = frame_input(inputs, "data")?;
        let analysis = parameters.get("analysis_type").and_then(Value::as_str).unwrap_or("dataset_profile");
        if analysis != "dataset_profile" {
            return Err(format!("analysis_type `{analysis}` is not supported"));
        }
        let mut columns = Map::new();
        let mut numeric = Vec::new();
        for (c, name) in frame.columns().iter().enumerate() {
            let count = frame.column_values(c).filter(|v| !v.is_missing()).count();
            let stats = if frame.column_type(c) == ColumnType::Number {
                let xs: Vec<f64> = frame.column_values(c).filter_map(Cell::as_f64).collect();
                numeric.push(name.as_str());
                json!({
                    "count": count,
                    "mean": mean(&xs),
                    "min": xs.iter().copied().reduce(f64::min),
                    "max": xs.iter().copied().reduce(f64::max),
                })
            } else {
                json!({"count": count, "mean": null, "min": null, "max": null})
            };
            columns.insert(name.clone(), stats);
        }
        let summary = if parameters.get("generate_summary").and_then(Value::as_bool).unwrap_or(true) {
            format!(
                "{} rows x {} columns; numeric columns: {}",
                frame.row_count(),
                frame.columns().len(),
                if numeric.is_empty() { "none".to_string() } else { numeric.join(", ") }
            )
        } else {
            String::new()
        };
        let mut out = Map::new();
        out.insert("profile".into(), json!({"row_count": frame.row_count(), "columns": columns}));
        out.insert("summary".into(), Value::String(summary));
        Ok(out)
    }
}
