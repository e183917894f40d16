//! Surrogate training and constrained inverse design over composition tables.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::{param_str, string_list, AdapterContext, ToolAdapter, ValueMap};
use crate::executor::frame::{Cell, ColumnType, DataFrame};
use crate::schema::{canonical_json, Version};

/// Linear least-squares surrogate, one coefficient vector per target.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
struct Surrogate {
    features: Vec<String>,
    targets: Vec<String>,
    /// `coefficients[t]` is `[intercept, w_1, ..., w_f]`.
    coefficients: Vec<Vec<f64>>,
    target_mean: Vec<f64>,
    target_sd: Vec<f64>,
}

impl Surrogate {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|w| w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

fn design_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let f = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), f + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] })
}

fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, String> {
    let a = design_matrix(x);
    let b = DVector::from_column_slice(y);
    let w = a.svd(true, true).solve(&b, 1e-10).map_err(|e| format!("least-squares solve failed: {e}"))?;
    Ok(w.iter().copied().collect())
}

fn folds(strategy: &str, n: usize) -> Result<usize, String> {
    let k = match strategy {
        "5-fold" => 5,
        "10-fold" => 10,
        "leave-one-out" => n,
        other => return Err(format!("unknown validation_strategy `{other}`")),
    };
    if k > n {
        return Err(format!("{strategy} needs at least {k} complete rows, found {n}"));
    }
    Ok(k)
}

/// Numeric matrix of `columns` over rows where every one of them is present.
fn numeric_rows(frame: &DataFrame, columns: &[String]) -> Result<Vec<Vec<f64>>, String> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            let i = frame.column_index(c).ok_or_else(|| format!("column `{c}` not in dataset"))?;
            if frame.column_type(i) != ColumnType::Number {
                return Err(format!("column `{c}` is not numeric"));
            }
            Ok(i)
        })
        .collect::<Result<_, String>>()?;
    Ok(frame
        .rows()
        .iter()
        .filter_map(|r| idx.iter().map(|&i| r[i].as_f64()).collect::<Option<Vec<f64>>>())
        .collect())
}

/// Fits a linear surrogate from every other numeric column to the target
/// columns and scores it by k-fold (row i in fold i mod k) or leave-one-out
/// cross-validation. The fitted model is kept in the run's artifacts.
pub struct PropertyPredictor;

impl ToolAdapter for PropertyPredictor {
    fn tool_id(&self) -> &str {
        "materials_property_predictor"
    }

    fn version(&self) -> Version {
        Version::new(2, 1, 0)
    }

    fn run(&self, ctx: &AdapterContext, inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String> {
        let frame = DataFrame::from_value(inputs.get("dataset").ok_or("input `dataset` missing")?)?;
        let targets = match inputs.get("target_columns") {
            Some(v) if !v.is_null() => string_list(Some(v), "target_columns")?,
            _ => string_list(parameters.get("target_properties"), "target_properties")?,
        };
        if targets.is_empty() {
            return Err("no target columns".into());
        }
        let strategy = parameters.get("validation_strategy").and_then(Value::as_str).unwrap_or("5-fold");
        let features: Vec<String> = frame
            .columns()
            .iter()
            .enumerate()
            .filter(|(i, c)| frame.column_type(*i) == ColumnType::Number && !targets.contains(c))
            .map(|(_, c)| c.clone())
            .collect();
        if features.is_empty() {
            return Err("dataset has no numeric feature columns".into());
        }
        let all: Vec<String> = features.iter().chain(&targets).cloned().collect();
        let rows = numeric_rows(&frame, &all)?;
        let n = rows.len();
        let f = features.len();
        if n < f + 2 {
            return Err(format!("{n} complete rows are too few to fit {f} features"));
        }
        let k = folds(strategy, n)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r[..f].to_vec()).collect();

        let mut predicted = vec![vec![0.0; targets.len()]; n];
        for fold in 0..k {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % k != fold);
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            for t in 0..targets.len() {
                let ty: Vec<f64> = train.iter().map(|&i| rows[i][f + t]).collect();
                let w = fit(&tx, &ty)?;
                for &i in &test {
                    predicted[i][t] = w[0] + w[1..].iter().zip(&x[i]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }

        let mut r2 = 0.0;
        let mut rmse = 0.0;
        let mut target_mean = Vec::new();
        let mut target_sd = Vec::new();
        let mut coefficients = Vec::new();
        for t in 0..targets.len() {
            let y: Vec<f64> = rows.iter().map(|r| r[f + t]).collect();
            let m = y.iter().sum::<f64>() / n as f64;
            let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
            let ss_res: f64 = y.iter().zip(&predicted).map(|(v, p)| (v - p[t]).powi(2)).sum();
            r2 += if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
            rmse += (ss_res / n as f64).sqrt();
            target_mean.push(m);
            target_sd.push((ss_tot / n as f64).sqrt());
            coefficients.push(fit(&x, &y)?);
        }
        let t = targets.len() as f64;
        let model = Surrogate { features, targets: targets.clone(), coefficients, target_mean, target_sd };
        let digest = Sha256::digest(format!("{strategy}\n{}", canonical_json(&model)).as_bytes());
        let model_id = format!("surrogate-{}", &hex::encode(digest)[..12]);
        ctx.artifacts.lock().unwrap().insert(model_id.clone(), serde_json::to_value(&model).expect("model serialises"));

        let mut columns = Vec::new();
        for name in &targets {
            columns.push(name.clone());
            columns.push(format!("{name}_predicted"));
        }
        let pred_rows = rows
            .iter()
            .zip(&predicted)
            .map(|(r, p)| (0..targets.len()).flat_map(|t| [Cell::Number(r[f + t]), Cell::Number(p[t])]).collect())
            .collect();
        let predictions = DataFrame::new(columns.clone(), vec![ColumnType::Number; columns.len()], pred_rows);

        let mut out = Map::new();
        out.insert("model_id".into(), Value::String(model_id));
        out.insert("metrics".into(), json!({"r2_score": r2 / t, "rmse": rmse / t}));
        out.insert("predictions".into(), predictions.to_value());
        Ok(out)
    }
}

/// Samples compositions inside the observed ranges narrowed by the
/// per-element constraints, scores them with the surrogate (sum of
/// standardised predicted targets) and keeps the best `n_candidates`.
pub struct AlloyInverseDesigner;

pub const SAMPLES_PER_CANDIDATE: usize = 50;

impl ToolAdapter for AlloyInverseDesigner {
    fn tool_id(&self) -> &str {
        "alloy_inverse_designer"
    }

    fn version(&self) -> Version {
        Version::new(1, 0, 0)
    }

    fn run(&self, ctx: &AdapterContext, inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String> {
        let surrogate_id = inputs.get("surrogate").and_then(Value::as_str).ok_or("input `surrogate` missing")?;
        let model: Surrogate = {
            let artifacts = ctx.artifacts.lock().unwrap();
            let value = artifacts.get(surrogate_id).ok_or_else(|| format!("no surrogate `{surrogate_id}` in this run"))?;
            serde_json::from_value(value.clone()).map_err(|e| e.to_string())?
        };
        let frame = DataFrame::from_value(inputs.get("dataset").ok_or("input `dataset` missing")?)?;
        let model_id = param_str(parameters, "model_id")?.to_string();
        let n = parameters.get("n_candidates").and_then(Value::as_u64).unwrap_or(10) as usize;
        if n == 0 {
            return Err("n_candidates must be positive".into());
        }
        let empty = Map::new();
        let constraints = parameters.get("constraints").and_then(Value::as_object).unwrap_or(&empty);
        if let Some(unknown) = constraints.keys().find(|k| !model.features.contains(k)) {
            return Err(format!("constraint on `{unknown}`, which is not a composition column"));
        }

        let observed = numeric_rows(&frame, &model.features)?;
        let mut ranges = Vec::new();
        for (j, name) in model.features.iter().enumerate() {
            let mut lo = observed.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let mut hi = observed.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            if let Some(bound) = constraints.get(name) {
                if let Some(min) = bound.get("min").and_then(Value::as_f64) {
                    lo = lo.max(min);
                }
                if let Some(max) = bound.get("max").and_then(Value::as_f64) {
                    hi = hi.min(max);
                }
            }
            if !(lo <= hi) {
                return Err(format!("constraints leave no feasible range for `{name}`"));
            }
            ranges.push((lo, hi));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut scored: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n * SAMPLES_PER_CANDIDATE)
            .map(|_| {
                let x: Vec<f64> = ranges
                    .iter()
                    .map(|&(lo, hi)| {
                        let v = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                        ((v * 100.0).round() / 100.0).clamp(lo, hi)
                    })
                    .collect();
                let y = model.predict(&x);
                let score = y
                    .iter()
                    .enumerate()
                    .map(|(t, v)| if model.target_sd[t] > 0.0 { (v - model.target_mean[t]) / model.target_sd[t] } else { 0.0 })
                    .sum();
                (score, x, y)
            })
            .collect();
        // stable sort keeps sampling order among equal scores
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(n);

        let mut columns = model.features.clone();
        columns.extend(model.targets.iter().cloned());
        columns.push("score".into());
        let rows: Vec<Vec<Cell>> = scored
            .iter()
            .map(|(s, x, y)| x.iter().chain(y).chain([s]).map(|v| Cell::Number(*v)).collect())
            .collect();
        let candidates = DataFrame::new(columns.clone(), vec![ColumnType::Number; columns.len()], rows);

        let (score, x, y) = &scored[0];
        let composition: Map<String, Value> = model.features.iter().cloned().zip(x.iter().map(|v| json!(v))).collect();
        let predicted: Map<String, Value> = model.targets.iter().cloned().zip(y.iter().map(|v| json!(v))).collect();

        let mut out = Map::new();
        out.insert("model_id".into(), Value::String(model_id));
        out.insert("candidates".into(), candidates.to_value());
        out.insert("best_candidate".into(), json!({"composition": composition, "predicted": predicted, "score": score}));
        Ok(out)
    }
}
