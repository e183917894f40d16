//! In-memory tables passed between steps.
//!
//! Columns are typed when a CSV is read: a column whose non-empty cells all
//! parse as numbers is numeric, one whose cells are all `true`/`false` is
//! boolean, anything else is text. Empty cells are missing values.

use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Map, Number, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Number,
    Boolean,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Boolean(bool),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    fn to_value(&self) -> Value {
        match self {
            Cell::Missing => Value::Null,
            Cell::Number(x) => Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Boolean(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }

    fn from_value(value: &Value) -> Result<Self, String> {
        Ok(match value {
            Value::Null => Cell::Missing,
            Value::Number(n) => Cell::Number(n.as_f64().ok_or("number out of range")?),
            Value::Bool(b) => Cell::Boolean(*b),
            Value::String(s) => Cell::Text(s.clone()),
            other => return Err(format!("cell must be a scalar, found {other}")),
        })
    }

    /// Hashable identity for duplicate detection.
    fn key(&self) -> String {
        match self {
            Cell::Missing => "\u{0}".into(),
            Cell::Number(x) => format!("n{x:?}"),
            Cell::Boolean(b) => format!("b{b}"),
            Cell::Text(s) => format!("t{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataFrame {
    columns: Vec<String>,
    types: Vec<ColumnType>,
    rows: Vec<Vec<Cell>>,
}

impl DataFrame {
    pub fn new(columns: Vec<String>, types: Vec<ColumnType>, rows: Vec<Vec<Cell>>) -> Self {
        assert_eq!(columns.len(), types.len());
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        Self { columns, types, rows }
    }

    pub fn read_csv(path: &Path) -> Result<Self, String> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let columns: Vec<String> =
            reader.headers().map_err(|e| format!("{}: {e}", path.display()))?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
            if record.len() != columns.len() {
                return Err(format!("{}: row {} has {} fields, expected {}", path.display(), raw.len() + 1, record.len(), columns.len()));
            }
            raw.push(record.iter().map(|c| c.trim().to_string()).collect());
        }
        let types: Vec<ColumnType> = (0..columns.len())
            .map(|c| {
                let present: Vec<&str> = raw.iter().map(|r| r[c].as_str()).filter(|s| !s.is_empty()).collect();
                if !present.is_empty() && present.iter().all(|s| s.parse::<f64>().is_ok_and(f64::is_finite)) {
                    ColumnType::Number
                } else if !present.is_empty() && present.iter().all(|s| *s == "true" || *s == "false") {
                    ColumnType::Boolean
                } else {
                    ColumnType::Text
                }
            })
            .collect();
        let rows = raw
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .zip(&types)
                    .map(|(s, ty)| match (s.is_empty(), ty) {
                        (true, _) => Cell::Missing,
                        (false, ColumnType::Number) => Cell::Number(s.parse().expect("checked above")),
                        (false, ColumnType::Boolean) => Cell::Boolean(s == "true"),
                        (false, ColumnType::Text) => Cell::Text(s),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { columns, types, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_type(&self, index: usize) -> ColumnType {
        self.types[index]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &Cell> {
        self.rows.iter().map(move |r| &r[index])
    }

    /// Keeps the first occurrence of every distinct row.
    pub fn drop_duplicates(&self) -> Self {
        let mut seen = HashSet::new();
        let rows = self
            .rows
            .iter()
            .filter(|r| seen.insert(r.iter().map(Cell::key).collect::<Vec<_>>()))
            .cloned()
            .collect();
        Self { rows, ..self.clone() }
    }

    /// Drops every row with a missing cell.
    pub fn drop_incomplete(&self) -> Self {
        let rows = self.rows.iter().filter(|r| !r.iter().any(Cell::is_missing)).cloned().collect();
        Self { rows, ..self.clone() }
    }

    /// Replaces missing numeric cells with `fill(column values)`. Fails if a
    /// non-numeric column has missing cells.
    pub fn fill_missing(&self, fill: impl Fn(&[f64]) -> Option<f64>) -> Result<Self, String> {
        let mut out = self.clone();
        for (c, name) in self.columns.iter().enumerate() {
            let missing = self.column_values(c).filter(|v| v.is_missing()).count();
            if missing == 0 {
                continue;
            }
            if self.types[c] != ColumnType::Number {
                return Err(format!("column `{name}` is not numeric; cannot fill its {missing} missing value(s)"));
            }
            let present: Vec<f64> = self.column_values(c).filter_map(Cell::as_f64).collect();
            let value = fill(&present).ok_or_else(|| format!("column `{name}` has no values to fill from"))?;
            for row in &mut out.rows {
                if row[c].is_missing() {
                    row[c] = Cell::Number(value);
                }
            }
        }
        Ok(out)
    }

    /// `{"type": "dataframe", "columns": [...], "rows": [[...]], "row_count": n}`.
    pub fn to_value(&self) -> Value {
        json!({
            "type": "dataframe",
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_value).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "row_count": self.rows.len(),
        })
    }

    pub fn from_value(value: &Value) -> Result<Self, String> {
        let map: &Map<String, Value> = value.as_object().ok_or("dataframe value must be an object")?;
        let columns: Vec<String> = map
            .get("columns")
            .and_then(Value::as_array)
            .ok_or("dataframe value needs `columns`")?
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or("column names must be strings"))
            .collect::<Result<_, _>>()?;
        let rows: Vec<Vec<Cell>> = map
            .get("rows")
            .and_then(Value::as_array)
            .ok_or("dataframe value needs `rows`")?
            .iter()
            .map(|r| {
                let cells = r.as_array().ok_or("each row must be a list")?;
                if cells.len() != columns.len() {
                    return Err(format!("row has {} cells, expected {}", cells.len(), columns.len()));
                }
                cells.iter().map(Cell::from_value).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, String>>()?;
        let types = (0..columns.len())
            .map(|c| {
                let present: Vec<&Cell> = rows.iter().map(|r| &r[c]).filter(|v| !v.is_missing()).collect();
                if !present.is_empty() && present.iter().all(|v| matches!(v, Cell::Number(_))) {
                    ColumnType::Number
                } else if !present.is_empty() && present.iter().all(|v| matches!(v, Cell::Boolean(_))) {
                    ColumnType::Boolean
                } else {
                    ColumnType::Text
                }
            })
            .collect();
        Ok(Self { columns, types, rows })
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 { (sorted[mid - 1] + sorted[mid]) / 2.0 } else { sorted[mid] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn frame(csv: &str) -> DataFrame {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(csv.as_bytes()).unwrap();
        DataFrame::read_csv(file.path()).unwrap()
    }

    #[test]
    fn infers_column_types() {
        let df = frame("a,b,c\n1,true,x\n2.5,false,\n,true,z\n");
        assert_eq!(df.column_type(0), ColumnType::Number);
        assert_eq!(df.column_type(1), ColumnType::Boolean);
        assert_eq!(df.column_type(2), ColumnType::Text);
        assert!(df.rows()[2][0].is_missing());
    }

    #[test]
    fn fills_numeric_columns_only() {
        let df = frame("a,b\n1,x\n,y\n3,z\n");
        let filled = df.fill_missing(median).unwrap();
        assert_eq!(filled.rows()[1][0], Cell::Number(2.0));
        assert!(frame("a,b\n1,\n2,y\n").fill_missing(mean).is_err());
    }

    #[test]
    fn value_round_trip() {
        let df = frame("a,b\n1,x\n1,x\n,y\n");
        assert_eq!(DataFrame::from_value(&df.to_value()).unwrap(), df);
        assert_eq!(df.drop_duplicates().row_count(), 2);
        assert_eq!(df.drop_incomplete().row_count(), 2);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
