//! Registered CSV datasets under `<root>/datasets`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::RegistryError;
use crate::schema::canonical_json;
use crate::storage::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub dataset_id: Uuid,
    pub name: String,
    pub format: DatasetFormat,
    /// Header order.
    pub columns: Vec<String>,
    pub row_count: u64,
    pub uri: String,
}

pub(crate) struct DatasetStore {
    dir: PathBuf,
}

impl DatasetStore {
    pub(crate) fn new(root: &Path) -> Self {
        Self { dir: root.join("datasets") }
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join("index.json")
    }

    pub(crate) fn load(&self) -> Result<Vec<DatasetDescriptor>, RegistryError> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| RegistryError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| RegistryError::Corrupt(format!("{}: {e}", path.display())))
    }

    /// Copies `source` into the store. The caller holds the registry lock.
    pub(crate) fn add(&self, source: &Path, name: Option<&str>, id: Option<Uuid>, fresh: Uuid) -> Result<DatasetDescriptor, RegistryError> {
        let mut index = self.load()?;
        let dataset_id = id.unwrap_or(fresh);
        if index.iter().any(|d| d.dataset_id == dataset_id) {
            return Err(RegistryError::DuplicateDataset(dataset_id));
        }
        let (columns, row_count) = inspect_csv(source)?;
        let name = match name {
            Some(n) => n.to_string(),
            None => source.file_name().and_then(|n| n.to_str()).unwrap_or("dataset.csv").to_string(),
        };
        fs::create_dir_all(&self.dir).map_err(|e| RegistryError::io(&self.dir, e))?;
        let target = self.dir.join(format!("{dataset_id}.csv"));
        fs::copy(source, &target).map_err(|e| RegistryError::io(source, e))?;
        let descriptor = DatasetDescriptor {
            dataset_id,
            name,
            format: DatasetFormat::Csv,
            columns,
            row_count,
            uri: format!("datasets/{dataset_id}.csv"),
        };
        index.push(descriptor.clone());
        index.sort_by(|a, b| a.name.cmp(&b.name).then(a.dataset_id.cmp(&b.dataset_id)));
        let path = self.index_path();
        write_atomic(&path, &canonical_json(&index)).map_err(|e| RegistryError::io(&path, e))?;
        Ok(descriptor)
    }

    pub(crate) fn file(&self, descriptor: &DatasetDescriptor) -> PathBuf {
        self.dir.join(format!("{}.csv", descriptor.dataset_id))
    }
}

/// Header and data-row count of a CSV file; header names must be distinct.
pub fn inspect_csv(path: &Path) -> Result<(Vec<String>, u64), RegistryError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| RegistryError::Dataset(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| RegistryError::Dataset(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let distinct: BTreeSet<&String> = headers.iter().collect();
    if headers.is_empty() || distinct.len() != headers.len() {
        return Err(RegistryError::Dataset(format!("{}: header must list distinct column names", path.display())));
    }
    let mut rows = 0;
    for record in reader.records() {
        record.map_err(|e| RegistryError::Dataset(format!("{}: {e}", path.display())))?;
        rows += 1;
    }
    Ok((headers, rows))
}
