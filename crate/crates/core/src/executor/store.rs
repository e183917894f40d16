//! Run store: `<root>/runs/<run_id>.json` plus `<root>/runs/index.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use uuid::Uuid;

use super::record::{RunFilter, RunRecord, RunStatus, RunSummary};
use crate::schema::canonical_json;
use crate::storage::{write_atomic, DirLock};

/// Directory holding the run store when no path is given explicitly.
pub const RUN_DIR_ENV: &str = "SCHEMAGATE_RUN_DIR";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a run record: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Persists run records. A store without a directory keeps records in
/// memory only.
#[derive(Debug)]
pub struct RunStore {
    dir: Option<PathBuf>,
    records: Mutex<BTreeMap<Uuid, RunRecord>>,
}

impl RunStore {
    pub fn ephemeral() -> Self {
        Self { dir: None, records: Mutex::new(BTreeMap::new()) }
    }

    /// Opens (creating if needed) the store under `root`. Records left
    /// `running` by a process that died are marked aborted.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = root.as_ref().join("runs");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let store = Self { dir: Some(dir), records: Mutex::new(BTreeMap::new()) };
        store.reload()?;
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Re-reads every record file, picking up runs written by other processes.
    pub fn reload(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut loaded = BTreeMap::new();
        for entry in fs::read_dir(dir).map_err(io(dir))? {
            let path = entry.map_err(io(dir))?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let Ok(id) = Uuid::parse_str(stem) else {
                continue;
            };
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io(&path))?;
            let record: RunRecord = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
            loaded.insert(id, record);
        }
        let mut records = self.records.lock().unwrap();
        for (id, record) in loaded {
            // records this process is still writing win over the disk copy
            let live = records.get(&id).is_some_and(|r| r.status == RunStatus::Running);
            if !live {
                records.insert(id, record);
            }
        }
        Ok(())
    }

    /// Marks records left `running` on disk as aborted. Call once, before any
    /// run of this process starts.
    pub fn recover(&self, now: chrono::DateTime<chrono::Utc>) -> Result<Vec<Uuid>, StoreError> {
        let stale: Vec<RunRecord> = self
            .records
            .lock()
            .unwrap()
            .values()
            .filter(|r| r.status == RunStatus::Running)
            .cloned()
            .collect();
        let mut ids = Vec::new();
        for mut record in stale {
            record.status = RunStatus::Aborted;
            record.finished_at = Some(now);
            ids.push(record.run_id);
            self.save(&record)?;
        }
        Ok(ids)
    }

    pub fn save(&self, record: &RunRecord) -> Result<(), StoreError> {
        self.records.lock().unwrap().insert(record.run_id, record.clone());
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(format!("{}.json", record.run_id));
        write_atomic(&path, &canonical_json(record)).map_err(io(&path))?;

        let _lock = DirLock::acquire(dir).map_err(io(dir))?;
        let index_path = dir.join("index.json");
        let mut index: BTreeMap<Uuid, RunSummary> = match fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str::<Vec<RunSummary>>(&text)
                .map(|v| v.into_iter().map(|s| (s.run_id, s)).collect())
                .unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        index.insert(record.run_id, record.summary());
        let mut list: Vec<RunSummary> = index.into_values().collect();
        sort_summaries(&mut list);
        write_atomic(&index_path, &canonical_json(&list)).map_err(io(&index_path))
    }

    /// One line per unreadable index or record file; empty means intact.
    pub fn integrity_scan(&self) -> Vec<String> {
        let Some(dir) = &self.dir else {
            return Vec::new();
        };
        let mut problems = Vec::new();
        let index_path = dir.join("index.json");
        if let Ok(text) = fs::read_to_string(&index_path) {
            if let Err(e) = serde_json::from_str::<Vec<RunSummary>>(&text) {
                problems.push(format!("{}: {e}", index_path.display()));
            }
        }
        let entries = match fs::read_dir(dir) {
            Ok(entries) => entries,
            Err(e) => return vec![format!("{}: {e}", dir.display())],
        };
        for path in entries.filter_map(|e| e.ok().map(|e| e.path())) {
            let is_record = path.extension().is_some_and(|x| x == "json")
                && path.file_stem().and_then(|s| s.to_str()).is_some_and(|s| Uuid::parse_str(s).is_ok());
            if !is_record {
                continue;
            }
            let parsed = fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str::<RunRecord>(&t).map_err(|e| e.to_string()));
            if let Err(e) = parsed {
                problems.push(format!("{}: {e}", path.display()));
            }
        }
        problems.sort();
        problems
    }

    pub fn get(&self, run_id: Uuid) -> Option<RunRecord> {
        if let Some(r) = self.records.lock().unwrap().get(&run_id) {
            return Some(r.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{run_id}.json"));
        let record: RunRecord = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
        self.records.lock().unwrap().insert(run_id, record.clone());
        Some(record)
    }

    pub fn ids(&self) -> Vec<Uuid> {
        self.records.lock().unwrap().keys().copied().collect()
    }

    /// Summaries matching `filter`, most recently started first.
    pub fn query(&self, filter: &RunFilter) -> Vec<RunSummary> {
        let _ = self.reload();
        let mut list: Vec<RunSummary> =
            self.records.lock().unwrap().values().map(RunRecord::summary).filter(|s| filter.matches(s)).collect();
        sort_summaries(&mut list);
        list
    }
}

fn sort_summaries(list: &mut [RunSummary]) {
    list.sort_by(|a, b| b.started_at.cmp(&a.started_at).then(a.run_id.cmp(&b.run_id)));
}
