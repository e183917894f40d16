//! Wires a registry, run store, executor and gate together from directories.

use std::path::PathBuf;
use std::sync::Arc;

use crate::executor::{AdapterSet, Executor, RunStore, StoreError};
use crate::gate::{Gate, GateConfig};
use crate::registry::{Registry, RegistryError};

#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    pub registry_dir: PathBuf,
    /// Defaults to `registry_dir`.
    pub run_dir: Option<PathBuf>,
    /// Create the registry if it does not exist.
    pub init: bool,
    pub gate: GateConfig,
}

impl RuntimeOptions {
    pub fn new(registry_dir: impl Into<PathBuf>) -> Self {
        Self { registry_dir: registry_dir.into(), run_dir: None, init: false, gate: GateConfig::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct Runtime {
    pub registry: Arc<Registry>,
    pub executor: Executor,
    pub gate: Arc<Gate>,
}

impl Runtime {
    pub fn open(options: &RuntimeOptions) -> Result<Self, RuntimeError> {
        let registry = if options.init {
            Registry::init(&options.registry_dir)?
        } else {
            Registry::open(&options.registry_dir)?
        };
        let registry = Arc::new(registry);
        let store = RunStore::open(options.run_dir.as_ref().unwrap_or(&options.registry_dir))?;
        let executor = Executor::builder(AdapterSet::builtin()).store(store).registry(registry.clone()).build();
        let gate = Arc::new(Gate::new(registry.clone(), executor.clone()).with_config(options.gate));
        Ok(Self { registry, executor, gate })
    }
}
