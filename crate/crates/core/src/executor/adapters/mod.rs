//! Tool adapters: the code behind each registered tool id.

mod alloy;
mod data;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde_json::{Map, Value};

use crate::registry::Registry;
use crate::schema::Version;

pub use alloy::{AlloyInverseDesigner, PropertyPredictor};
pub use data::{DataAnalyzer, DataCleaner, DataLoader};

pub type ValueMap = Map<String, Value>;

/// Per-run services available to adapters.
pub struct AdapterContext {
    pub seed: u64,
    /// Resolves dataset UUIDs and names to files.
    pub registry: Option<Arc<Registry>>,
    /// Relative dataset paths resolve against this directory.
    pub base_dir: PathBuf,
    /// Run-scoped objects handed between steps by reference (trained
    /// models, for instance), keyed by the id one step outputs and a later
    /// step receives.
    pub artifacts: Mutex<HashMap<String, Value>>,
}

impl AdapterContext {
    pub fn new(seed: u64, registry: Option<Arc<Registry>>) -> Self {
        Self {
            seed,
            registry,
            base_dir: std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")),
            artifacts: Mutex::new(HashMap::new()),
        }
    }
}

pub trait ToolAdapter: Send + Sync {
    fn tool_id(&self) -> &str;

    fn version(&self) -> Version;

    /// Runs the tool. `parameters` holds every tool parameter after step
    /// bindings, workflow values and defaults are applied; `inputs` holds the
    /// values arriving along data flows.
    fn run(&self, ctx: &AdapterContext, inputs: &ValueMap, parameters: &ValueMap) -> Result<ValueMap, String>;
}

/// Adapters keyed by tool id.
#[derive(Clone, Default)]
pub struct AdapterSet {
    adapters: BTreeMap<String, Arc<dyn ToolAdapter>>,
}

impl AdapterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// data_loader, data_cleaner, data_analyzer, materials_property_predictor
    /// and alloy_inverse_designer.
    pub fn builtin() -> Self {
        let mut set = Self::new();
        set.register(Arc::new(DataLoader));
        set.register(Arc::new(DataCleaner));
        set.register(Arc::new(DataAnalyzer));
        set.register(Arc::new(PropertyPredictor));
        set.register(Arc::new(AlloyInverseDesigner));
        set
    }

    pub fn register(&mut self, adapter: Arc<dyn ToolAdapter>) {
        self.adapters.insert(adapter.tool_id().to_string(), adapter);
    }

    pub fn get(&self, tool_id: &str) -> Option<Arc<dyn ToolAdapter>> {
        self.adapters.get(tool_id).cloned()
    }

    pub fn versions(&self) -> BTreeMap<String, Version> {
        self.adapters.iter().map(|(k, a)| (k.clone(), a.version())).collect()
    }
}

pub(crate) fn param_str<'a>(params: &'a ValueMap, name: &str) -> Result<&'a str, String> {
    params.get(name).and_then(Value::as_str).ok_or_else(|| format!("parameter `{name}` must be a string"))
}

pub(crate) fn string_list(value: Option<&Value>, name: &str) -> Result<Vec<String>, String> {
    value
        .and_then(Value::as_array)
        .ok_or_else(|| format!("`{name}` must be a list of strings"))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("`{name}` must be a list of strings")))
        .collect()
}
