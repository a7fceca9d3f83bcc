//! Effective run configuration. Files hold flat dotted keys such as
//! `"trainer.stage2.lambda"`; they are expanded, merged over the defaults
//! and then parsed strictly so that a misspelled key is an error.

use std::collections::BTreeMap;
use std::path::Path;

use recigraph::corpus::SynthConfig;
use recigraph::eval::ProtocolConfig;
use recigraph::trainer::{Stage1Config, Stage2Config};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Recipes written by `gen-data`.
    pub recipes: usize,
    /// Tokens per sentence, `[CLS]` included.
    pub max_len: usize,
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            recipes: 600,
            max_len: 32,
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub trainer: TrainerConfig,
    pub eval: ProtocolConfig,
}

fn flatten_into(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), value.clone());
        }
    }
}

/// Dotted-key view of a nested JSON object.
pub fn flatten(value: &Value) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    flatten_into("", value, &mut out);
    out
}

/// Writes `value` at the dotted `key` inside `root`, creating objects.
fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Validation(format!("config key `{key}` has an empty segment")));
        }
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("config key `{key}` descends into a non-object")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
    }
    Ok(())
}

impl RunConfig {
    /// Defaults overlaid with the flat key/value pairs of `overrides`.
    pub fn from_flat(overrides: &Map<String, Value>) -> Result<Self, CliError> {
        let mut root = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        for (key, value) in overrides {
            set_dotted(&mut root, key, value.clone())?;
        }
        serde_json::from_value(root).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let map = value
            .as_object()
            .ok_or_else(|| CliError::Validation(format!("{}: config must be a JSON object", path.display())))?;
        Self::from_flat(map)
    }

    /// Sets every seed of the run.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.trainer.stage1.seed = seed;
        self.trainer.stage2.seed = seed;
        self.eval.seed = seed;
    }

    pub fn flat(&self) -> BTreeMap<String, Value> {
        flatten(&serde_json::to_value(self).expect("config serializes"))
    }
}
