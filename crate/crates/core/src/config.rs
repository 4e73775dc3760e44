//! Single JSON run configuration with dot-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::BaselinesConfig;
use crate::dataset::{GeneratorConfig, SplitSpec};
use crate::error::{Error, Result};
use crate::nnet::{ArchitectureSpec, TrainConfig};
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Written by `synth` (into its parent directory), read by everything else.
    pub dataset_csv: PathBuf,
    pub output_dir: PathBuf,
    pub model: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset_csv: PathBuf::from("data/dataset.csv"),
            output_dir: PathBuf::from("run"),
            model: PathBuf::from("run/model.bcm"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub preprocess: PreprocessConfig,
    pub architecture: ArchitectureSpec,
    pub train: TrainConfig,
    pub baselines: BaselinesConfig,
    pub split: SplitSpec,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` if given (defaults otherwise), then applies `key=value`
    /// overrides. Values parse as JSON, falling back to a plain string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => "{}".to_string(),
        };
        let cfg: RunConfig = serde_json::from_str(&base)?;
        let mut value = serde_json::to_value(&cfg)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Writes the effective configuration as `config.json` in `dir`.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Cross-section consistency: the network must accept what the
    /// preprocessing produces.
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.architecture.validate()?;
        self.train.validate()?;
        if self.architecture.image_side != self.preprocess.image_side {
            return Err(Error::invalid(format!(
                "architecture.image_side {} differs from preprocess.image_side {}",
                self.architecture.image_side, self.preprocess.image_side
            )));
        }
        if self.architecture.structured_inputs != self.preprocess.structured_len() {
            return Err(Error::invalid(format!(
                "architecture.structured_inputs {} but preprocess produces {}",
                self.architecture.structured_inputs,
                self.preprocess.structured_len()
            )));
        }
        Ok(())
    }
}

pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override '{assignment}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("'{}' is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::invalid(format!("unknown config key '{key}'")));
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).unwrap();
    }
    Err(Error::invalid("empty override key"))
}
