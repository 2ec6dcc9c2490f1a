use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nnflow_core::metrics::MetricsConfig;
use nnflow_core::scenes::DatasetConfig;
use nnflow_core::{FieldConfig, SamplerConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Settings used by `complete` beyond the sampler itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompleteConfig {
    /// Seed of the initial-cloud noise; the noise scale and `k` come from
    /// `[train]` so inference starts from the training distribution.
    pub seed: u64,
}

/// Everything a run needs. Loaded from TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Steps between checkpoint writes during training; 0 writes only the
    /// final one.
    pub checkpoint_every: u64,
    pub data: DatasetConfig,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub complete: CompleteConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("run"),
            checkpoint_every: 500,
            data: DatasetConfig::default(),
            field: FieldConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            complete: CompleteConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate().context("[data]")?;
        self.field.validate().context("[field]")?;
        self.train.validate().context("[train]")?;
        self.sampler.validate().context("[sampler]")?;
        self.metrics.validate().context("[metrics]")?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Defaults, then the file (if any), then `key=value` overrides in order.
    /// The result is validated.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(RunConfig::default())?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut value, toml::Value::Table(file));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig = value.try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to
/// a bare string, and stores it at the dotted path.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        bail!("override {assignment:?} is not of the form key=value");
    };
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        bail!("override {assignment:?} has an empty key");
    }
    if raw.is_empty() {
        bail!("override {key} has no value");
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .with_context(|| format!("override {key}: {} is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split always yields at least one part")
}
