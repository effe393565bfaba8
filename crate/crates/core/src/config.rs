//! Run configuration: every tunable of the pipeline, loadable from TOML and
//! overridable by dotted `key=value` assignments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::PredictorKind;
use crate::domain::{LabelerConfig, XmtConfig};
use crate::eval::{EvalError, EvalSettings, SplitSpec};
use crate::ingest::{FilterRules, IngestError, SyntheticConfig};
use crate::scalar::Scalar;
use crate::tars::TarsConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default, deny_unknown_fields)]
pub struct RunConfig<S: Scalar> {
    pub method: PredictorKind,
    /// Build evaluation profiles from the training segment only.
    pub train_only_profile: bool,
    pub xmt: XmtConfig<S>,
    pub tars: TarsConfig,
    pub labeler: LabelerConfig,
    pub split: SplitSpec,
    pub filter: FilterRules,
    pub synthetic: SyntheticConfig,
}

impl<S: Scalar> Default for RunConfig<S> {
    fn default() -> Self {
        RunConfig {
            method: PredictorKind::Xmt,
            train_only_profile: false,
            xmt: XmtConfig::default(),
            tars: TarsConfig::default(),
            labeler: LabelerConfig::default(),
            split: SplitSpec::default(),
            filter: FilterRules::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl<S: Scalar> RunConfig<S> {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Apply `section.field=value` assignments in order. Values are TOML
    /// literals; anything that does not parse as one is taken as a string.
    pub fn with_overrides<I, T>(self, assignments: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut tree = toml::Table::try_from(&self)?;
        for a in assignments {
            let a = a.as_ref();
            let (key, raw) = a
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(a.to_string()))?;
            let key = key.trim();
            let value = parse_value(raw.trim());
            set_path(&mut tree, key, value).map_err(|message| ConfigError::Override {
                key: key.to_string(),
                message,
            })?;
        }
        toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Override {
                key: "<config>".to_string(),
                message: e.to_string(),
            })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.eval_settings().validate()?;
        self.synthetic.validate()?;
        Ok(())
    }

    pub fn eval_settings(&self) -> EvalSettings<S> {
        EvalSettings {
            xmt: self.xmt.clone(),
            tars: self.tars,
            labeler: self.labeler,
            split: self.split,
            train_only_profile: self.train_only_profile,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(tree: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|p| !p.is_empty()).ok_or("empty key")?;
    let mut node = tree;
    for p in parts {
        node = match node.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(format!("no section `{p}`")),
        };
    }
    // Optional fields are absent from the serialized tree until set.
    node.insert(leaf.to_string(), value);
    Ok(())
}
