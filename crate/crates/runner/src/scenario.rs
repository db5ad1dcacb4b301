use std::fs;
use std::path::{Path, PathBuf};

use consensus_admm::mpc::{Scenario, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {cause}")]
    Validation {
        field: &'static str,
        cause: consensus_admm::Error,
    },
}

impl LoadError {
    /// Field named by a validation failure.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            LoadError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<ScenarioError> for LoadError {
    fn from(e: ScenarioError) -> Self {
        LoadError::Validation {
            field: e.field,
            cause: e.cause,
        }
    }
}

/// Parses and validates a scenario held in memory.
pub fn parse_scenario(text: &str) -> Result<Scenario, LoadError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn scenario_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    s.push('\n');
    s
}
