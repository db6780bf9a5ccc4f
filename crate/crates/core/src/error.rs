use thiserror::Error;

use crate::kernel::NodeId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("causality violation: event at {requested}s scheduled while clock is {now}s")]
    CausalityViolation { now: f64, requested: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid config key `{key}`: {constraint}")]
    Config { key: String, constraint: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("parameter path `{0}` does not resolve in the config")]
    UnresolvablePath(String),
    #[error("schema version mismatch: {0}")]
    SchemaMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        SimError::Config { key: key.into(), constraint: constraint.into() }
    }

    /// Short stable tag for machine-parsable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::CausalityViolation { .. } => "causality",
            SimError::UnknownNode(_) => "unknown-node",
            SimError::Config { .. } => "config",
            SimError::Parse(_) => "parse",
            SimError::UnresolvablePath(_) => "unresolvable-path",
            SimError::SchemaMismatch(_) => "schema-mismatch",
            SimError::Io(_) => "io",
            SimError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
