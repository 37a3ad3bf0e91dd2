use serde::Serialize;
use serde_json::{json, Value};

/// Failure reported to the user as `{code, message, context}` on stderr.
#[derive(Debug, thiserror::Error, Serialize)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub context: Value,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            context: json!({}),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        if let Value::Object(map) = &mut self.context {
            map.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<lbi_core::Error> for CliError {
    fn from(e: lbi_core::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        lbi_core::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        lbi_core::Error::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
