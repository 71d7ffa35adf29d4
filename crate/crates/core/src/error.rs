use thiserror::Error;

/// A configuration value outside its documented range.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {reason} (got {value})")]
pub struct ParamError {
    pub key: String,
    pub value: String,
    pub reason: &'static str,
}

impl ParamError {
    pub fn new(key: impl Into<String>, value: impl ToString, reason: &'static str) -> Self {
        Self {
            key: key.into(),
            value: value.to_string(),
            reason,
        }
    }

    /// Prefixes the key with a section name, `loss_db` → `channel.loss_db`.
    pub fn in_section(mut self, section: &str) -> Self {
        self.key = format!("{section}.{}", self.key);
        self
    }
}

pub(crate) fn require(cond: bool, key: &str, value: impl ToString, reason: &'static str) -> Result<(), ParamError> {
    if cond {
        Ok(())
    } else {
        Err(ParamError::new(key, value, reason))
    }
}
