//! Flat JSON experiment configs. Flags always win over file values; file
//! values win over built-in defaults.

use std::path::Path;

use crate::error::CmdError;

pub struct FileConfig(Option<serde_json::Value>);

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CmdError> {
        let Some(path) = path else {
            return Ok(FileConfig(None));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CmdError::data(format!("{}: malformed config: {e}", path.display())))?;
        if !value.is_object() {
            return Err(CmdError::data(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        }
        Ok(FileConfig(Some(value)))
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.0.as_ref()?.get(key)?.as_f64()
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.0.as_ref()?.get(key)?.as_u64()
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.u64(key).map(|v| v as usize)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.0.as_ref()?.get(key)?.as_str()
    }
}
