//! Plain `key = value` configuration files.
//!
//! ```text
//! # chat endpoint used by default
//! endpoint = sea-e
//! endpoint.sea-e.base_url = http://localhost:8000
//! endpoint.sea-e.model = sea-e-7b
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sea_core::llm_gateway::EndpointProfile;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`", i + 1));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        ConfigFile::parse(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::input(format!("config `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Endpoint profile from `endpoint.<name>.*` keys. `base_url` and
    /// `model` are required.
    pub fn endpoint(&self, name: &str) -> Result<EndpointProfile, CliError> {
        let key = |field: &str| format!("endpoint.{name}.{field}");
        let required = |field: &str| {
            self.get(&key(field))
                .ok_or_else(|| CliError::input(format!("endpoint `{name}` needs `{}` in the config file", key(field))))
        };
        let mut profile = EndpointProfile::new(name, required("base_url")?, required("model")?);
        if let Some(v) = self.parsed(&key("max_in_flight"))? {
            profile.max_in_flight = v;
        }
        if let Some(v) = self.parsed(&key("retry_limit"))? {
            profile.retry_limit = v;
        }
        if let Some(v) = self.parsed(&key("timeout"))? {
            profile.timeout_secs = v;
        }
        profile.max_input_tokens = self.parsed(&key("max_input_tokens"))?;
        Ok(profile)
    }
}
