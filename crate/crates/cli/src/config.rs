//! Effective-configuration echo and `--config` replay.
//!
//! Every run writes `run_config.json` holding the fully resolved settings.
//! Passing that file back with `--config` reproduces the run; flags given
//! on the command line override values from the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, CliResult};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub subcommand: String,
    pub settings: Value,
}

impl RunConfig {
    pub fn new<T: Serialize>(subcommand: &str, settings: &T) -> Self {
        RunConfig {
            version: filtra_core::FORMAT_VERSION.to_string(),
            subcommand: subcommand.to_string(),
            settings: serde_json::to_value(settings).expect("settings serialize"),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data {
            error: e.into(),
            file: Some(path.to_path_buf()),
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Data {
            error: e.into(),
            file: Some(path.to_path_buf()),
        })?;
        filtra_core::artifact::check_version(&cfg.version).map_err(|error| CliError::Data {
            error,
            file: Some(path.to_path_buf()),
        })?;
        Ok(cfg)
    }
}

/// Overlays the non-null fields of `cli` onto the settings of `file` (if
/// any) and deserializes the result.
pub fn merge<T: Serialize + DeserializeOwned>(subcommand: &str, cli: &T, file: Option<&Path>) -> CliResult<T> {
    let Some(path) = file else { return Ok(cli_clone(cli)) };
    let cfg = RunConfig::load(path)?;
    if cfg.subcommand != subcommand {
        return Err(CliError::Usage(format!(
            "{} holds a '{}' configuration, not '{subcommand}'",
            path.display(),
            cfg.subcommand
        )));
    }
    let mut base = match cfg.settings {
        Value::Object(m) => m,
        _ => return Err(CliError::Usage(format!("{}: settings must be an object", path.display()))),
    };
    if let Value::Object(over) = serde_json::to_value(cli).expect("arguments serialize") {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn cli_clone<T: Serialize + DeserializeOwned>(v: &T) -> T {
    serde_json::from_value(serde_json::to_value(v).expect("arguments serialize")).expect("arguments round-trip")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct A {
        x: Option<u32>,
        y: Option<String>,
    }

    #[test]
    fn flags_override_file() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.json");
        let cfg = RunConfig::new("fit", &A { x: Some(1), y: Some("file".into()) });
        std::fs::write(&p, serde_json::to_string(&cfg).unwrap()).unwrap();
        let got: A = merge("fit", &A { x: None, y: Some("flag".into()) }, Some(&p)).unwrap();
        assert_eq!(got, A { x: Some(1), y: Some("flag".into()) });
        assert!(matches!(merge("path", &A { x: None, y: None }, Some(&p)), Err(CliError::Usage(_))));
    }
}
