use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::CliError;

/// Relative config paths that do not exist are looked up here as well.
pub const CONFIG_DIR_ENV: &str = "JOURNEY_CONFIG_DIR";

pub fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

/// Reads a TOML (`.toml`) or JSON (anything else) config. Keys missing from
/// the file take their defaults; unknown keys are rejected.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Option<PathBuf>), CliError> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let path = resolve(path);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.message().to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let value = parsed.map_err(|msg| CliError::Usage(format!("invalid config {}: {msg}", path.display())))?;
    Ok((value, Some(path)))
}
