use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mshc_core::oracle::OracleKind;
use mshc_core::SearchConfig;
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command; written before any result file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub timestamp: String,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SearchConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleKind>,
    pub dataset: serde_json::Value,
    pub parameters: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, out: &Path) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            out: out.to_path_buf(),
            config: None,
            oracle: None,
            dataset: serde_json::Value::Null,
            parameters: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Writes `value` as pretty JSON with a `manifest` field pointing at the run manifest.
pub fn write_with_manifest_ref(path: &Path, value: serde_json::Value, manifest: &str) -> anyhow::Result<()> {
    let mut value = value;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("manifest".into(), serde_json::Value::String(manifest.into()));
    }
    let text = serde_json::to_string_pretty(&value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
