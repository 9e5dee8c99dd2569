use std::path::Path;

use anyhow::Context as _;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What produced an output file.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub params: Value,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig, params: Value) -> Self {
        Provenance {
            tool: "corrsync".into(),
            version: VERSION.into(),
            command: command.into(),
            seed: config.seed,
            config: config.clone(),
            params,
        }
    }

    /// Header lines, without the leading `#`.
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("corrsync {}", self.version),
            format!("command: {}", self.command),
            format!("seed: {}", self.seed),
            format!("config: {}", serde_json::to_string(&self.config).unwrap_or_default()),
            format!("params: {}", self.params),
        ]
    }

    pub fn value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Writes `body` below `#`-prefixed provenance lines and `extra` lines.
pub fn write_text(path: &Path, prov: &Provenance, extra: &[String], body: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut text = String::new();
    for line in prov.lines().iter().chain(extra) {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(body);
    corrsync_core::collection::io::write_atomic(path, &text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Writes `{"provenance": ..., <fields of body>}` as pretty JSON.
pub fn write_json(path: &Path, prov: &Provenance, body: impl Serialize) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut doc = json!({ "provenance": prov.value() });
    if let (Value::Object(out), Value::Object(fields)) = (&mut doc, serde_json::to_value(body)?) {
        out.extend(fields);
    }
    corrsync_core::collection::io::write_atomic(path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
