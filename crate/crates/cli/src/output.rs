use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};
use crate::error::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Result of a command before it is rendered to a file.
#[derive(Debug, Clone, Default)]
pub struct Artifact {
    /// Command-specific `key=value` metadata.
    pub meta: Vec<(&'static str, Value)>,
    /// CSV body including its header row.
    pub csv: Vec<u8>,
    pub data: Value,
}

fn header_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders the artifact with the reproducibility header: `# key=value`
/// comment lines for CSV, a `meta` object for JSON.
pub fn render(cfg: &RunConfig, artifact: &Artifact) -> Result<Vec<u8>, Failure> {
    let checksum = stork::coefficients::table_checksum()?;
    let mut meta: Vec<(&str, Value)> = vec![
        ("version", VERSION.into()),
        ("config_hash", cfg.hash().into()),
        ("table_checksum", checksum.into()),
    ];
    meta.extend(artifact.meta.iter().cloned());
    match cfg.output.format {
        Format::Csv => {
            let mut out = Vec::new();
            for (k, v) in &meta {
                writeln!(out, "# {k}={}", header_value(v))?;
            }
            writeln!(out, "# config={}", cfg.canonical_json())?;
            out.extend_from_slice(&artifact.csv);
            Ok(out)
        }
        Format::Json => {
            let meta: Map<String, Value> = meta.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let mut doc = Map::new();
            doc.insert("meta".into(), Value::Object(meta));
            doc.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
            doc.insert("data".into(), artifact.data.clone());
            let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).expect("value serializes");
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Failure::io(format!("temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| Failure::io(format!("renaming into {}: {}", path.display(), e.error)))?;
    Ok(())
}
