//! Atomic file output and JSON override merging.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{CliError, CliResult};

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV with a header row and `\n` line endings.
pub fn csv_bytes<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads `source` as inline JSON (when it starts with `{`) or as a file path.
fn load_json(source: &str) -> CliResult<Value> {
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        fs::read_to_string(source).map_err(|e| CliError::Usage(format!("config {source}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {source}: {e}")))
}

/// `defaults` with the keys of the JSON document `source` replaced. Unknown
/// keys are rejected.
pub fn with_overrides<T: Serialize + DeserializeOwned>(defaults: T, source: Option<&str>) -> CliResult<T> {
    let Some(source) = source else {
        return Ok(defaults);
    };
    let mut base = serde_json::to_value(&defaults).expect("defaults serialize");
    merge(&mut base, load_json(source)?);
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {source}: {e}")))
}
