//! Machine-readable diagnostics: one JSON object per line on stderr.

use std::path::Path;

use serde_json::json;

pub fn item_error(path: &Path, err: &anyhow::Error) {
    eprintln!("{}", json!({ "level": "error", "path": path.display().to_string(), "message": format!("{err:#}") }));
}

pub fn warning(message: &str) {
    eprintln!("{}", json!({ "level": "warning", "message": message }));
}

pub fn fatal(err: &anyhow::Error) {
    eprintln!("{}", json!({ "level": "fatal", "message": format!("{err:#}") }));
}
