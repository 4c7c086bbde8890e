//! Report file plumbing: atomic writes and stable JSON rendering.
//!
//! Summaries are JSON with keys in sorted order and CSV detail files, all
//! written through a temp-file-and-rename so a crash or a concurrent
//! reader never sees a half-written report.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::Value;

/// Writes `bytes` to `path` via a sibling temp file and a rename. Parent
/// directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Pretty JSON with a trailing newline. `serde_json` maps iterate in key
/// order, so the byte stream is a pure function of the value.
pub fn to_json_bytes(value: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON value serializes");
    bytes.push(b'\n');
    bytes
}
