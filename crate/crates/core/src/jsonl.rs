//! Line-delimited JSON records. Blank lines are skipped; every error carries
//! the file name and 1-based line number.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&bytes, path)
}

/// Parses records from raw bytes; `origin` names the source in errors.
pub fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8], origin: &Path) -> Result<Vec<T>> {
    Ok(parse_numbered(bytes, origin)?.into_iter().map(|(_, r)| r).collect())
}

fn parse_numbered<T: DeserializeOwned>(bytes: &[u8], origin: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = idx + 1;
        let text = std::str::from_utf8(raw)
            .map_err(|e| Error::format(origin, line, format!("invalid UTF-8: {e}")))?
            .trim();
        if text.is_empty() {
            continue;
        }
        let record = serde_json::from_str(text).map_err(|e| Error::format(origin, line, e.to_string()))?;
        out.push((line, record));
    }
    Ok(out)
}

pub fn to_jsonl_string<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_jsonl_string(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Like [`read_jsonl`] but keeps each record's 1-based line number.
pub fn read_jsonl_numbered<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_numbered(&bytes, path)
}
