//! JSON and JSON Lines helpers.

use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use ds_core::canonical::{to_canonical_bytes, to_canonical_value};
use ds_core::runtime::TranscriptRecord;

fn invalid(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

/// Sorted-key, indented JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(&to_canonical_value(value)).map_err(invalid)?;
    bytes.push(b'\n');
    fs::write(path, bytes)
}

/// Canonical single-line JSON with a trailing newline.
pub fn write_canonical<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = to_canonical_bytes(value);
    bytes.push(b'\n');
    fs::write(path, bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    serde_json::from_slice(&fs::read(path)?).map_err(invalid)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        out.extend(to_canonical_bytes(item));
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines().filter(|l| !l.is_empty()).map(|l| serde_json::from_str(l).map_err(invalid)).collect()
}

/// Transcript dump: one message per line, in delivery order.
pub fn transcript_jsonl(records: &[TranscriptRecord]) -> Vec<u8> {
    let messages: Vec<_> = records.iter().map(|r| &r.message).collect();
    to_jsonl(&messages)
}
