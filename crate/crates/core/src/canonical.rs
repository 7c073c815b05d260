//! Canonical JSON: keys sorted within every object, two-space indentation,
//! UTF-8, LF line endings and a single trailing LF. Serializing the same
//! value twice always yields the same bytes.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut sorted = Map::new();
            for (k, v) in entries {
                sorted.insert(k, sort_keys(v));
            }
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Value> {
    Ok(sort_keys(serde_json::to_value(value)?))
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut text = serde_json::to_string_pretty(&to_canonical_value(value)?)?;
    text.push('\n');
    Ok(text)
}

/// Lowercase hex SHA-256 of the canonical form.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let text = to_canonical_string(value)?;
    Ok(hex_sha256(text.as_bytes()))
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
