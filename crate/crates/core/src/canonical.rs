//! Canonical JSON: object keys sorted lexicographically at every depth, no
//! insignificant whitespace, UTF-8, one trailing LF.

use serde::Serialize;
use serde_json::{Map, Value};

/// Recursively rebuilds `v` with sorted object keys. Sorting is explicit so
/// the result does not depend on how `serde_json::Map` is configured.
pub fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sort_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = sort_keys(serde_json::to_value(value)?);
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn to_canonical_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    to_canonical_string(value).map(String::into_bytes)
}
