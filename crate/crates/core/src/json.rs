//! Canonical JSON rendering shared by every persisted document.
//!
//! Object keys are emitted in sorted order regardless of how the value was
//! built, so two equal values always produce identical bytes.

use serde::Serialize;
use serde_json::{Map, Value};

/// Returns a copy of `value` whose objects were rebuilt with sorted keys.
pub fn sorted(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), sorted(&map[k]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

/// Pretty-printed, key-sorted JSON with a trailing newline.
pub fn to_canonical_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value is representable as JSON");
    let mut s = serde_json::to_string_pretty(&sorted(&v)).expect("JSON values always render");
    s.push('\n');
    s
}

/// Compact, key-sorted JSON.
pub fn to_canonical_compact<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value is representable as JSON");
    serde_json::to_string(&sorted(&v)).expect("JSON values always render")
}
