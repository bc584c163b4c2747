//! Line-delimited JSON records. Keys appear in struct declaration order, so
//! the encoding of a value is fixed.

use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record types serialize infallibly")
}

pub fn to_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_line(item));
        out.push('\n');
    }
    out
}

/// Parses one record per non-empty line; errors carry the 1-based line number.
pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}
