//! Digest-checked JSONL shard files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::jsonl::{from_jsonl, to_jsonl};

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard {file}: digest mismatch (manifest {expected}, file {actual})")]
    Digest {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("shard {file}: manifest lists {expected} records, file has {actual}")]
    Count {
        file: String,
        expected: usize,
        actual: usize,
    },
    #[error("shard {file} line {line}: {source}")]
    Decode {
        file: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("shard {file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
}

/// Manifest entry for one shard file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

/// Writes `records` to `dir/file` and returns its manifest entry.
pub fn write_shard<T: Serialize>(dir: &Path, file: &str, records: &[T]) -> Result<ShardEntry, ShardError> {
    let text = to_jsonl(records);
    let io = |source| ShardError::Io {
        file: file.to_string(),
        source,
    };
    if let Some(parent) = dir.join(file).parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(dir.join(file), text.as_bytes()).map_err(io)?;
    Ok(ShardEntry {
        file: file.to_string(),
        records: records.len(),
        sha256: sha256_hex(text.as_bytes()),
    })
}

/// Verifies the digest of `dir/entry.file` without decoding it.
pub fn verify_shard(dir: &Path, entry: &ShardEntry) -> Result<Vec<u8>, ShardError> {
    let bytes = std::fs::read(dir.join(&entry.file)).map_err(|source| ShardError::Io {
        file: entry.file.clone(),
        source,
    })?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(ShardError::Digest {
            file: entry.file.clone(),
            expected: entry.sha256.clone(),
            actual,
        });
    }
    Ok(bytes)
}

pub fn read_shard<T: DeserializeOwned>(dir: &Path, entry: &ShardEntry) -> Result<Vec<T>, ShardError> {
    let bytes = verify_shard(dir, entry)?;
    let text = String::from_utf8_lossy(&bytes);
    let records: Vec<T> = from_jsonl(&text).map_err(|(line, source)| ShardError::Decode {
        file: entry.file.clone(),
        line,
        source,
    })?;
    if records.len() != entry.records {
        return Err(ShardError::Count {
            file: entry.file.clone(),
            expected: entry.records,
            actual: records.len(),
        });
    }
    Ok(records)
}
