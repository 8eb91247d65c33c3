//! Key file: `{"k1": "<16 hex>", "k2": "...", "k3": "..."}`, lowercase and
//! zero-padded.

use blockvit_core::KeySet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("invalid key file JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field} must be 16 lowercase hex digits, got {value:?}")]
    BadHex { field: &'static str, value: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    k1: String,
    k2: String,
    k3: String,
}

pub fn to_hex(k: u64) -> String {
    format!("{k:016x}")
}

pub fn from_hex(field: &'static str, s: &str) -> Result<u64, KeyFileError> {
    let ok = s.len() == 16 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    let bad = || KeyFileError::BadHex {
        field,
        value: s.to_string(),
    };
    if !ok {
        return Err(bad());
    }
    u64::from_str_radix(s, 16).map_err(|_| bad())
}

pub fn keys_to_json(keys: &KeySet) -> String {
    let f = KeyFile {
        k1: to_hex(keys.k1),
        k2: to_hex(keys.k2),
        k3: to_hex(keys.k3),
    };
    serde_json::to_string_pretty(&f).expect("plain strings always serialize")
}

pub fn keys_from_json(text: &str) -> Result<KeySet, KeyFileError> {
    let f: KeyFile = serde_json::from_str(text)?;
    Ok(KeySet::new(
        from_hex("k1", &f.k1)?,
        from_hex("k2", &f.k2)?,
        from_hex("k3", &f.k3)?,
    ))
}
