use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::{save_pgm, ImageFrame};
use crate::protocol::validate_result;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixtures: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture file is not a JSON array of entries: {0}")]
    Parse(serde_json::Error),
    #[error("invalid fixtures:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// One canned perception result, keyed by kind and image digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub kind: String,
    pub digest: String,
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

/// Hex SHA-256 of canonical PGM bytes.
pub fn image_digest(canonical_pgm: &[u8]) -> String {
    hex::encode(Sha256::digest(canonical_pgm))
}

pub fn frame_digest(frame: &ImageFrame) -> String {
    image_digest(&save_pgm(frame))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureSet {
    entries: Vec<FixtureEntry>,
}

impl FixtureSet {
    pub fn new(entries: Vec<FixtureEntry>) -> Result<Self, FixtureError> {
        let problems = validate_entries(&entries);
        if problems.is_empty() {
            Ok(Self { entries })
        } else {
            Err(FixtureError::Invalid(problems))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        Self::new(serde_json::from_str(text).map_err(FixtureError::Parse)?)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("fixture entries serialize")
    }
}

/// Line-itemized problems: schema failures per entry and duplicate (kind, digest) pairs.
pub fn validate_entries(entries: &[FixtureEntry]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.digest.len() != 64 || !e.digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            problems.push(format!("entry {i}: digest must be 64 hex characters"));
        }
        if let Err(msg) = validate_result(&e.kind, &e.result) {
            problems.push(format!("entry {i} ({}): {msg}", e.kind));
        }
        if let Some(first) = seen.insert((e.kind.as_str(), e.digest.as_str()), i) {
            problems.push(format!(
                "entry {i} duplicates entry {first} (kind {}, digest {})",
                e.kind, e.digest
            ));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: &str = "aa00000000000000000000000000000000000000000000000000000000000000";

    fn entry(kind: &str, result: Value) -> FixtureEntry {
        FixtureEntry {
            kind: kind.into(),
            digest: D.into(),
            result,
            latency_ms: None,
        }
    }

    #[test]
    fn digest_of_known_bytes() {
        // SHA-256("abc")
        assert_eq!(
            image_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn valid_set_loads() {
        let set = FixtureSet::new(vec![entry("scene", serde_json::json!({"caption": "a cat"}))]).unwrap();
        let back = FixtureSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn duplicates_name_both_entries() {
        let e = entry("scene", serde_json::json!({"caption": "a cat"}));
        let problems = validate_entries(&[e.clone(), e]);
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("entry 1 duplicates entry 0"));
    }

    #[test]
    fn missing_field_is_named() {
        let problems = validate_entries(&[entry("scene", serde_json::json!({}))]);
        assert!(problems[0].contains("caption"), "{problems:?}");
    }
}
