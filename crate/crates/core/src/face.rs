//! Face registry: enrollment and nearest-neighbour identification over
//! 128-dimensional embeddings, persisted as JSON lines.
//!
//! Only embeddings are stored. The loader rejects any key outside the
//! documented record schema, so raw image data can never round-trip.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 128;
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum FaceError {
    #[error("embedding must have {EMBEDDING_DIM} components, got {0}")]
    WrongDimension(usize),
    #[error("embedding component {0} is not finite")]
    NonFinite(usize),
    #[error("registry line {line} is corrupt: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("registry storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FaceEmbedding(Vec<f64>);

impl FaceEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self, FaceError> {
        if values.len() != EMBEDDING_DIM {
            return Err(FaceError::WrongDimension(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FaceError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &FaceEmbedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for FaceEmbedding {
    type Error = FaceError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FaceEmbedding> for Vec<f64> {
    fn from(e: FaceEmbedding) -> Self {
        e.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceRecord {
    pub person_id: String,
    pub display_name: String,
    pub created_at: DateTime<Utc>,
    pub embeddings: Vec<FaceEmbedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    Known {
        person_id: String,
        display_name: String,
        distance: f64,
    },
    Unknown {
        nearest_distance: Option<f64>,
    },
}

/// In-memory registry, optionally backed by a JSON-lines file that is
/// rewritten atomically after every mutation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceRegistry {
    records: Vec<FaceRecord>,
    path: Option<PathBuf>,
}

impl FaceRegistry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the registry at `path`, starting empty if the file is missing.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, FaceError> {
        let path = path.into();
        let records = if path.exists() {
            Self::load(&path)?.records
        } else {
            Vec::new()
        };
        Ok(Self {
            records,
            path: Some(path),
        })
    }

    pub fn records(&self) -> &[FaceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn next_person_id(&self) -> String {
        let next = self
            .records
            .iter()
            .filter_map(|r| r.person_id.strip_prefix("person-")?.parse::<u64>().ok())
            .max()
            .map_or(1, |n| n + 1);
        format!("person-{next:06}")
    }

    /// Adds `embedding` under `name`, merging into an existing record with
    /// the same (case-insensitive) display name.
    pub fn enroll(&mut self, name: &str, embedding: FaceEmbedding) -> Result<String, FaceError> {
        let key = name.trim().to_lowercase();
        let id = match self
            .records
            .iter_mut()
            .find(|r| r.display_name.to_lowercase() == key)
        {
            Some(rec) => {
                rec.embeddings.push(embedding);
                rec.person_id.clone()
            }
            None => {
                let id = self.next_person_id();
                self.records.push(FaceRecord {
                    person_id: id.clone(),
                    display_name: name.trim().to_string(),
                    created_at: Utc::now(),
                    embeddings: vec![embedding],
                });
                id
            }
        };
        self.flush()?;
        Ok(id)
    }

    /// Removes every record whose display name matches (case-insensitive).
    pub fn remove(&mut self, name: &str) -> Result<usize, FaceError> {
        let key = name.trim().to_lowercase();
        let before = self.records.len();
        self.records.retain(|r| r.display_name.to_lowercase() != key);
        let removed = before - self.records.len();
        if removed > 0 {
            self.flush()?;
        }
        Ok(removed)
    }

    pub fn identify(&self, query: &FaceEmbedding, threshold: f64) -> MatchResult {
        let mut best: Option<(f64, &FaceRecord)> = None;
        for rec in &self.records {
            for e in &rec.embeddings {
                let d = query.distance(e);
                let better = match best {
                    None => true,
                    Some((bd, br)) => d < bd || (d == bd && rec.person_id < br.person_id),
                };
                if better {
                    best = Some((d, rec));
                }
            }
        }
        match best {
            Some((d, rec)) if d <= threshold => MatchResult::Known {
                person_id: rec.person_id.clone(),
                display_name: rec.display_name.clone(),
                distance: d,
            },
            other => MatchResult::Unknown {
                nearest_distance: other.map(|(d, _)| d),
            },
        }
    }

    fn flush(&self) -> Result<(), FaceError> {
        match &self.path {
            Some(p) => self.persist(p),
            None => Ok(()),
        }
    }

    /// Writes one record per line to a temporary sibling, then renames it over `path`.
    pub fn persist(&self, path: &Path) -> Result<(), FaceError> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        for rec in &self.records {
            let line = serde_json::to_string(rec).map_err(std::io::Error::other)?;
            writeln!(tmp, "{line}")?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Loads a registry file. Any malformed line fails the whole load.
    pub fn load(path: &Path) -> Result<Self, FaceError> {
        let text = fs::read_to_string(path)?;
        let mut records: Vec<FaceRecord> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| FaceError::CorruptLine {
                line: i + 1,
                reason,
            };
            let rec: FaceRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            if rec.embeddings.is_empty() {
                return Err(corrupt("record has no embeddings".into()));
            }
            if records.iter().any(|r| r.person_id == rec.person_id) {
                return Err(corrupt(format!("duplicate person_id {}", rec.person_id)));
            }
            records.push(rec);
        }
        Ok(Self {
            records,
            path: Some(path.to_path_buf()),
        })
    }
}
