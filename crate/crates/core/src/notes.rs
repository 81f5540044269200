//! Category note files: one append-only `{category}.txt` per category,
//! each line `RFC3339<TAB>id<TAB>text`.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, DurationRound, SecondsFormat, TimeDelta, Utc};
use thiserror::Error;

pub const DEFAULT_CATEGORIES: [&str; 3] = ["reminder", "note", "list"];

#[derive(Debug, Error)]
pub enum NoteError {
    #[error("unknown note category {0:?}")]
    UnknownCategory(String),
    #[error("note text is empty")]
    EmptyText,
    #[error("{file}:{line}: malformed note line")]
    CorruptLine { file: PathBuf, line: usize },
    #[error("note storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub id: String,
    pub category: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

/// Collapses line breaks and tabs so a note is one logical line.
pub fn sanitize(text: &str) -> String {
    text.split(['\n', '\r', '\t'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone)]
pub struct NoteStore {
    dir: PathBuf,
    categories: BTreeSet<String>,
}

impl NoteStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self::with_categories(dir, DEFAULT_CATEGORIES.iter().map(|s| s.to_string()))
    }

    pub fn with_categories(dir: impl Into<PathBuf>, cats: impl IntoIterator<Item = String>) -> Self {
        Self {
            dir: dir.into(),
            categories: cats.into_iter().collect(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(String::as_str)
    }

    fn path_for(&self, category: &str) -> Result<PathBuf, NoteError> {
        if !self.categories.contains(category) {
            return Err(NoteError::UnknownCategory(category.to_string()));
        }
        Ok(self.dir.join(format!("{category}.txt")))
    }

    pub fn record(&self, category: &str, text: &str) -> Result<Note, NoteError> {
        let path = self.path_for(category)?;
        let text = sanitize(text);
        if text.is_empty() {
            return Err(NoteError::EmptyText);
        }
        fs::create_dir_all(&self.dir)?;
        let note = Note {
            id: uuid::Uuid::new_v4().simple().to_string(),
            category: category.to_string(),
            text,
            created_at: Utc::now().duration_trunc(TimeDelta::microseconds(1)).expect("in range"),
        };
        let line = format!(
            "{}\t{}\t{}\n",
            note.created_at.to_rfc3339_opts(SecondsFormat::Micros, true),
            note.id,
            note.text
        );
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.lock()?;
        let written = file.write_all(line.as_bytes()).and_then(|_| file.flush());
        file.unlock()?;
        written?;
        Ok(note)
    }

    /// Notes of `category`, oldest first; equal timestamps keep file order.
    pub fn list(&self, category: &str) -> Result<Vec<Note>, NoteError> {
        let path = self.path_for(category)?;
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        file.lock_shared()?;
        let mut notes = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            notes.push(parse_line(&line, category).ok_or_else(|| NoteError::CorruptLine {
                file: path.clone(),
                line: i + 1,
            })?);
        }
        file.unlock()?;
        notes.sort_by_key(|n| n.created_at);
        Ok(notes)
    }

    /// Truncates the category file, returning how many notes it held.
    pub fn clear(&self, category: &str) -> Result<usize, NoteError> {
        let path = self.path_for(category)?;
        let file = match OpenOptions::new().read(true).write(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        file.lock()?;
        let count = BufReader::new(&file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.is_empty()))
            .count();
        let result = file.set_len(0);
        file.unlock()?;
        result?;
        Ok(count)
    }
}

fn parse_line(line: &str, category: &str) -> Option<Note> {
    let mut parts = line.split('\t');
    let (ts, id, text) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || id.is_empty() || text.is_empty() {
        return None;
    }
    Some(Note {
        id: id.to_string(),
        category: category.to_string(),
        text: text.to_string(),
        created_at: DateTime::parse_from_rfc3339(ts).ok()?.with_timezone(&Utc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_writes_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let store = NoteStore::new(dir.path());
        store.record("reminder", "buy milk").unwrap();
        let text = fs::read_to_string(dir.path().join("reminder.txt")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1);
        let fields: Vec<&str> = lines[0].split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert!(DateTime::parse_from_rfc3339(fields[0]).is_ok());
        assert_eq!(fields[2], "buy milk");
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = NoteStore::new(dir.path());
        assert!(matches!(
            store.record("groceries", "eggs"),
            Err(NoteError::UnknownCategory(_))
        ));
        assert!(matches!(store.record("note", " \n\t "), Err(NoteError::EmptyText)));
        assert!(matches!(store.list("groceries"), Err(NoteError::UnknownCategory(_))));
    }

    #[test]
    fn newlines_become_spaces() {
        let dir = tempfile::tempdir().unwrap();
        let store = NoteStore::new(dir.path());
        assert_eq!(store.record("note", "a\nb").unwrap().text, "a b");
    }

    #[test]
    fn list_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let store = NoteStore::new(dir.path());
        assert!(store.list("list").unwrap().is_empty());
        assert_eq!(store.clear("list").unwrap(), 0);
        let a = store.record("list", "A").unwrap();
        let b = store.record("list", "B").unwrap();
        assert_eq!(store.list("list").unwrap(), vec![a, b]);
        store.record("list", "C").unwrap();
        assert_eq!(store.clear("list").unwrap(), 3);
        assert!(store.list("list").unwrap().is_empty());
        assert_eq!(store.clear("list").unwrap(), 0);
    }

    #[test]
    fn list_sorts_shuffled_timestamps() {
        use rand::{seq::SliceRandom, SeedableRng};
        let dir = tempfile::tempdir().unwrap();
        let store = NoteStore::new(dir.path());
        let mut stamps: Vec<String> = (0..25)
            .map(|i| format!("2026-03-{:02}T08:{:02}:00.000000Z", 1 + i % 28, (i * 7) % 60))
            .collect();
        stamps.shuffle(&mut rand::rngs::StdRng::seed_from_u64(4));
        let body: String = stamps
            .iter()
            .enumerate()
            .map(|(i, ts)| format!("{ts}\tid{i}\ttext {ts}\n"))
            .collect();
        fs::write(dir.path().join("note.txt"), body).unwrap();
        // oracle: fixed-width RFC3339 strings sort lexicographically
        let mut oracle = stamps.clone();
        oracle.sort();
        let got: Vec<String> = store
            .list("note")
            .unwrap()
            .into_iter()
            .map(|n| n.text.trim_start_matches("text ").to_string())
            .collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn corrupt_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("note.txt"), "not a note\n").unwrap();
        let store = NoteStore::new(dir.path());
        assert!(matches!(store.list("note"), Err(NoteError::CorruptLine { line: 1, .. })));
    }
}
