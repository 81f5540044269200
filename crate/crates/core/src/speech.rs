//! Speech boundary: scripted or console transcripts in, text lines out.
//!
//! Real recognizers and synthesizers plug in behind these types; the
//! shipped implementations are deterministic stand-ins.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::router::{normalize, Utterance};

/// Confidence reported for scripted utterances (nominal recognizer accuracy).
pub const SCRIPTED_CONFIDENCE: f64 = 0.95;
pub const SPEAKER_PREFIX: &str = "AIRIS: ";

#[derive(Debug, Error)]
pub enum SpeechError {
    #[error("speech I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("cannot speak an empty line")]
    EmptyText,
}

pub enum TranscriptSource {
    Scripted { lines: Vec<String>, cursor: usize },
    Interactive(Box<dyn BufRead + Send>),
}

impl TranscriptSource {
    pub fn scripted<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::Scripted {
            lines: lines.into_iter().map(Into::into).collect(),
            cursor: 0,
        }
    }

    pub fn stdin() -> Self {
        Self::Interactive(Box::new(std::io::BufReader::new(std::io::stdin())))
    }

    /// Next non-blank utterance, or `None` once the source is exhausted.
    pub fn next_utterance(&mut self) -> Result<Option<Utterance>, SpeechError> {
        match self {
            Self::Scripted { lines, cursor } => {
                while *cursor < lines.len() {
                    let line = &lines[*cursor];
                    *cursor += 1;
                    if let Some(u) = Utterance::new(line.trim(), Some(SCRIPTED_CONFIDENCE)) {
                        return Ok(Some(u));
                    }
                }
                Ok(None)
            }
            Self::Interactive(reader) => loop {
                let mut line = String::new();
                if reader.read_line(&mut line)? == 0 {
                    return Ok(None);
                }
                if let Some(u) = Utterance::new(line.trim(), None) {
                    return Ok(Some(u));
                }
            },
        }
    }
}

/// Text-to-speech stand-in: console lines plus an optional transcript log
/// with `RFC3339<TAB>(USER|AIRIS)<TAB>text` lines.
pub struct SpokenOutput {
    console: Option<Box<dyn Write + Send>>,
    log: Option<File>,
    lines: Vec<String>,
}

impl SpokenOutput {
    pub fn new(console: Option<Box<dyn Write + Send>>, log_path: Option<&Path>) -> Result<Self, SpeechError> {
        let log = match log_path {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        Ok(Self {
            console,
            log,
            lines: Vec::new(),
        })
    }

    /// Collects lines in memory only.
    pub fn silent() -> Self {
        Self {
            console: None,
            log: None,
            lines: Vec::new(),
        }
    }

    pub fn stdout() -> Self {
        Self {
            console: Some(Box::new(std::io::stdout())),
            log: None,
            lines: Vec::new(),
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    fn log_line(&mut self, who: &str, text: &str) -> Result<(), SpeechError> {
        if let Some(log) = &mut self.log {
            let ts = Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true);
            writeln!(log, "{ts}\t{who}\t{text}")?;
            log.flush()?;
        }
        Ok(())
    }

    pub fn speak(&mut self, text: &str) -> Result<(), SpeechError> {
        if text.trim().is_empty() {
            return Err(SpeechError::EmptyText);
        }
        if let Some(c) = &mut self.console {
            writeln!(c, "{SPEAKER_PREFIX}{text}")?;
            c.flush()?;
        }
        self.log_line("AIRIS", text)?;
        self.lines.push(text.to_string());
        Ok(())
    }

    /// Records what the user said in the transcript log.
    pub fn heard(&mut self, text: &str) -> Result<(), SpeechError> {
        self.log_line("USER", text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub substitution_rate: f64,
    pub seed: u64,
    pub lexicon: HashMap<String, String>,
}

/// Word-substitution noise. Each token draws once from a seeded generator;
/// unprotected tokens drawing below the rate are replaced by their lexicon
/// entry (or kept when the lexicon has none).
pub fn inject_noise(text: &str, noise: &NoiseConfig, protected: &BTreeSet<String>) -> String {
    let rate = noise.substitution_rate.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    normalize(text)
        .into_iter()
        .map(|tok| {
            let draw: f64 = rng.random();
            if draw < rate && !protected.contains(&tok) {
                noise.lexicon.get(&tok).cloned().unwrap_or(tok)
            } else {
                tok
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_source() {
        let mut src = TranscriptSource::scripted(["hello"]);
        let u = src.next_utterance().unwrap().unwrap();
        assert_eq!(u.text, "hello");
        assert_eq!(u.confidence, Some(0.95));
        assert!(src.next_utterance().unwrap().is_none());
        let mut empty = TranscriptSource::scripted(Vec::<String>::new());
        assert!(empty.next_utterance().unwrap().is_none());
    }

    #[test]
    fn interactive_source_skips_blank_lines() {
        let input = "\n  \nread this\n";
        let mut src = TranscriptSource::Interactive(Box::new(std::io::Cursor::new(input)));
        assert_eq!(src.next_utterance().unwrap().unwrap().text, "read this");
        assert!(src.next_utterance().unwrap().is_none());
    }

    #[test]
    fn speak_logs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("transcript.log");
        let mut out = SpokenOutput::new(None, Some(&log)).unwrap();
        out.heard("iris").unwrap();
        out.speak("Hello").unwrap();
        out.speak("Goodbye.").unwrap();
        assert!(matches!(out.speak("  "), Err(SpeechError::EmptyText)));
        let text = std::fs::read_to_string(&log).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].ends_with("\tUSER\tiris"));
        assert!(lines[1].ends_with("Hello"));
        assert!(lines[2].ends_with("\tAIRIS\tGoodbye."));
        assert_eq!(out.lines(), ["Hello", "Goodbye."]);
    }

    fn lexicon() -> HashMap<String, String> {
        [("please", "peas"), ("the", "a"), ("now", "new")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn noise_rules() {
        let none = BTreeSet::new();
        let mut cfg = NoiseConfig {
            substitution_rate: 0.0,
            seed: 7,
            lexicon: lexicon(),
        };
        assert_eq!(inject_noise("please the now", &cfg, &none), "please the now");
        cfg.substitution_rate = 1.0;
        assert_eq!(inject_noise("please the now", &cfg, &none), "peas a new");
        let protected: BTreeSet<String> = ["the".to_string()].into();
        assert_eq!(inject_noise("please the now", &cfg, &protected), "peas the new");
        cfg.substitution_rate = 0.5;
        let a = inject_noise("please the now please the now", &cfg, &none);
        assert_eq!(a, inject_noise("please the now please the now", &cfg, &none));
    }
}
