//! Keyword intent routing: one utterance in, one [`Intent`] out.
//!
//! A phrase matches when its tokens occur as a contiguous run in the
//! normalized utterance. Each kind scores the number of its phrases that
//! match; ties go to the kind owning the longest matched phrase, then to
//! the configured priority order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WAKE_WORD: &str = "iris";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentKind {
    Activate,
    StatusCheck,
    FaceIdentify,
    FaceEnroll,
    SceneDescribe,
    ReadText,
    ObjectsIdentify,
    CountMoney,
    NoteRecord,
    NoteRetrieve,
    BarcodeScan,
    Shutdown,
    Unknown,
}

impl IntentKind {
    pub const ALL: [IntentKind; 13] = [
        IntentKind::Activate,
        IntentKind::StatusCheck,
        IntentKind::FaceIdentify,
        IntentKind::FaceEnroll,
        IntentKind::SceneDescribe,
        IntentKind::ReadText,
        IntentKind::ObjectsIdentify,
        IntentKind::CountMoney,
        IntentKind::NoteRecord,
        IntentKind::NoteRetrieve,
        IntentKind::BarcodeScan,
        IntentKind::Shutdown,
        IntentKind::Unknown,
    ];
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub const SLOT_PERSON_NAME: &str = "person_name";
pub const SLOT_CATEGORY: &str = "category";

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub text: String,
    pub confidence: Option<f64>,
}

impl Utterance {
    /// `None` when the text is blank.
    pub fn new(text: impl Into<String>, confidence: Option<f64>) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        Some(Self { text, confidence })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    pub kind: IntentKind,
    pub slots: BTreeMap<String, String>,
}

impl Intent {
    pub fn unknown() -> Self {
        Self {
            kind: IntentKind::Unknown,
            slots: BTreeMap::new(),
        }
    }

    pub fn slot(&self, name: &str) -> Option<&str> {
        self.slots.get(name).map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum RouterConfigError {
    #[error("phrase {0:?} must be lowercase and normalized")]
    NotNormalized(String),
    #[error("phrase {phrase:?} is listed under both {first} and {second}")]
    DuplicatePhrase {
        phrase: String,
        first: IntentKind,
        second: IntentKind,
    },
    #[error("priority order must list every intent kind exactly once")]
    BadPriority,
    #[error("wake word must be non-empty")]
    EmptyWakeWord,
    #[error("cannot read router config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse router config: {0}")]
    Json(#[from] serde_json::Error),
}

/// Keyword table and tie-break order. The wake word is the only
/// `Activate` phrase and is added automatically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub wake_word: String,
    pub table: BTreeMap<IntentKind, Vec<String>>,
    #[serde(default = "default_priority")]
    pub priority: Vec<IntentKind>,
}

fn default_priority() -> Vec<IntentKind> {
    IntentKind::ALL.to_vec()
}

impl Default for RouterConfig {
    fn default() -> Self {
        use IntentKind::*;
        let entries: [(IntentKind, &[&str]); 11] = [
            (
                SceneDescribe,
                &["describe", "what do you see", "surroundings", "scene"],
            ),
            (ReadText, &["read"]),
            (ObjectsIdentify, &["objects", "identify", "what is in front"]),
            (FaceIdentify, &["who is this", "who am i looking at"]),
            (FaceEnroll, &["remember", "this is"]),
            (CountMoney, &["money", "count my money", "how much money"]),
            (BarcodeScan, &["barcode", "scan", "what product"]),
            (NoteRecord, &["take a note", "remind me", "add to list"]),
            (NoteRetrieve, &["read my notes", "my reminders", "my list"]),
            (StatusCheck, &["status", "battery"]),
            (Shutdown, &["goodbye", "shut down"]),
        ];
        Self {
            wake_word: DEFAULT_WAKE_WORD.to_string(),
            table: entries
                .iter()
                .map(|(k, ps)| (*k, ps.iter().map(|p| p.to_string()).collect()))
                .collect(),
            priority: default_priority(),
        }
    }
}

impl RouterConfig {
    pub fn with_wake_word(wake_word: impl Into<String>) -> Self {
        Self {
            wake_word: wake_word.into(),
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, RouterConfigError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every `(kind, phrase)` pair including the wake word.
    pub fn phrases(&self) -> impl Iterator<Item = (IntentKind, &str)> {
        std::iter::once((IntentKind::Activate, self.wake_word.as_str())).chain(
            self.table
                .iter()
                .filter(|(k, _)| **k != IntentKind::Activate)
                .flat_map(|(k, ps)| ps.iter().map(move |p| (*k, p.as_str()))),
        )
    }

    pub fn validate(&self) -> Result<(), RouterConfigError> {
        if normalize(&self.wake_word).is_empty() {
            return Err(RouterConfigError::EmptyWakeWord);
        }
        let mut seen: HashMap<&str, IntentKind> = HashMap::new();
        for (kind, phrase) in self.phrases() {
            if normalize(phrase).join(" ") != phrase {
                return Err(RouterConfigError::NotNormalized(phrase.to_string()));
            }
            if let Some(first) = seen.insert(phrase, kind) {
                return Err(RouterConfigError::DuplicatePhrase {
                    phrase: phrase.to_string(),
                    first,
                    second: kind,
                });
            }
        }
        let mut prio = self.priority.clone();
        prio.sort();
        prio.dedup();
        if prio.len() != self.priority.len() || prio != IntentKind::ALL {
            return Err(RouterConfigError::BadPriority);
        }
        Ok(())
    }

    /// Every token that occurs in some phrase.
    pub fn keyword_tokens(&self) -> std::collections::BTreeSet<String> {
        self.phrases().flat_map(|(_, p)| normalize(p)).collect()
    }
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Position of the first contiguous occurrence of `phrase` in `tokens`.
pub fn find_phrase(tokens: &[String], phrase: &[String]) -> Option<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return None;
    }
    tokens.windows(phrase.len()).position(|w| w == phrase)
}

/// Hook for a secondary scorer consulted when no keyword matches.
pub trait FallbackScorer {
    fn score(&self, tokens: &[String]) -> Option<IntentKind>;
}

#[derive(Debug, Clone, Copy, Default)]
struct KindScore {
    matched: usize,
    longest: usize,
}

/// Picks the winning kind for already-normalized tokens.
pub fn route_tokens(tokens: &[String], config: &RouterConfig) -> IntentKind {
    let mut scores: BTreeMap<IntentKind, KindScore> = BTreeMap::new();
    for (kind, phrase) in config.phrases() {
        let phrase_tokens = normalize(phrase);
        if find_phrase(tokens, &phrase_tokens).is_some() {
            let s = scores.entry(kind).or_default();
            s.matched += 1;
            s.longest = s.longest.max(phrase_tokens.len());
        }
    }
    let rank = |k: &IntentKind| {
        config
            .priority
            .iter()
            .position(|p| p == k)
            .unwrap_or(usize::MAX)
    };
    scores
        .into_iter()
        .max_by(|(ka, a), (kb, b)| {
            a.matched
                .cmp(&b.matched)
                .then(a.longest.cmp(&b.longest))
                // earlier in the priority order wins, so it must compare greater
                .then(rank(kb).cmp(&rank(ka)))
        })
        .map(|(k, _)| k)
        .unwrap_or(IntentKind::Unknown)
}

pub fn route(utterance: &Utterance, config: &RouterConfig) -> Intent {
    route_with(utterance, config, None)
}

pub fn route_with(
    utterance: &Utterance,
    config: &RouterConfig,
    fallback: Option<&dyn FallbackScorer>,
) -> Intent {
    let tokens = normalize(&utterance.text);
    let mut kind = route_tokens(&tokens, config);
    if kind == IntentKind::Unknown {
        if let Some(k) = fallback.and_then(|f| f.score(&tokens)) {
            kind = k;
        }
    }
    let slots = extract_slots(kind, &tokens).unwrap_or_default();
    Intent { kind, slots }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SlotError {
    #[error("no {0} found in the utterance")]
    MissingSlot(&'static str),
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Name following "this is"/"remember", title-cased. Empty when absent.
pub fn person_name_after_cue(tokens: &[String]) -> Option<String> {
    let cues = [normalize("this is"), normalize("remember")];
    let (pos, len) = cues
        .iter()
        .filter_map(|c| find_phrase(tokens, c).map(|p| (p, c.len())))
        .min()?;
    let rest = &tokens[pos + len..];
    if rest.is_empty() {
        None
    } else {
        Some(title_case_words(rest))
    }
}

pub fn title_case_words(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|t| title_case(t))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn note_category(tokens: &[String]) -> &'static str {
    tokens
        .iter()
        .find_map(|t| match t.as_str() {
            "remind" | "reminder" | "reminders" => Some("reminder"),
            "list" | "lists" => Some("list"),
            _ => None,
        })
        .unwrap_or("note")
}

/// Slots required by `kind`; kinds without slots yield an empty map.
pub fn extract_slots(
    kind: IntentKind,
    tokens: &[String],
) -> Result<BTreeMap<String, String>, SlotError> {
    let mut slots = BTreeMap::new();
    match kind {
        IntentKind::FaceEnroll => {
            let name =
                person_name_after_cue(tokens).ok_or(SlotError::MissingSlot(SLOT_PERSON_NAME))?;
            slots.insert(SLOT_PERSON_NAME.to_string(), name);
        }
        IntentKind::NoteRecord | IntentKind::NoteRetrieve => {
            slots.insert(SLOT_CATEGORY.to_string(), note_category(tokens).to_string());
        }
        _ => {}
    }
    Ok(slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        normalize(s)
    }

    fn kind_of(text: &str) -> IntentKind {
        route(&Utterance::new(text, None).unwrap(), &RouterConfig::default()).kind
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(toks("What do you see?"), ["what", "do", "you", "see"]);
        assert_eq!(toks("  READ   this. "), ["read", "this"]);
        assert!(toks("?!").is_empty());
    }

    #[test]
    fn route_examples() {
        assert_eq!(kind_of("what do you see"), IntentKind::SceneDescribe);
        assert_eq!(kind_of("read my notes"), IntentKind::NoteRetrieve);
        assert_eq!(kind_of("please hello world"), IntentKind::Unknown);
        assert_eq!(kind_of("Iris"), IntentKind::Activate);
    }

    /// Scores every kind by brute force, without the shared matcher.
    fn oracle(text: &str, cfg: &RouterConfig) -> IntentKind {
        let padded = format!(" {} ", toks(text).join(" "));
        let mut best: Option<(usize, usize, usize, IntentKind)> = None;
        for (rank, kind) in cfg.priority.iter().enumerate() {
            let phrases: Vec<&str> = cfg.phrases().filter(|(k, _)| k == kind).map(|(_, p)| p).collect();
            let hits: Vec<&str> = phrases
                .into_iter()
                .filter(|p| padded.contains(&format!(" {p} ")))
                .collect();
            if hits.is_empty() {
                continue;
            }
            let longest = hits.iter().map(|p| p.split(' ').count()).max().unwrap();
            let cand = (hits.len(), longest, usize::MAX - rank, *kind);
            if best.is_none_or(|b| (cand.0, cand.1, cand.2) > (b.0, b.1, b.2)) {
                best = Some(cand);
            }
        }
        best.map(|b| b.3).unwrap_or(IntentKind::Unknown)
    }

    #[test]
    fn agrees_with_scoring_oracle() {
        let cfg = RouterConfig::default();
        for text in [
            "read my notes",
            "read this",
            "count my money",
            "how much money do i have",
            "scan the barcode",
            "what is in front of me",
            "who is this",
            "this is maria",
            "remind me to read the objects list",
            "iris status",
            "describe the scene and identify objects",
        ] {
            assert_eq!(kind_of(text), oracle(text, &cfg), "{text}");
        }
    }

    #[test]
    fn verbatim_phrases_route_home() {
        let cfg = RouterConfig::default();
        for (kind, phrase) in cfg.phrases() {
            assert_eq!(kind_of(phrase), kind, "{phrase}");
        }
    }

    #[test]
    fn default_config_is_valid() {
        RouterConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rejects_duplicates_and_caps() {
        let mut cfg = RouterConfig::default();
        cfg.table
            .get_mut(&IntentKind::ReadText)
            .unwrap()
            .push("scan".into());
        assert!(matches!(
            cfg.validate(),
            Err(RouterConfigError::DuplicatePhrase { .. })
        ));
        let mut cfg = RouterConfig::default();
        cfg.table
            .get_mut(&IntentKind::ReadText)
            .unwrap()
            .push("Read Aloud".into());
        assert!(matches!(cfg.validate(), Err(RouterConfigError::NotNormalized(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = RouterConfig::with_wake_word("jarvis");
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RouterConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn slot_examples() {
        let s = extract_slots(IntentKind::FaceEnroll, &toks("this is maria")).unwrap();
        assert_eq!(s[SLOT_PERSON_NAME], "Maria");
        let s = extract_slots(IntentKind::NoteRecord, &toks("remind me to buy milk")).unwrap();
        assert_eq!(s[SLOT_CATEGORY], "reminder");
        assert_eq!(
            extract_slots(IntentKind::FaceEnroll, &toks("this is")),
            Err(SlotError::MissingSlot(SLOT_PERSON_NAME))
        );
        let s = extract_slots(IntentKind::NoteRetrieve, &toks("read my notes")).unwrap();
        assert_eq!(s[SLOT_CATEGORY], "note");
        let s = extract_slots(IntentKind::NoteRetrieve, &toks("my list")).unwrap();
        assert_eq!(s[SLOT_CATEGORY], "list");
        let s = extract_slots(IntentKind::FaceEnroll, &toks("remember ana maria")).unwrap();
        assert_eq!(s[SLOT_PERSON_NAME], "Ana Maria");
    }

    struct AlwaysScene;
    impl FallbackScorer for AlwaysScene {
        fn score(&self, _: &[String]) -> Option<IntentKind> {
            Some(IntentKind::SceneDescribe)
        }
    }

    #[test]
    fn fallback_only_when_no_keyword() {
        let cfg = RouterConfig::default();
        let u = Utterance::new("look around", None).unwrap();
        assert_eq!(route_with(&u, &cfg, Some(&AlwaysScene)).kind, IntentKind::SceneDescribe);
        let u = Utterance::new("scan", None).unwrap();
        assert_eq!(route_with(&u, &cfg, Some(&AlwaysScene)).kind, IntentKind::BarcodeScan);
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once.join(" ")), once);
        }

        #[test]
        fn route_is_pure(s in "[a-z ]{0,40}") {
            if let Some(u) = Utterance::new(s, None) {
                let cfg = RouterConfig::default();
                prop_assert_eq!(route(&u, &cfg), route(&u, &cfg));
            }
        }

        #[test]
        fn extra_tokens_never_lose_a_match(
            idx in 0usize..40,
            pre in "[q-z]{1,6}",
            post in "[q-z]{1,6}",
        ) {
            let cfg = RouterConfig::default();
            let phrases: Vec<(IntentKind, &str)> = cfg.phrases().collect();
            let (_, phrase) = phrases[idx % phrases.len()];
            let padded = format!("{pre} {phrase} {post}");
            prop_assert_ne!(kind_of(&padded), IntentKind::Unknown);
        }
    }
}
