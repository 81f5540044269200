//! Banknote counting from OCR tokens. Amounts are integer minor units.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::postproc::{join_and, BBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub line_index: u32,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrencySpec {
    pub markers: Vec<String>,
    /// Legal note values in major units.
    pub values: Vec<u64>,
    #[serde(default = "default_minor_per_major")]
    pub minor_per_major: u64,
    pub singular: String,
    pub plural: String,
}

fn default_minor_per_major() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrencyConfig {
    pub currencies: BTreeMap<String, CurrencySpec>,
    #[serde(default = "default_min_conf")]
    pub min_confidence: f64,
    /// Count at most one note per OCR line.
    #[serde(default = "default_true")]
    pub one_per_line: bool,
}

fn default_min_conf() -> f64 {
    0.4
}

fn default_true() -> bool {
    true
}

impl Default for CurrencyConfig {
    fn default() -> Self {
        let spec = |markers: &[&str], values: &[u64], singular: &str, plural: &str| CurrencySpec {
            markers: markers.iter().map(|s| s.to_string()).collect(),
            values: values.to_vec(),
            minor_per_major: 100,
            singular: singular.into(),
            plural: plural.into(),
        };
        Self {
            currencies: BTreeMap::from([
                (
                    "EUR".to_string(),
                    spec(&["EURO", "EUROS", "EUR", "€"], &[5, 10, 20, 50, 100, 200, 500], "euro", "euros"),
                ),
                (
                    "USD".to_string(),
                    spec(&["DOLLAR", "DOLLARS", "USD", "$"], &[1, 2, 5, 10, 20, 50, 100], "dollar", "dollars"),
                ),
            ]),
            min_confidence: default_min_conf(),
            one_per_line: true,
        }
    }
}

impl CurrencyConfig {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Denomination {
    pub currency: String,
    pub value_minor: u64,
}

/// Uppercased words of a token with punctuation removed and digit runs
/// split from symbols, so "20€" yields `["20", "€"]`.
fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let cleaned: String = raw
            .chars()
            .filter(|c| !(c.is_ascii_punctuation() && *c != '$'))
            .flat_map(char::to_uppercase)
            .collect();
        let mut cur = String::new();
        for c in cleaned.chars() {
            if !cur.is_empty() && cur.chars().last().unwrap().is_ascii_digit() != c.is_ascii_digit() {
                out.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn parse_denominations(tokens: &[OcrToken], config: &CurrencyConfig) -> Vec<Denomination> {
    let mut lines: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for t in tokens.iter().filter(|t| t.confidence >= config.min_confidence) {
        lines.entry(t.line_index).or_default().extend(words(&t.text));
    }
    let mut out = Vec::new();
    for words in lines.values() {
        for w in words {
            let Ok(value) = w.parse::<u64>() else { continue };
            let hit = config.currencies.iter().find(|(_, spec)| {
                spec.values.contains(&value)
                    && words.iter().any(|x| spec.markers.iter().any(|m| m == x))
            });
            if let Some((code, spec)) = hit {
                out.push(Denomination {
                    currency: code.clone(),
                    value_minor: value * spec.minor_per_major,
                });
                if config.one_per_line {
                    break;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CurrencyTotal {
    pub total_minor: u64,
    pub breakdown: BTreeMap<u64, u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoneyCount {
    pub per_currency: BTreeMap<String, CurrencyTotal>,
}

impl MoneyCount {
    pub fn is_empty(&self) -> bool {
        self.per_currency.is_empty()
    }
}

pub fn aggregate(denoms: &[Denomination]) -> MoneyCount {
    let mut count = MoneyCount::default();
    for d in denoms {
        let entry = count.per_currency.entry(d.currency.clone()).or_default();
        entry.total_minor += d.value_minor;
        *entry.breakdown.entry(d.value_minor).or_default() += 1;
    }
    count
}

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

pub fn count_word(n: u32) -> String {
    NUMBER_WORDS
        .get(n as usize)
        .map(|s| s.to_string())
        .unwrap_or_else(|| n.to_string())
}

fn amount_text(minor: u64, per_major: u64) -> String {
    if minor % per_major == 0 {
        (minor / per_major).to_string()
    } else {
        format!("{}.{:02}", minor / per_major, minor % per_major)
    }
}

/// One sentence per currency, ordered by currency code.
pub fn describe(count: &MoneyCount, config: &CurrencyConfig) -> String {
    if count.is_empty() {
        return "I could not identify any money.".into();
    }
    let sentences: Vec<String> = count
        .per_currency
        .iter()
        .map(|(code, total)| {
            let (singular, plural, per_major) = match config.currencies.get(code) {
                Some(s) => (s.singular.as_str(), s.plural.as_str(), s.minor_per_major),
                None => (code.as_str(), code.as_str(), 100),
            };
            let total_unit = if total.total_minor == per_major { singular } else { plural };
            let notes: Vec<String> = total
                .breakdown
                .iter()
                .rev()
                .map(|(&value, &n)| {
                    format!(
                        "{} {} {singular} {}",
                        count_word(n),
                        amount_text(value, per_major),
                        if n == 1 { "note" } else { "notes" }
                    )
                })
                .collect();
            format!(
                "You have {} {total_unit}: {}.",
                amount_text(total.total_minor, per_major),
                join_and(&notes)
            )
        })
        .collect();
    sentences.join(" ")
}

/// Splits OCR lines into tokens, one `line_index` per line.
pub fn tokens_from_lines(lines: &[crate::postproc::OcrLine]) -> Vec<OcrToken> {
    lines
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            l.text.split_whitespace().map(move |w| OcrToken {
                text: w.to_string(),
                line_index: i as u32,
                confidence: l.confidence,
                bbox: None,
            })
        })
        .collect()
}
