//! Turns perception results (detections, captions, OCR lines) into the
//! sentences spoken to the user.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const DEFAULT_DETECTION_MIN_CONF: f64 = 0.5;
pub const DEFAULT_OCR_MIN_CONF: f64 = 0.4;

/// Normalized rectangle, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        Self { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn validate(&self) -> Result<(), String> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if [self.x0, self.y0, self.x1, self.y1].iter().all(|&v| in_unit(v))
            && self.x0 < self.x1
            && self.y0 < self.y1
        {
            Ok(())
        } else {
            Err(format!("bbox {:?} is not a well-ordered unit rectangle", <[f64; 4]>::from(*self)))
        }
    }

    pub fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

fn check_confidence(c: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(format!("confidence {c} outside [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn validate(&self) -> Result<(), String> {
        check_confidence(self.confidence)?;
        self.bbox.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Left,
    Center,
    Right,
}

impl Position {
    pub fn of(bbox: &BBox) -> Self {
        let cx = bbox.center_x();
        if cx < 1.0 / 3.0 {
            Position::Left
        } else if cx > 2.0 / 3.0 {
            Position::Right
        } else {
            Position::Center
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Position::Left => "on your left",
            Position::Center => "in front of you",
            Position::Right => "on your right",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionSummary {
    pub counts: BTreeMap<String, usize>,
    pub positions: BTreeMap<String, BTreeMap<Position, usize>>,
}

impl DetectionSummary {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn summarize_detections(detections: &[Detection], min_conf: f64) -> DetectionSummary {
    let mut summary = DetectionSummary::default();
    for d in detections.iter().filter(|d| d.confidence >= min_conf) {
        *summary.counts.entry(d.label.clone()).or_default() += 1;
        *summary
            .positions
            .entry(d.label.clone())
            .or_default()
            .entry(Position::of(&d.bbox))
            .or_default() += 1;
    }
    summary
}

pub fn plural(label: &str) -> String {
    match label {
        "person" => "people".into(),
        "knife" => "knives".into(),
        "mouse" => "mice".into(),
        _ => format!("{label}s"),
    }
}

/// Joins `["a", "b", "c"]` as `"a, b and c"`.
pub fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

pub fn detections_to_sentence(summary: &DetectionSummary) -> String {
    if summary.is_empty() {
        return "I don't see any objects I recognize.".into();
    }
    let mut parts = Vec::new();
    for (label, buckets) in &summary.positions {
        for (pos, &n) in buckets {
            let noun = if n == 1 { label.clone() } else { plural(label) };
            parts.push(format!("{n} {noun} {}", pos.phrase()));
        }
    }
    format!("I can see {}.", join_and(&parts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption(String);

impl Caption {
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            None
        } else {
            Some(Self(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn caption_to_sentence(caption: &Caption) -> String {
    let body = caption.as_str().trim().trim_end_matches('.').trim_end();
    let mut chars = body.chars();
    let body: String = match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    };
    format!("It looks like {body}.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrLine {
    pub text: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_index: Option<u32>,
}

impl OcrLine {
    pub fn validate(&self) -> Result<(), String> {
        check_confidence(self.confidence)?;
        match &self.bbox {
            Some(b) => b.validate(),
            None => Ok(()),
        }
    }
}

fn vertical_overlap_ratio(a: &BBox, b: &BBox) -> f64 {
    let overlap = a.y1.min(b.y1) - a.y0.max(b.y0);
    let smaller = a.height().min(b.height());
    if overlap <= 0.0 || smaller <= 0.0 {
        0.0
    } else {
        overlap / smaller
    }
}

/// Orders surviving OCR lines for reading aloud and joins them with spaces.
///
/// With boxes on every line: rows top to bottom (a line joins a row when it
/// overlaps the row's first line vertically by at least half the smaller
/// height), left to right within a row. Otherwise `order_index`, then input
/// order.
pub fn ocr_reading_order(lines: &[OcrLine], min_conf: f64) -> String {
    let kept: Vec<&OcrLine> = lines.iter().filter(|l| l.confidence >= min_conf).collect();
    let ordered: Vec<&OcrLine> = if !kept.is_empty() && kept.iter().all(|l| l.bbox.is_some()) {
        let mut by_top = kept.clone();
        by_top.sort_by(|a, b| {
            let (a, b) = (a.bbox.unwrap(), b.bbox.unwrap());
            a.y0.total_cmp(&b.y0).then(a.x0.total_cmp(&b.x0))
        });
        let mut rows: Vec<Vec<&OcrLine>> = Vec::new();
        for line in by_top {
            let bbox = line.bbox.unwrap();
            match rows.last_mut() {
                Some(row) if vertical_overlap_ratio(&row[0].bbox.unwrap(), &bbox) >= 0.5 => {
                    row.push(line)
                }
                _ => rows.push(vec![line]),
            }
        }
        rows.into_iter()
            .flat_map(|mut row| {
                row.sort_by(|a, b| a.bbox.unwrap().x0.total_cmp(&b.bbox.unwrap().x0));
                row
            })
            .collect()
    } else {
        let mut v = kept;
        // stable: lines without an index keep their relative input order at the end
        v.sort_by_key(|l| l.order_index.unwrap_or(u32::MAX));
        v
    };
    ordered
        .iter()
        .map(|l| l.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(label: &str, conf: f64, bbox: [f64; 4]) -> Detection {
        Detection {
            label: label.into(),
            confidence: conf,
            bbox: bbox.into(),
        }
    }

    fn line(text: &str, bbox: Option<[f64; 4]>) -> OcrLine {
        OcrLine {
            text: text.into(),
            confidence: 0.9,
            bbox: bbox.map(Into::into),
            order_index: None,
        }
    }

    #[test]
    fn summary_filters_and_counts() {
        assert!(summarize_detections(&[], 0.5).is_empty());
        let dets = [
            det("person", 0.9, [0.4, 0.0, 0.6, 1.0]),
            det("person", 0.9, [0.45, 0.1, 0.55, 0.9]),
            det("dog", 0.3, [0.0, 0.0, 0.2, 1.0]),
        ];
        let s = summarize_detections(&dets, 0.5);
        assert_eq!(s.counts, BTreeMap::from([("person".to_string(), 2)]));
        assert_eq!(Position::of(&[0.0, 0.0, 0.2, 1.0].into()), Position::Left);
        assert_eq!(Position::of(&[0.8, 0.0, 0.9, 1.0].into()), Position::Right);
    }

    #[test]
    fn sentences() {
        assert_eq!(
            detections_to_sentence(&DetectionSummary::default()),
            "I don't see any objects I recognize."
        );
        let two = summarize_detections(
            &[
                det("person", 0.9, [0.4, 0.0, 0.6, 1.0]),
                det("person", 0.8, [0.4, 0.0, 0.6, 1.0]),
            ],
            0.5,
        );
        assert_eq!(detections_to_sentence(&two), "I can see 2 people in front of you.");
        let knife = summarize_detections(&[det("knife", 0.9, [0.0, 0.0, 0.2, 0.5])], 0.5);
        assert_eq!(detections_to_sentence(&knife), "I can see 1 knife on your left.");
        let mixed = summarize_detections(
            &[
                det("cup", 0.9, [0.8, 0.0, 0.95, 0.5]),
                det("knife", 0.9, [0.0, 0.0, 0.2, 0.5]),
                det("knife", 0.9, [0.1, 0.0, 0.2, 0.5]),
                det("mouse", 0.9, [0.4, 0.0, 0.6, 0.5]),
            ],
            0.5,
        );
        assert_eq!(
            detections_to_sentence(&mixed),
            "I can see 1 cup on your right, 2 knives on your left and 1 mouse in front of you."
        );
    }

    #[test]
    fn captions() {
        let c = |s| caption_to_sentence(&Caption::new(s).unwrap());
        assert_eq!(c("a man riding a bike"), "It looks like a man riding a bike.");
        assert_eq!(c("A dog."), "It looks like a dog.");
        assert!(Caption::new("  ").is_none());
    }

    #[test]
    fn reading_order_basics() {
        assert_eq!(ocr_reading_order(&[line("EXIT", None)], 0.4), "EXIT");
        let lines = [
            line("right", Some([0.6, 0.1, 0.9, 0.2])),
            line("left", Some([0.1, 0.12, 0.4, 0.21])),
        ];
        assert_eq!(ocr_reading_order(&lines, 0.4), "left right");
        let mut low = line("smudge", None);
        low.confidence = 0.1;
        let mut indexed = vec![line("second", None), low, line("first", None)];
        indexed[0].order_index = Some(2);
        indexed[2].order_index = Some(1);
        assert_eq!(ocr_reading_order(&indexed, 0.4), "first second");
    }

    #[test]
    fn shuffled_stack_matches_top_to_bottom() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let stacked: Vec<OcrLine> = (0..10)
            .map(|i| {
                let y0 = i as f64 * 0.09 + 0.01;
                line(&format!("line{i}"), Some([0.1, y0, 0.8, y0 + 0.06]))
            })
            .collect();
        // independent oracle: lines are disjoint rows, so order is by y0 alone
        let mut oracle = stacked.clone();
        oracle.sort_by(|a, b| a.bbox.unwrap().y0.partial_cmp(&b.bbox.unwrap().y0).unwrap());
        let expected: Vec<&str> = oracle.iter().map(|l| l.text.as_str()).collect();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let mut shuffled = stacked.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(ocr_reading_order(&shuffled, 0.4), expected.join(" "));
        }
    }

    fn arb_detection() -> impl Strategy<Value = Detection> {
        (
            prop::sample::select(vec!["person", "cup", "dog", "knife"]),
            0.0f64..=1.0,
            0.0f64..0.9,
            0.0f64..0.9,
        )
            .prop_map(|(l, c, x, y)| det(l, c, [x, y, x + 0.1, y + 0.1]))
    }

    proptest! {
        #[test]
        fn summary_matches_brute_force(dets in proptest::collection::vec(arb_detection(), 0..30), min in 0.0f64..1.0) {
            let s = summarize_detections(&dets, min);
            for label in ["person", "cup", "dog", "knife"] {
                let brute = dets.iter().filter(|d| d.label == label && d.confidence >= min).count();
                prop_assert_eq!(s.counts.get(label).copied().unwrap_or(0), brute);
                let pos_total: usize = s.positions.get(label).map(|p| p.values().sum()).unwrap_or(0);
                prop_assert_eq!(pos_total, brute);
            }
        }

        #[test]
        fn raising_min_conf_never_increases(dets in proptest::collection::vec(arb_detection(), 0..30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = summarize_detections(&dets, lo);
            let s_hi = summarize_detections(&dets, hi);
            for (label, n) in &s_hi.counts {
                prop_assert!(*n <= s_lo.counts[label]);
            }
        }

        #[test]
        fn reading_order_is_a_permutation(
            boxes in proptest::collection::vec((0.0f64..0.8, 0.0f64..0.8, 0.05f64..0.2, 0.0f64..1.0), 1..12),
            with_boxes in any::<bool>(),
        ) {
            let lines: Vec<OcrLine> = boxes.iter().enumerate().map(|(i, &(x, y, h, c))| OcrLine {
                text: format!("t{i}"),
                confidence: c,
                bbox: with_boxes.then(|| [x, y, x + 0.1, y + h].into()),
                order_index: None,
            }).collect();
            let out = ocr_reading_order(&lines, 0.4);
            let mut got: Vec<&str> = out.split_whitespace().collect();
            let mut want: Vec<&str> = lines.iter().filter(|l| l.confidence >= 0.4).map(|l| l.text.as_str()).collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }
}
