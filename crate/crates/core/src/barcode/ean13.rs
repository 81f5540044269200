//! EAN-13 scanline codec.
//!
//! A symbol is 95 modules: start guard `101`, six left digits drawn from
//! the L or G sets (the parity mix encodes the leading digit), centre guard
//! `01010`, six right digits from the R set, end guard `101`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{contrast_stretch, histogram, otsu_level, sharpen, ImageFrame};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BarcodeError {
    #[error("expected {expected} decimal digits")]
    BadInput { expected: usize },
    #[error("checksum does not validate")]
    BadChecksum,
    #[error("no start guard found")]
    NoGuard,
    #[error("guard pattern mismatch")]
    BadGuard,
    #[error("digit {digit} matches no pattern")]
    PatternMismatch { digit: usize },
    #[error("quiet zone must be at least 7 modules and module width at least 1px")]
    BadGeometry,
    #[error("no barcode found in any sampled row")]
    NotFound,
}

/// Run widths of the L-set digit patterns (space, bar, space, bar).
/// R patterns share these widths with inverted colours; G patterns are the
/// widths reversed.
const L_WIDTHS: [[u8; 4]; 10] = [
    [3, 2, 1, 1],
    [2, 2, 2, 1],
    [2, 1, 2, 2],
    [1, 4, 1, 1],
    [1, 1, 3, 2],
    [1, 2, 3, 1],
    [1, 1, 1, 4],
    [1, 3, 1, 2],
    [1, 2, 1, 3],
    [3, 1, 1, 2],
];

/// Left-half parity per leading digit, `true` = even (G set).
const PARITY: [[bool; 6]; 10] = {
    const O: bool = false;
    const E: bool = true;
    [
        [O, O, O, O, O, O],
        [O, O, E, O, E, E],
        [O, O, E, E, O, E],
        [O, O, E, E, E, O],
        [O, E, O, O, E, E],
        [O, E, E, O, O, E],
        [O, E, E, E, O, O],
        [O, E, O, E, O, E],
        [O, E, O, E, E, O],
        [O, E, E, O, E, O],
    ]
};

/// Thirteen checksum-valid digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DigitString([u8; 13]);

impl DigitString {
    pub fn from_digits(digits: [u8; 13]) -> Result<Self, BarcodeError> {
        if digits.iter().any(|&d| d > 9) {
            return Err(BarcodeError::BadInput { expected: 13 });
        }
        if checksum_of(&digits[..12]) != digits[12] {
            return Err(BarcodeError::BadChecksum);
        }
        Ok(Self(digits))
    }

    /// Appends the check digit to twelve payload digits.
    pub fn with_checksum(payload: [u8; 12]) -> Result<Self, BarcodeError> {
        if payload.iter().any(|&d| d > 9) {
            return Err(BarcodeError::BadInput { expected: 12 });
        }
        let mut d = [0u8; 13];
        d[..12].copy_from_slice(&payload);
        d[12] = checksum_of(&payload);
        Ok(Self(d))
    }

    pub fn digits(&self) -> &[u8; 13] {
        &self.0
    }
}

impl fmt::Display for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

fn parse_digits(s: &str, n: usize) -> Result<Vec<u8>, BarcodeError> {
    let bad = BarcodeError::BadInput { expected: n };
    if s.len() != n {
        return Err(bad);
    }
    s.bytes()
        .map(|b| if b.is_ascii_digit() { Ok(b - b'0') } else { Err(bad.clone()) })
        .collect()
}

impl FromStr for DigitString {
    type Err = BarcodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = parse_digits(s.trim(), 13)?;
        Self::from_digits(v.try_into().expect("length checked"))
    }
}

impl Serialize for DigitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DigitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn checksum_of(payload: &[u8]) -> u8 {
    // 1-indexed odd positions weigh 1, even positions weigh 3
    let sum: u32 = payload
        .iter()
        .enumerate()
        .map(|(i, &d)| d as u32 * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    ((10 - sum % 10) % 10) as u8
}

/// Check digit for a 12-digit string.
pub fn checksum_digit(payload: &str) -> Result<u8, BarcodeError> {
    Ok(checksum_of(&parse_digits(payload, 12)?))
}

/// Luminance samples along one horizontal line through a symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scanline(pub Vec<u8>);

impl Scanline {
    pub fn reversed(&self) -> Scanline {
        Scanline(self.0.iter().rev().copied().collect())
    }
}

/// 95 module colours of a symbol, `true` = bar.
pub fn symbol_modules(digits: &DigitString) -> Vec<bool> {
    let d = digits.digits();
    let mut bits = Vec::with_capacity(95);
    let push_runs = |bits: &mut Vec<bool>, widths: [u8; 4], first_bar: bool| {
        for (i, w) in widths.iter().enumerate() {
            let bar = (i % 2 == 0) == first_bar;
            bits.extend(std::iter::repeat_n(bar, *w as usize));
        }
    };
    bits.extend([true, false, true]);
    let parity = PARITY[d[0] as usize];
    for i in 0..6 {
        let mut w = L_WIDTHS[d[i + 1] as usize];
        if parity[i] {
            w.reverse();
        }
        push_runs(&mut bits, w, false);
    }
    bits.extend([false, true, false, true, false]);
    for i in 0..6 {
        push_runs(&mut bits, L_WIDTHS[d[i + 7] as usize], true);
    }
    bits.extend([true, false, true]);
    debug_assert_eq!(bits.len(), 95);
    bits
}

/// Renders a symbol: bars 0, spaces and quiet zones 255.
pub fn encode_scanline(
    digits: &DigitString,
    module_px: usize,
    quiet_px: usize,
) -> Result<Scanline, BarcodeError> {
    if module_px == 0 || quiet_px < 7 * module_px {
        return Err(BarcodeError::BadGeometry);
    }
    let mut px = vec![255u8; quiet_px];
    for bar in symbol_modules(digits) {
        px.extend(std::iter::repeat_n(if bar { 0 } else { 255 }, module_px));
    }
    px.extend(std::iter::repeat_n(255u8, quiet_px));
    Ok(Scanline(px))
}

#[derive(Debug, Clone, Copy)]
struct Run {
    bar: bool,
    len: usize,
}

fn run_lengths(line: &[u8]) -> Vec<Run> {
    let Some(level) = otsu_level(&histogram(line)) else {
        return Vec::new();
    };
    let mut runs: Vec<Run> = Vec::new();
    for &p in line {
        let bar = p < level;
        match runs.last_mut() {
            Some(r) if r.bar == bar => r.len += 1,
            _ => runs.push(Run { bar, len: 1 }),
        }
    }
    runs
}

const GUARD_TOLERANCE: f64 = 0.4;
const MIN_QUIET_MODULES: f64 = 3.0;
/// Largest summed per-run deviation, in modules, accepted for a digit.
const MAX_DIGIT_ERROR: f64 = 1.5;

fn median3(a: usize, b: usize, c: usize) -> f64 {
    let mut v = [a, b, c];
    v.sort_unstable();
    v[1] as f64
}

/// Start positions (run indices) of plausible start guards.
fn guard_candidates(runs: &[Run]) -> impl Iterator<Item = (usize, f64)> + '_ {
    (1..runs.len().saturating_sub(2)).filter_map(move |i| {
        let (a, b, c) = (runs[i], runs[i + 1], runs[i + 2]);
        if !(a.bar && !b.bar && c.bar) || runs[i - 1].bar {
            return None;
        }
        let med = median3(a.len, b.len, c.len);
        let ok = |l: usize| (l as f64 - med).abs() <= GUARD_TOLERANCE * med;
        if !(ok(a.len) && ok(b.len) && ok(c.len)) {
            return None;
        }
        let module = (a.len + b.len + c.len) as f64 / 3.0;
        (runs[i - 1].len as f64 >= MIN_QUIET_MODULES * module).then_some((i, module))
    })
}

/// Nearest digit pattern for four runs; returns (digit, is_g, error).
fn classify(runs: &[Run], left: bool) -> (u8, bool, f64) {
    let total: usize = runs.iter().map(|r| r.len).sum();
    let unit = total as f64 / 7.0;
    let mut best = (0u8, false, f64::INFINITY);
    for (digit, widths) in L_WIDTHS.iter().enumerate() {
        let sets: &[bool] = if left { &[false, true] } else { &[false] };
        for &g in sets {
            let mut w = *widths;
            if g {
                w.reverse();
            }
            let err: f64 = runs
                .iter()
                .zip(w)
                .map(|(r, m)| (r.len as f64 / unit - m as f64).abs())
                .sum();
            if err < best.2 {
                best = (digit as u8, g, err);
            }
        }
    }
    best
}

fn guard_ok(runs: &[Run], first_bar: bool, module: f64) -> bool {
    runs.iter().enumerate().all(|(i, r)| {
        r.bar == ((i % 2 == 0) == first_bar) && {
            let m = r.len as f64 / module;
            (0.5..=1.5 + GUARD_TOLERANCE).contains(&m)
        }
    })
}

fn decode_at(runs: &[Run], start: usize, module: f64) -> Result<DigitString, BarcodeError> {
    // 3 guard + 24 left + 5 centre + 24 right + 3 end
    if runs.len() < start + 59 {
        return Err(BarcodeError::PatternMismatch {
            digit: 1 + (runs.len().saturating_sub(start + 3)) / 4,
        });
    }
    let mut digits = [0u8; 13];
    let mut parity = [false; 6];
    let mut pos = start + 3;
    for i in 0..6 {
        let (d, g, err) = classify(&runs[pos..pos + 4], true);
        if runs[pos].bar || err > MAX_DIGIT_ERROR {
            return Err(BarcodeError::PatternMismatch { digit: i + 1 });
        }
        digits[i + 1] = d;
        parity[i] = g;
        pos += 4;
    }
    if !guard_ok(&runs[pos..pos + 5], false, module) {
        return Err(BarcodeError::BadGuard);
    }
    pos += 5;
    for i in 0..6 {
        let (d, _, err) = classify(&runs[pos..pos + 4], false);
        if !runs[pos].bar || err > MAX_DIGIT_ERROR {
            return Err(BarcodeError::PatternMismatch { digit: i + 7 });
        }
        digits[i + 7] = d;
        pos += 4;
    }
    if !guard_ok(&runs[pos..pos + 3], true, module) {
        return Err(BarcodeError::BadGuard);
    }
    digits[0] = PARITY
        .iter()
        .position(|p| *p == parity)
        .ok_or(BarcodeError::PatternMismatch { digit: 0 })? as u8;
    DigitString::from_digits(digits)
}

fn error_rank(e: &BarcodeError) -> u8 {
    match e {
        BarcodeError::BadChecksum => 3,
        BarcodeError::BadGuard => 2,
        BarcodeError::PatternMismatch { .. } => 1,
        _ => 0,
    }
}

fn decode_direction(line: &[u8]) -> Result<DigitString, BarcodeError> {
    let runs = run_lengths(line);
    let mut worst_case = BarcodeError::NoGuard;
    for (start, module) in guard_candidates(&runs) {
        match decode_at(&runs, start, module) {
            Ok(d) => return Ok(d),
            Err(e) if error_rank(&e) > error_rank(&worst_case) => worst_case = e,
            Err(_) => {}
        }
    }
    Err(worst_case)
}

/// Decodes one scanline, trying the reversed direction if the forward pass fails.
///
/// Never returns digits that fail the checksum.
pub fn decode_scanline(line: &Scanline) -> Result<DigitString, BarcodeError> {
    match decode_direction(&line.0) {
        Ok(d) => Ok(d),
        Err(forward) => match decode_direction(&line.reversed().0) {
            Ok(d) => Ok(d),
            Err(backward) if error_rank(&backward) > error_rank(&forward) => Err(backward),
            Err(_) => Err(forward),
        },
    }
}

/// Row fractions sampled by [`decode_image`], centre first.
pub const ROW_FRACTIONS: [f64; 9] = [0.5, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8, 0.1, 0.9];

/// Stretches contrast (1st-99th percentile), sharpens, then sweeps rows.
pub fn decode_image(frame: &ImageFrame) -> Result<DigitString, BarcodeError> {
    let stretched = contrast_stretch(frame, 1.0, 99.0).expect("constant percentiles are valid");
    let prepared = sharpen(&stretched);
    let h = prepared.height();
    ROW_FRACTIONS
        .iter()
        .map(|f| ((f * h as f64) as usize).min(h - 1))
        .find_map(|y| decode_scanline(&Scanline(prepared.row(y).to_vec())).ok())
        .ok_or(BarcodeError::NotFound)
}

/// Paints the scanline of `digits` into rows `rows` of a frame of `height` rows.
pub fn render_symbol(
    digits: &DigitString,
    module_px: usize,
    quiet_px: usize,
    height: usize,
    rows: std::ops::Range<usize>,
) -> Result<ImageFrame, BarcodeError> {
    let line = encode_scanline(digits, module_px, quiet_px)?;
    let width = line.0.len();
    let mut px = vec![255u8; width * height];
    for y in rows.filter(|&y| y < height) {
        px[y * width..(y + 1) * width].copy_from_slice(&line.0);
    }
    ImageFrame::new(width, height, px).map_err(|_| BarcodeError::BadGeometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(s: &str) -> DigitString {
        s.parse().unwrap()
    }

    /// Checksum straight from the definition: weights by 1-indexed position.
    fn checksum_oracle(s: &str) -> u8 {
        let (mut odd, mut even) = (0u32, 0u32);
        for (pos, c) in s.chars().enumerate().map(|(i, c)| (i + 1, c)) {
            let d = c.to_digit(10).unwrap();
            if pos % 2 == 1 {
                odd += d;
            } else {
                even += d;
            }
        }
        ((10 - (odd + 3 * even) % 10) % 10) as u8
    }

    #[test]
    fn checksum_examples() {
        assert_eq!(checksum_digit("000000000000"), Ok(0));
        assert_eq!(checksum_oracle("400638133393"), 1);
        assert_eq!(checksum_digit("400638133393"), Ok(1));
        assert_eq!(checksum_oracle("123456789012"), 8);
        assert_eq!(checksum_digit("123456789012"), Ok(8));
        assert!(checksum_digit("12345").is_err());
        assert!(checksum_digit("12345678901a").is_err());
    }

    #[test]
    fn digit_string_rejects_bad_checksum() {
        assert_eq!("4006381333932".parse::<DigitString>(), Err(BarcodeError::BadChecksum));
    }

    #[test]
    fn scanline_length() {
        let s = encode_scanline(&ds("4006381333931"), 1, 9).unwrap();
        assert_eq!(s.0.len(), 95 + 18);
        assert!(encode_scanline(&ds("4006381333931"), 2, 13).is_err());
    }

    /// Standard L/G/R bit patterns, as published, for an independent check.
    const L_BITS: [&str; 10] = [
        "0001101", "0011001", "0010011", "0111101", "0100011", "0110001", "0101111", "0111011",
        "0110111", "0001011",
    ];
    const G_BITS: [&str; 10] = [
        "0100111", "0110011", "0011011", "0100001", "0011101", "0111001", "0000101", "0010001",
        "0001001", "0010111",
    ];
    const R_BITS: [&str; 10] = [
        "1110010", "1100110", "1101100", "1000010", "1011100", "1001110", "1010000", "1000100",
        "1001000", "1110100",
    ];

    #[test]
    fn modules_match_published_tables() {
        let d = ds("5901234123457");
        let bits: String = symbol_modules(&d).iter().map(|&b| if b { '1' } else { '0' }).collect();
        let parity = "OEEOOE";
        let mut want = String::from("101");
        for (i, p) in parity.chars().enumerate() {
            let digit = d.digits()[i + 1] as usize;
            want += if p == 'O' { L_BITS[digit] } else { G_BITS[digit] };
        }
        want += "01010";
        for i in 7..13 {
            want += R_BITS[d.digits()[i] as usize];
        }
        want += "101";
        assert_eq!(bits, want);
    }

    #[test]
    fn leading_zero_is_all_l() {
        let d = ds("0012345678905");
        let bits: Vec<bool> = symbol_modules(&d);
        for i in 0..6 {
            let digit = d.digits()[i + 1] as usize;
            let got: String = bits[3 + 7 * i..3 + 7 * (i + 1)]
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            assert_eq!(got, L_BITS[digit]);
        }
    }

    #[test]
    fn decodes_known_symbol_both_ways() {
        let d = ds("4006381333931");
        let line = encode_scanline(&d, 3, 30).unwrap();
        assert_eq!(decode_scanline(&line), Ok(d));
        assert_eq!(decode_scanline(&line.reversed()), Ok(d));
    }

    #[test]
    fn flipped_bar_never_yields_wrong_digits() {
        let d = ds("4006381333931");
        let clean = encode_scanline(&d, 2, 20).unwrap();
        // flip every single module in turn; each result is an error or the original code
        for m in 0..95 {
            let mut line = clean.clone();
            for p in &mut line.0[20 + 2 * m..20 + 2 * m + 2] {
                *p = 255 - *p;
            }
            if let Ok(got) = decode_scanline(&line) {
                assert_eq!(got.digits()[12], checksum_of(&got.digits()[..12]));
            }
        }
    }

    #[test]
    fn checksum_gate() {
        // swap two right-half digits (same parity class): patterns decode, checksum fails
        let d = ds("4006381333931");
        let mut digits = *d.digits();
        digits.swap(7, 12);
        let mut bits = Vec::new();
        bits.extend([true, false, true]);
        let good = symbol_modules(&d);
        bits.extend_from_slice(&good[3..50]);
        for i in 7..13 {
            for (j, w) in L_WIDTHS[digits[i] as usize].iter().enumerate() {
                bits.extend(std::iter::repeat_n(j % 2 == 0, *w as usize));
            }
        }
        bits.extend([true, false, true]);
        let mut px = vec![255u8; 20];
        for b in bits {
            px.extend([if b { 0 } else { 255 }; 2]);
        }
        px.extend([255u8; 20]);
        assert_eq!(decode_scanline(&Scanline(px)), Err(BarcodeError::BadChecksum));
    }

    #[test]
    fn image_cases() {
        let d = ds("4006381333931");
        let full = render_symbol(&d, 2, 20, 40, 0..40).unwrap();
        assert_eq!(decode_image(&full), Ok(d));
        let blank = ImageFrame::filled(120, 40, 255).unwrap();
        assert_eq!(decode_image(&blank), Err(BarcodeError::NotFound));
        let top = render_symbol(&d, 2, 20, 50, 0..10).unwrap();
        assert_eq!(decode_image(&top), Ok(d));
    }

    fn arb_digits() -> impl Strategy<Value = DigitString> {
        proptest::array::uniform12(0u8..10).prop_map(|p| DigitString::with_checksum(p).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip(d in arb_digits(), module in 1usize..=6, reversed in any::<bool>()) {
            let line = encode_scanline(&d, module, 7 * module + 3).unwrap();
            let line = if reversed { line.reversed() } else { line };
            prop_assert_eq!(decode_scanline(&line), Ok(d));
        }

        #[test]
        fn random_lines_never_invalid(px in proptest::collection::vec(any::<u8>(), 0..400)) {
            if let Ok(d) = decode_scanline(&Scanline(px)) {
                prop_assert_eq!(d.digits()[12], checksum_of(&d.digits()[..12]));
            }
        }
    }
}
