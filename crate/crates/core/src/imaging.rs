//! 8-bit grayscale frames, binary PGM I/O and the enhancement filters used
//! ahead of barcode and money decoding.
//!
//! Every pixel remap rounds half up so results are bit-exact across ports.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("not a binary PGM (expected magic P5)")]
    BadMagic,
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated PGM: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("invalid frame geometry {width}x{height} for {len} pixels")]
    BadGeometry { width: usize, height: usize, len: usize },
    #[error("invalid percentiles low={low} high={high}")]
    InvalidPercentiles { low: f64, high: f64 },
    #[error("scaling produces an empty frame")]
    DegenerateOutput,
}

/// Row-major 8-bit luminance raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(ImagingError::BadGeometry {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn histogram(&self) -> [u64; 256] {
        histogram(&self.pixels)
    }

    fn map_pixels(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}

pub fn histogram(values: &[u8]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    hist
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32, ImagingError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImagingError::BadHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(ImagingError::BadHeader(what))
    }
}

/// Parses a binary (P5) PGM with maxval 255. Header comments are skipped.
pub fn load_pgm(bytes: &[u8]) -> Result<ImageFrame, ImagingError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImagingError::BadMagic);
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImagingError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImagingError::BadHeader("missing separator after maxval")),
    }
    let expected = width
        .checked_mul(height)
        .ok_or(ImagingError::BadHeader("dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(ImagingError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    ImageFrame::new(width, height, payload[..expected].to_vec())
}

/// Writes the canonical `P5\n{w} {h}\n255\n` header followed by raw pixels.
pub fn save_pgm(frame: &ImageFrame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", frame.width, frame.height);
    let mut out = Vec::with_capacity(header.len() + frame.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&frame.pixels);
    out
}

/// Otsu level over a 256-bin histogram.
///
/// Returns `None` when fewer than two levels are populated. Pixels strictly
/// below the returned level belong to the dark class. When several cut
/// points share the maximal between-class variance (empty bins between the
/// classes), the level is centred in the gap.
pub fn otsu_level(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let (mut w0, mut s0) = (0u64, 0f64);
    let mut best: Option<(f64, usize)> = None;
    for t in 1..256 {
        w0 += hist[t - 1];
        s0 += (t - 1) as f64 * hist[t - 1] as f64;
        if w0 == 0 || w0 == total || hist[t - 1] == 0 {
            // an empty bin does not change the partition; skip duplicates
            continue;
        }
        let w1 = total - w0;
        let diff = total as f64 * s0 - w0 as f64 * sum;
        let var = diff * diff / (w0 as f64 * w1 as f64);
        if best.is_none_or(|(b, _)| var > b) {
            best = Some((var, t - 1));
        }
    }
    let (_, last_dark) = best?;
    let first_light = (last_dark + 1..256).find(|&v| hist[v] > 0)?;
    Some(((last_dark + 1 + first_light) / 2) as u8)
}

/// Binarizes with Otsu's level: below → 0, otherwise 255. A frame holding
/// a single grey level becomes all background (255).
pub fn otsu_threshold(frame: &ImageFrame) -> ImageFrame {
    match otsu_level(&frame.histogram()) {
        Some(t) => frame.map_pixels(|p| if p < t { 0 } else { 255 }),
        None => frame.map_pixels(|_| 255),
    }
}

fn percentile_values(hist: &[u64; 256], low_pct: f64, high_pct: f64) -> (u8, u8) {
    let total = hist.iter().sum::<u64>() as f64;
    let lo_target = low_pct / 100.0 * total;
    let hi_target = high_pct / 100.0 * total;
    let (mut lo, mut hi) = (None, None);
    let mut cum = 0f64;
    for (v, &c) in hist.iter().enumerate() {
        cum += c as f64;
        if lo.is_none() && cum > lo_target {
            lo = Some(v as u8);
        }
        if hi.is_none() && cum >= hi_target && cum > 0.0 {
            hi = Some(v as u8);
        }
    }
    (lo.unwrap_or(255), hi.unwrap_or(255))
}

/// Linear stretch of the `[low_pct, high_pct]` percentile range onto `[0, 255]`.
pub fn contrast_stretch(
    frame: &ImageFrame,
    low_pct: f64,
    high_pct: f64,
) -> Result<ImageFrame, ImagingError> {
    let valid = (0.0..=50.0).contains(&low_pct)
        && (50.0..=100.0).contains(&high_pct)
        && low_pct < high_pct;
    if !valid {
        return Err(ImagingError::InvalidPercentiles {
            low: low_pct,
            high: high_pct,
        });
    }
    let (lo, hi) = percentile_values(&frame.histogram(), low_pct, high_pct);
    if lo >= hi {
        return Ok(frame.clone());
    }
    let (lo, span) = (lo as u32, (hi - lo) as u32);
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let v = v as u32;
        *slot = if v <= lo {
            0
        } else if v >= lo + span {
            255
        } else {
            // round half up of (v - lo) * 255 / span
            (((v - lo) * 255 * 2 + span) / (2 * span)) as u8
        };
    }
    Ok(frame.map_pixels(|p| lut[p as usize]))
}

/// 3x3 sharpening kernel `[[0,-1,0],[-1,5,-1],[0,-1,0]]` with replicated borders.
pub fn sharpen(frame: &ImageFrame) -> ImageFrame {
    let (w, h) = (frame.width, frame.height);
    let mut out = Vec::with_capacity(frame.pixels.len());
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let acc = 5 * frame.get(x, y) as i32
                - frame.get(x, up) as i32
                - frame.get(x, down) as i32
                - frame.get(left, y) as i32
                - frame.get(right, y) as i32;
            out.push(acc.clamp(0, 255) as u8);
        }
    }
    ImageFrame {
        width: w,
        height: h,
        pixels: out,
    }
}

/// Nearest-neighbour resampling by `num/den`; output is `floor(dim * num / den)`.
pub fn scale_nearest(frame: &ImageFrame, num: u32, den: u32) -> Result<ImageFrame, ImagingError> {
    if num == 0 || den == 0 {
        return Err(ImagingError::DegenerateOutput);
    }
    let (num, den) = (num as u64, den as u64);
    let ow = (frame.width as u64 * num / den) as usize;
    let oh = (frame.height as u64 * num / den) as usize;
    if ow == 0 || oh == 0 {
        return Err(ImagingError::DegenerateOutput);
    }
    let src = |o: usize, limit: usize| ((o as u64 * den / num) as usize).min(limit - 1);
    let xs: Vec<usize> = (0..ow).map(|x| src(x, frame.width)).collect();
    let mut pixels = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let row = frame.row(src(y, frame.height));
        pixels.extend(xs.iter().map(|&x| row[x]));
    }
    ImageFrame::new(ow, oh, pixels)
}
