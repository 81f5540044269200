use std::io::{self, Read, Write};

use thiserror::Error;

/// Largest payload a frame may carry.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    Oversize(u64),
    #[error("stream ended mid-frame")]
    Eof,
    #[error("payload is not valid UTF-8")]
    BadUtf8,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Length-prefixed frame: 4 big-endian length bytes, then the payload.
pub fn encode_frame(payload: &str) -> Result<Vec<u8>, FrameError> {
    let len = payload.len();
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversize(len as u64));
    }
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.extend_from_slice(payload.as_bytes());
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, payload: &str) -> Result<(), FrameError> {
    let bytes = encode_frame(payload)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, io::Error> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads one frame, tolerating arbitrarily small reads from the source.
///
/// Returns `Ok(None)` when the stream is closed cleanly at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<String>, FrameError> {
    let mut header = [0u8; 4];
    match fill(r, &mut header)? {
        0 => return Ok(None),
        4 => {}
        _ => return Err(FrameError::Eof),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversize(len as u64));
    }
    let mut payload = vec![0u8; len];
    if fill(r, &mut payload)? < len {
        return Err(FrameError::Eof);
    }
    String::from_utf8(payload)
        .map(Some)
        .map_err(|_| FrameError::BadUtf8)
}

/// Like [`read_frame`], but a stream that ends before any byte is also `Eof`.
pub fn decode_frame<R: Read>(r: &mut R) -> Result<String, FrameError> {
    read_frame(r)?.ok_or(FrameError::Eof)
}
