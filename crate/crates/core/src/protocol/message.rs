use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::imaging::{load_pgm, save_pgm, ImageFrame, ImagingError};
use crate::postproc::{Detection, OcrLine};

pub const PROTOCOL_VERSION: u32 = 1;

pub const KIND_SCENE: &str = "scene";
pub const KIND_OBJECTS: &str = "objects";
pub const KIND_OCR: &str = "ocr";
pub const KIND_HEALTH: &str = "health";
/// Face embedding extraction; served like the other perception kinds.
pub const KIND_FACE: &str = "face";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRequest {
    pub v: u32,
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl PerceptionRequest {
    pub fn health(id: impl Into<String>) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id: id.into(),
            kind: KIND_HEALTH.to_string(),
            image: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_frame(id: impl Into<String>, kind: impl Into<String>, frame: &ImageFrame) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id: id.into(),
            kind: kind.into(),
            image: Some(BASE64.encode(save_pgm(frame))),
            params: BTreeMap::new(),
        }
    }

    /// Decodes the embedded image into canonical PGM bytes and its frame.
    pub fn decode_image(&self) -> Option<Result<(ImageFrame, Vec<u8>), ImageDecodeError>> {
        self.image.as_ref().map(|b64| {
            let raw = BASE64
                .decode(b64.as_bytes())
                .map_err(|_| ImageDecodeError::Base64)?;
            let frame = load_pgm(&raw).map_err(ImageDecodeError::Pgm)?;
            let canonical = save_pgm(&frame);
            Ok((frame, canonical))
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImageDecodeError {
    #[error("image is not valid base64")]
    Base64,
    #[error("image is not a valid PGM: {0}")]
    Pgm(ImagingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionResponse {
    pub v: u32,
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub backend_ms: f64,
}

impl PerceptionResponse {
    pub fn ok(id: impl Into<String>, result: Value, backend_ms: f64) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id: id.into(),
            status: Status::Ok,
            result: Some(result),
            error: None,
            backend_ms,
        }
    }

    pub fn error(id: impl Into<String>, code: &str, message: impl Into<String>) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id: id.into(),
            status: Status::Error,
            result: None,
            error: Some(ErrorBody {
                code: code.to_string(),
                message: message.into(),
            }),
            backend_ms: 0.0,
        }
    }

    /// Exactly one of `result`/`error` is present, matching `status`.
    pub fn is_well_formed(&self) -> bool {
        match self.status {
            Status::Ok => self.result.is_some() && self.error.is_none(),
            Status::Error => self.result.is_none() && self.error.is_some(),
        }
    }

    pub fn error_code(&self) -> Option<&str> {
        self.error.as_ref().map(|e| e.code.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneResult {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectsResult {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrResult {
    pub lines: Vec<OcrLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceResult {
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResult {
    pub status: String,
    pub kinds: Vec<String>,
}

/// Checks a result object against the schema of its perception kind.
pub fn validate_result(kind: &str, result: &Value) -> Result<(), String> {
    fn check<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
        T::deserialize(v).map_err(|e| e.to_string())
    }
    match kind {
        KIND_SCENE => {
            let r: SceneResult = check(result)?;
            if r.caption.trim().is_empty() {
                return Err("caption must be non-empty".into());
            }
        }
        KIND_OBJECTS => {
            let r: ObjectsResult = check(result)?;
            for (i, d) in r.detections.iter().enumerate() {
                d.validate().map_err(|e| format!("detections[{i}]: {e}"))?;
            }
        }
        KIND_OCR => {
            let r: OcrResult = check(result)?;
            for (i, l) in r.lines.iter().enumerate() {
                l.validate().map_err(|e| format!("lines[{i}]: {e}"))?;
            }
        }
        KIND_FACE => {
            let r: FaceResult = check(result)?;
            crate::face::FaceEmbedding::new(r.embedding).map_err(|e| e.to_string())?;
        }
        KIND_HEALTH => {
            check::<HealthResult>(result)?;
        }
        other => return Err(format!("unknown kind {other:?}")),
    }
    Ok(())
}
