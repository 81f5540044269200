//! Edge-to-server wire protocol: length-prefixed JSON frames over TCP.

mod client;
mod framing;
mod message;

pub use client::{CallError, GatewayClient};
pub use framing::{decode_frame, encode_frame, read_frame, write_frame, FrameError, MAX_FRAME_LEN};
pub use message::{
    validate_result, ErrorBody, FaceResult, HealthResult, ImageDecodeError, ObjectsResult,
    OcrResult, PerceptionRequest, PerceptionResponse, SceneResult, Status, KIND_FACE,
    KIND_HEALTH, KIND_OBJECTS, KIND_OCR, KIND_SCENE, PROTOCOL_VERSION,
};

/// Default gateway address.
pub const DEFAULT_GATEWAY_ADDR: &str = "127.0.0.1:7601";
