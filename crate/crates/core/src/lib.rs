//! Assistive-vision edge node and perception gateway.
//!
//! The edge side routes spoken commands to local modules (face registry,
//! barcode, money, notes) or to a remote gateway (scene, objects, OCR) and
//! composes the spoken reply.

pub mod barcode;
pub mod bench;
pub mod face;
pub mod gateway;
pub mod imaging;
pub mod money;
pub mod notes;
pub mod orchestrator;
pub mod postproc;
pub mod protocol;
pub mod router;
pub mod scenario;
pub mod speech;
