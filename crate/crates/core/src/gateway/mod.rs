//! Server side: accepts framed perception requests and dispatches them to
//! the backend registered for each kind.

mod backend;
mod fixtures;
mod server;

pub use backend::{
    default_latency_ms, error_body, Backend, BackendRegistry, FixtureBackend, HttpProxyBackend,
    PERCEPTION_KINDS,
};
pub use fixtures::{
    frame_digest, image_digest, validate_entries, FixtureEntry, FixtureError, FixtureSet,
};
pub use server::{serve, GatewayError, GatewayHandle};
