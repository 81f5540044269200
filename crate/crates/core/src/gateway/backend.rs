use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::fixtures::{image_digest, FixtureEntry, FixtureSet};
use crate::protocol::{
    ErrorBody, PerceptionRequest, PerceptionResponse, KIND_FACE, KIND_HEALTH, KIND_OBJECTS,
    KIND_OCR, KIND_SCENE, PROTOCOL_VERSION,
};

/// Kinds served by a fixture backend unless configured otherwise.
pub const PERCEPTION_KINDS: [&str; 4] = [KIND_SCENE, KIND_OBJECTS, KIND_OCR, KIND_FACE];

/// Simulated model latency per kind, in milliseconds.
pub fn default_latency_ms(kind: &str) -> u64 {
    match kind {
        KIND_OBJECTS | KIND_SCENE | KIND_OCR => 150,
        KIND_FACE => 50,
        _ => 0,
    }
}

pub fn error_body(code: &str, message: impl Into<String>) -> ErrorBody {
    ErrorBody {
        code: code.to_string(),
        message: message.into(),
    }
}

/// One perception implementation. `digest` is the hex SHA-256 of the
/// request's canonical image bytes.
pub trait Backend: Send + Sync {
    fn dispatch(&self, request: &PerceptionRequest, digest: &str) -> Result<(Value, f64), ErrorBody>;
}

/// Content-addressed canned results with simulated latency.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    entries: HashMap<(String, String), FixtureEntry>,
    forced_latency: BTreeMap<String, u64>,
}

impl FixtureBackend {
    pub fn new(set: &FixtureSet) -> Self {
        Self {
            entries: set
                .entries()
                .iter()
                .map(|e| ((e.kind.clone(), e.digest.clone()), e.clone()))
                .collect(),
            forced_latency: BTreeMap::new(),
        }
    }

    /// Overrides the latency of `kind`, including per-entry values.
    pub fn with_latency(mut self, kind: &str, ms: u64) -> Self {
        self.forced_latency.insert(kind.to_string(), ms);
        self
    }

    pub fn with_uniform_latency(mut self, ms: u64) -> Self {
        for kind in PERCEPTION_KINDS {
            self.forced_latency.insert(kind.to_string(), ms);
        }
        self
    }

    pub fn latency_for(&self, entry: &FixtureEntry) -> u64 {
        self.forced_latency
            .get(&entry.kind)
            .copied()
            .or(entry.latency_ms)
            .unwrap_or_else(|| default_latency_ms(&entry.kind))
    }

    pub fn lookup(&self, kind: &str, digest: &str) -> Option<&FixtureEntry> {
        self.entries.get(&(kind.to_string(), digest.to_string()))
    }
}

impl Backend for FixtureBackend {
    fn dispatch(&self, request: &PerceptionRequest, digest: &str) -> Result<(Value, f64), ErrorBody> {
        let start = Instant::now();
        let entry = self.lookup(&request.kind, digest).ok_or_else(|| {
            error_body(
                "no_fixture",
                format!("no {} fixture for digest {digest}", request.kind),
            )
        })?;
        let latency = self.latency_for(entry);
        if latency > 0 {
            std::thread::sleep(Duration::from_millis(latency));
        }
        Ok((entry.result.clone(), start.elapsed().as_secs_f64() * 1000.0))
    }
}

/// Forwards requests to an HTTP upstream as `POST {base}/v1/{kind}`.
#[derive(Debug)]
pub struct HttpProxyBackend {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpProxyBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }
}

impl Backend for HttpProxyBackend {
    fn dispatch(&self, request: &PerceptionRequest, _digest: &str) -> Result<(Value, f64), ErrorBody> {
        let start = Instant::now();
        let url = format!("{}/v1/{}", self.base_url, request.kind);
        let body = serde_json::to_string(request).expect("request serializes");
        let resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body.as_str());
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Err(error_body("upstream_unreachable", e.to_string())),
        };
        match resp.status().as_u16() {
            200 => {
                let value: Value = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| error_body("upstream_error", format!("bad upstream body: {e}")))?;
                Ok((value, start.elapsed().as_secs_f64() * 1000.0))
            }
            404 => Err(error_body("no_fixture", format!("upstream has no fixture for {url}"))),
            code => Err(error_body("upstream_error", format!("upstream returned HTTP {code}"))),
        }
    }
}

/// Maps perception kinds to backends. Health is answered by the registry.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn Backend>>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendRegistry")
            .field("kinds", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers one fixture backend for every perception kind.
    pub fn with_fixtures(backend: FixtureBackend) -> Self {
        let shared: Arc<dyn Backend> = Arc::new(backend);
        let mut reg = Self::new();
        for kind in PERCEPTION_KINDS {
            reg.backends.insert(kind.to_string(), shared.clone());
        }
        reg
    }

    /// Installs `backend` for `kind`, replacing any previous one.
    pub fn register(&mut self, kind: &str, backend: Arc<dyn Backend>) {
        assert_ne!(kind, KIND_HEALTH, "health is served by the gateway itself");
        self.backends.insert(kind.to_string(), backend);
    }

    pub fn kinds(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }

    pub fn dispatch(&self, request: &PerceptionRequest) -> PerceptionResponse {
        let id = request.id.clone();
        if request.v != PROTOCOL_VERSION {
            return PerceptionResponse::error(id, "bad_version", format!("unsupported version {}", request.v));
        }
        if request.id.is_empty() {
            return PerceptionResponse::error(id, "bad_request", "request id must be non-empty");
        }
        if request.kind == KIND_HEALTH {
            return PerceptionResponse::ok(id, json!({"status": "ok", "kinds": self.kinds()}), 0.0);
        }
        let Some(backend) = self.backends.get(&request.kind) else {
            return PerceptionResponse::error(id, "unknown_kind", format!("no backend for kind {:?}", request.kind));
        };
        let canonical = match request.decode_image() {
            None => return PerceptionResponse::error(id, "bad_request", "image is required"),
            Some(Err(e)) => return PerceptionResponse::error(id, "bad_image", e.to_string()),
            Some(Ok((_, canonical))) => canonical,
        };
        let digest = image_digest(&canonical);
        match backend.dispatch(request, &digest) {
            Ok((result, ms)) => PerceptionResponse::ok(id, result, ms),
            Err(e) => PerceptionResponse::error(id, &e.code, e.message),
        }
    }
}
