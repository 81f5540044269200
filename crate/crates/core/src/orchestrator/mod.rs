//! Edge session: wake-word state machine, per-intent dispatch to local
//! modules or the gateway, spoken reply composition and timing traces.

mod config;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barcode::{self, Catalog, CatalogError, RemoteCatalog};
use crate::face::{FaceEmbedding, FaceError, FaceRegistry, MatchResult};
use crate::gateway::{BackendRegistry, FixtureBackend, FixtureError, FixtureSet};
use crate::imaging::ImageFrame;
use crate::money::{self, CurrencyConfig};
use crate::notes::{NoteError, NoteStore};
use crate::postproc::{
    caption_to_sentence, detections_to_sentence, ocr_reading_order, plural, summarize_detections,
    Caption,
};
use crate::protocol::{
    validate_result, FaceResult, GatewayClient, ObjectsResult, OcrResult, PerceptionRequest,
    SceneResult, Status,
};
use crate::router::{
    find_phrase, normalize, person_name_after_cue, route, title_case_words, Intent, IntentKind,
    RouterConfig, RouterConfigError, Utterance, SLOT_CATEGORY, SLOT_PERSON_NAME,
};
use crate::speech::{SpeechError, SpokenOutput, TranscriptSource};

pub use config::{perception_kind, ConfigError, OrchestratorConfig, Placement, RoutingTable, DISPATCHABLE};

/// Orchestrator time allowed on top of the backend, per command.
pub const OVERHEAD_BUDGET_MS: f64 = 10.0;

pub const GREETING: &str = "Hello, I am ready.";
pub const FAREWELL: &str = "Goodbye.";
pub const NOT_UNDERSTOOD: &str = "I did not understand.";
pub const UNREACHABLE: &str = "I could not reach the vision server.";
pub const UNKNOWN_FACE: &str =
    "I don't recognize this person. Say 'this is' and their name to enroll.";
pub const ASK_NOTE: &str = "What should I write down?";

#[derive(Debug, Clone, PartialEq)]
pub enum SessionState {
    Dormant,
    Active,
    /// An unknown face was seen; the next utterance names it.
    AwaitingEnrollName(FaceEmbedding),
    /// The next utterance is the body of a note in this category.
    AwaitingNoteBody(String),
}

impl SessionState {
    pub fn is_awaiting(&self) -> bool {
        matches!(self, Self::AwaitingEnrollName(_) | Self::AwaitingNoteBody(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTrace {
    pub utterance: String,
    pub intent: IntentKind,
    pub route_ms: f64,
    /// Module and gateway work, as seen from the edge.
    pub backend_ms: f64,
    pub compose_ms: f64,
    pub total_ms: f64,
    /// `backend_ms` reported by the gateway or edge backend, if one ran.
    pub server_ms: Option<f64>,
    pub budget_ms: Option<f64>,
}

impl CommandTrace {
    pub fn overhead_ms(&self) -> f64 {
        self.total_ms - self.backend_ms
    }

    /// Whether the command finished within its module budget plus the
    /// orchestrator allowance. `None` for commands without a budget.
    pub fn within_budget(&self) -> Option<bool> {
        self.budget_ms
            .map(|b| self.total_ms <= b + OVERHEAD_BUDGET_MS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStatus {
    pub battery_pct: u8,
    pub server_reachable: bool,
}

impl DeviceStatus {
    pub fn sentence(&self) -> String {
        if self.server_reachable {
            format!(
                "Your battery is at {} percent and the vision server is reachable.",
                self.battery_pct
            )
        } else {
            format!(
                "Your battery is at {} percent. Warning: I cannot reach the vision server.",
                self.battery_pct
            )
        }
    }
}

/// Battery level from the configured environment variable, then the
/// config value, then 100. Unparseable or out-of-range values are skipped.
pub fn battery_level(config: &OrchestratorConfig) -> u8 {
    if let Ok(raw) = std::env::var(&config.battery_env) {
        match raw.trim().parse::<u8>() {
            Ok(v) if v <= 100 => return v,
            _ => log::warn!("ignoring {}={raw:?}", config.battery_env),
        }
    }
    config.battery_pct.filter(|&b| b <= 100).unwrap_or(100)
}

pub fn status_check(client: &mut GatewayClient, config: &OrchestratorConfig) -> DeviceStatus {
    let timeout = Duration::from_millis(config.status_timeout_ms);
    let server_reachable = match client.health(timeout) {
        Ok(h) => h.status == "ok",
        Err(e) => {
            log::info!("health check failed: {e}");
            false
        }
    };
    DeviceStatus {
        battery_pct: battery_level(config),
        server_reachable,
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("router config: {0}")]
    Router(#[from] RouterConfigError),
    #[error("face registry: {0}")]
    Face(#[from] FaceError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("fixtures: {0}")]
    Fixtures(#[from] FixtureError),
    #[error("currency config {path}: {source}")]
    Currency { path: PathBuf, source: std::io::Error },
}

/// One spoken reply and the trace of the command that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    pub trace: CommandTrace,
}

/// What a routed utterance asks for, after the state machine has had its say.
enum Step {
    Wake,
    Command(Intent),
    EnrollName(FaceEmbedding),
    NoteBody(String),
}

/// Reasons a perception step produced no usable result.
#[derive(Debug)]
enum Fallback {
    NoFrame,
    Unreachable,
    Unavailable,
    Failed(String),
    BadResult(String),
}

impl Fallback {
    fn sentence(&self) -> &'static str {
        match self {
            Self::NoFrame => "I don't have a camera image to look at.",
            Self::Unreachable => UNREACHABLE,
            Self::Unavailable => "That feature is not available on this device.",
            Self::Failed(_) => "I could not process that image.",
            Self::BadResult(_) => "I received a result I could not understand.",
        }
    }
}

#[derive(Default)]
struct Timing {
    backend: Duration,
    server_ms: Option<f64>,
}

impl Timing {
    fn measure<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.backend += start.elapsed();
        out
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    router: RouterConfig,
    client: GatewayClient,
    /// Edge-side backends for locally placed perception intents.
    local: Option<BackendRegistry>,
    local_seq: u64,
    registry: FaceRegistry,
    notes: NoteStore,
    catalog: Catalog,
    remote_catalog: Option<RemoteCatalog>,
    currency: CurrencyConfig,
    frame: Option<ImageFrame>,
    state: SessionState,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("gateway", &self.config.gateway)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn from_config(config: OrchestratorConfig) -> Result<Self, SetupError> {
        config.validate()?;
        let mut router = match &config.router_config {
            Some(p) => RouterConfig::load(p)?,
            None => RouterConfig::default(),
        };
        if let Some(w) = &config.wake_word {
            router.wake_word = w.clone();
            router.validate()?;
        }
        let registry = match &config.registry_path {
            Some(p) => FaceRegistry::open(p)?,
            None => FaceRegistry::in_memory(),
        };
        let catalog = match &config.catalog_path {
            Some(p) => Catalog::load(p)?,
            None => Catalog::default(),
        };
        let local = match &config.fixtures_path {
            Some(p) => {
                let mut backend = FixtureBackend::new(&FixtureSet::load(p)?);
                for (kind, ms) in &config.local_latency_ms {
                    backend = backend.with_latency(kind, *ms);
                }
                Some(BackendRegistry::with_fixtures(backend))
            }
            None => None,
        };
        let currency = match &config.currency_config {
            Some(p) => CurrencyConfig::load(p).map_err(|source| SetupError::Currency {
                path: p.clone(),
                source,
            })?,
            None => CurrencyConfig::default(),
        };
        let remote_catalog = config.remote_catalog.as_ref().map(|url| RemoteCatalog {
            base_url: url.clone(),
            timeout: Duration::from_millis(config.call_timeout_ms),
        });
        Ok(Self {
            client: GatewayClient::new(config.gateway.clone()),
            notes: NoteStore::new(config.notes_dir.clone()),
            router,
            local,
            local_seq: 0,
            registry,
            catalog,
            remote_catalog,
            currency,
            frame: None,
            state: SessionState::Dormant,
            config,
        })
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn router(&self) -> &RouterConfig {
        &self.router
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn registry(&self) -> &FaceRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut FaceRegistry {
        &mut self.registry
    }

    pub fn notes(&self) -> &NoteStore {
        &self.notes
    }

    /// Sets the camera frame used by subsequent perception commands.
    pub fn set_frame(&mut self, frame: Option<ImageFrame>) {
        self.frame = frame;
    }

    pub fn frame(&self) -> Option<&ImageFrame> {
        self.frame.as_ref()
    }

    pub fn status(&mut self) -> DeviceStatus {
        status_check(&mut self.client, &self.config)
    }

    /// Processes one utterance. Dormant sessions ignore everything except
    /// the wake word and return `None`.
    pub fn handle_utterance(&mut self, utterance: &Utterance) -> Option<Reply> {
        let start = Instant::now();
        let tokens = normalize(&utterance.text);
        let step = match std::mem::replace(&mut self.state, SessionState::Active) {
            SessionState::Dormant => {
                if find_phrase(&tokens, &normalize(&self.router.wake_word)).is_none() {
                    self.state = SessionState::Dormant;
                    return None;
                }
                Step::Wake
            }
            SessionState::Active => Step::Command(route(utterance, &self.router)),
            SessionState::AwaitingEnrollName(e) => Step::EnrollName(e),
            SessionState::AwaitingNoteBody(c) => Step::NoteBody(c),
        };
        let route_ms = ms(start.elapsed());
        let mut timing = Timing::default();
        let intent = match &step {
            Step::Wake => IntentKind::Activate,
            Step::Command(i) => i.kind,
            Step::EnrollName(_) => IntentKind::FaceEnroll,
            Step::NoteBody(_) => IntentKind::NoteRecord,
        };
        let text = self.execute(step, &tokens, utterance, &mut timing);
        let total_ms = ms(start.elapsed());
        let backend_ms = ms(timing.backend);
        let trace = CommandTrace {
            utterance: utterance.text.clone(),
            intent,
            route_ms,
            backend_ms,
            compose_ms: (total_ms - route_ms - backend_ms).max(0.0),
            total_ms,
            server_ms: timing.server_ms,
            budget_ms: self.config.budget_for(intent),
        };
        Some(Reply { text, trace })
    }

    fn execute(&mut self, step: Step, tokens: &[String], utterance: &Utterance, timing: &mut Timing) -> String {
        match step {
            Step::Wake => {
                let status = timing.measure(|| self.status());
                format!("{GREETING} {}", status.sentence())
            }
            Step::EnrollName(embedding) => {
                let name = person_name_after_cue(tokens).unwrap_or_else(|| title_case_words(tokens));
                if name.is_empty() {
                    return "I did not catch a name, so I did not save this person.".into();
                }
                self.enroll(&name, embedding, timing)
            }
            Step::NoteBody(category) => {
                let saved = timing.measure(|| self.notes.record(&category, &utterance.text));
                match saved {
                    Ok(_) if category == "list" => "I added that to your list.".into(),
                    Ok(_) => format!("I saved that to your {}.", plural(&category)),
                    Err(NoteError::EmptyText) => "There was nothing to write down.".into(),
                    Err(e) => {
                        log::error!("note not saved: {e}");
                        "I could not save that note.".into()
                    }
                }
            }
            Step::Command(intent) => self.dispatch(intent, timing),
        }
    }

    fn dispatch(&mut self, intent: Intent, timing: &mut Timing) -> String {
        match intent.kind {
            IntentKind::Activate => "I am listening.".into(),
            IntentKind::StatusCheck => timing.measure(|| self.status()).sentence(),
            IntentKind::Shutdown => {
                self.state = SessionState::Dormant;
                FAREWELL.into()
            }
            IntentKind::Unknown => NOT_UNDERSTOOD.into(),
            IntentKind::SceneDescribe => {
                match self.perceive::<SceneResult>(IntentKind::SceneDescribe, timing) {
                    Ok(r) => match Caption::new(r.caption) {
                        Some(c) => caption_to_sentence(&c),
                        None => "I could not describe the scene.".into(),
                    },
                    Err(f) => self.fallback(f),
                }
            }
            IntentKind::ObjectsIdentify => {
                match self.perceive::<ObjectsResult>(IntentKind::ObjectsIdentify, timing) {
                    Ok(r) => detections_to_sentence(&summarize_detections(
                        &r.detections,
                        self.config.detection_min_conf,
                    )),
                    Err(f) => self.fallback(f),
                }
            }
            IntentKind::ReadText => match self.perceive::<OcrResult>(IntentKind::ReadText, timing) {
                Ok(r) => {
                    let text = ocr_reading_order(&r.lines, self.config.ocr_min_conf);
                    if text.trim().is_empty() {
                        "I could not find any text.".into()
                    } else {
                        text
                    }
                }
                Err(f) => self.fallback(f),
            },
            IntentKind::CountMoney => match self.perceive::<OcrResult>(IntentKind::CountMoney, timing) {
                Ok(r) => {
                    let tokens = money::tokens_from_lines(&r.lines);
                    let denoms = money::parse_denominations(&tokens, &self.currency);
                    money::describe(&money::aggregate(&denoms), &self.currency)
                }
                Err(f) => self.fallback(f),
            },
            IntentKind::FaceIdentify => match self.embedding(IntentKind::FaceIdentify, timing) {
                Ok(e) => {
                    let found = timing.measure(|| self.registry.identify(&e, self.config.face_threshold));
                    match found {
                        MatchResult::Known { display_name, .. } => format!("This is {display_name}."),
                        MatchResult::Unknown { .. } => {
                            self.state = SessionState::AwaitingEnrollName(e);
                            UNKNOWN_FACE.into()
                        }
                    }
                }
                Err(f) => self.fallback(f),
            },
            IntentKind::FaceEnroll => match self.embedding(IntentKind::FaceEnroll, timing) {
                Ok(e) => match intent.slot(SLOT_PERSON_NAME) {
                    Some(name) => self.enroll(&name.to_string(), e, timing),
                    None => {
                        self.state = SessionState::AwaitingEnrollName(e);
                        "What is this person's name?".into()
                    }
                },
                Err(f) => self.fallback(f),
            },
            IntentKind::BarcodeScan => self.scan_barcode(timing),
            IntentKind::NoteRecord => {
                let category = intent.slot(SLOT_CATEGORY).unwrap_or("note").to_string();
                self.state = SessionState::AwaitingNoteBody(category);
                ASK_NOTE.into()
            }
            IntentKind::NoteRetrieve => {
                let category = intent.slot(SLOT_CATEGORY).unwrap_or("note").to_string();
                match timing.measure(|| self.notes.list(&category)) {
                    Ok(notes) => describe_notes(&category, notes.iter().map(|n| n.text.as_str())),
                    Err(e) => {
                        log::error!("cannot list {category}: {e}");
                        "I could not read your notes.".into()
                    }
                }
            }
        }
    }

    fn fallback(&self, f: Fallback) -> String {
        match &f {
            Fallback::Failed(why) | Fallback::BadResult(why) => log::warn!("perception failed: {why}"),
            _ => {}
        }
        f.sentence().to_string()
    }

    fn enroll(&mut self, name: &str, embedding: FaceEmbedding, timing: &mut Timing) -> String {
        match timing.measure(|| self.registry.enroll(name, embedding)) {
            Ok(_) => format!("I will remember {name}."),
            Err(e) => {
                log::error!("enrollment failed: {e}");
                "I could not save this person.".into()
            }
        }
    }

    fn scan_barcode(&mut self, timing: &mut Timing) -> String {
        let Some(frame) = &self.frame else {
            return Fallback::NoFrame.sentence().into();
        };
        let (catalog, remote) = (&self.catalog, self.remote_catalog.as_ref());
        let found = timing.measure(|| {
            barcode::decode_image(frame).map(|d| (d, barcode::lookup(&d, catalog, remote)))
        });
        match found {
            Ok((_, barcode::LookupOutcome { product: Some(p), .. })) => match p.price_text() {
                Some(price) => format!("That is {}, {price}.", p.name),
                None => format!("That is {}.", p.name),
            },
            Ok((digits, _)) => format!("Product not in my catalog. The barcode reads {digits}."),
            Err(e) => {
                log::info!("no barcode: {e}");
                "I could not find a barcode.".into()
            }
        }
    }

    fn embedding(&mut self, intent: IntentKind, timing: &mut Timing) -> Result<FaceEmbedding, Fallback> {
        let r: FaceResult = self.perceive(intent, timing)?;
        FaceEmbedding::new(r.embedding).map_err(|e| Fallback::BadResult(e.to_string()))
    }

    /// Fetches the perception result for `intent` on the current frame from
    /// wherever the routing table places it.
    fn perceive<T: DeserializeOwned>(&mut self, intent: IntentKind, timing: &mut Timing) -> Result<T, Fallback> {
        let frame = self.frame.as_ref().ok_or(Fallback::NoFrame)?;
        let natural = perception_kind(intent).expect("perception intent");
        let placement = self.config.routing.get(intent).cloned().unwrap_or(Placement::Local);
        let (kind, response) = match placement {
            Placement::Remote(kind) => {
                let request = PerceptionRequest::with_frame(self.client.next_id(), kind.as_str(), frame);
                let timeout = Duration::from_millis(self.config.call_timeout_ms);
                let client = &mut self.client;
                let resp = timing.measure(|| client.call(&request, timeout)).map_err(|e| {
                    log::warn!("gateway call failed: {e}");
                    Fallback::Unreachable
                })?;
                (kind, resp)
            }
            Placement::Local => {
                let local = self.local.as_ref().ok_or(Fallback::Unavailable)?;
                self.local_seq += 1;
                let request = PerceptionRequest::with_frame(format!("edge-{}", self.local_seq), natural, frame);
                (natural.to_string(), timing.measure(|| local.dispatch(&request)))
            }
        };
        *timing.server_ms.get_or_insert(0.0) += response.backend_ms;
        if response.status == Status::Error {
            let err = response.error.map(|e| format!("{}: {}", e.code, e.message));
            return Err(Fallback::Failed(err.unwrap_or_default()));
        }
        let value = response.result.unwrap_or_default();
        validate_result(&kind, &value).map_err(Fallback::BadResult)?;
        serde_json::from_value(value).map_err(|e| Fallback::BadResult(e.to_string()))
    }
}

fn describe_notes<'a>(category: &str, texts: impl ExactSizeIterator<Item = &'a str>) -> String {
    let n = texts.len();
    let what = if category == "list" {
        "items on your list".to_string()
    } else {
        plural(category)
    };
    if n == 0 {
        return format!("You have no {what}.");
    }
    let noun = match (category, n) {
        ("list", 1) => "item on your list".to_string(),
        (c, 1) => c.to_string(),
        _ => what,
    };
    let body: Vec<&str> = texts.collect();
    format!("You have {} {noun}: {}.", money::count_word(n as u32), body.join("; "))
}

/// Result of driving a session from a transcript source.
#[derive(Debug, Default)]
pub struct SessionRun {
    pub spoken: Vec<String>,
    pub traces: Vec<CommandTrace>,
    /// Set when input or output failed; everything before it is kept.
    pub error: Option<SpeechError>,
}

/// Feeds utterances to the orchestrator until the source runs dry or the
/// user shuts the session down.
pub fn run_session(orchestrator: &mut Orchestrator, source: &mut TranscriptSource, sink: &mut SpokenOutput) -> SessionRun {
    let mut run = SessionRun::default();
    loop {
        let utterance = match source.next_utterance() {
            Ok(Some(u)) => u,
            Ok(None) => break,
            Err(e) => {
                run.error = Some(e);
                break;
            }
        };
        if let Err(e) = sink.heard(&utterance.text) {
            run.error = Some(e);
            break;
        }
        let Some(reply) = orchestrator.handle_utterance(&utterance) else {
            continue;
        };
        let shutdown = reply.trace.intent == IntentKind::Shutdown;
        run.traces.push(reply.trace);
        if let Err(e) = sink.speak(&reply.text) {
            run.error = Some(e);
            break;
        }
        if shutdown {
            break;
        }
    }
    run.spoken = sink.lines().to_vec();
    run
}
