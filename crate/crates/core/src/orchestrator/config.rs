use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::face::DEFAULT_MATCH_THRESHOLD;
use crate::postproc::{DEFAULT_DETECTION_MIN_CONF, DEFAULT_OCR_MIN_CONF};
use crate::protocol::{DEFAULT_GATEWAY_ADDR, KIND_FACE, KIND_OBJECTS, KIND_OCR, KIND_SCENE};
use crate::router::IntentKind;

/// Where an intent's perception input comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// On the edge node. Perception intents use the edge fixture set.
    Local,
    /// From the gateway, as a request of the given kind.
    Remote(String),
}

/// Intent kinds the orchestrator dispatches to a module.
pub const DISPATCHABLE: [IntentKind; 10] = [
    IntentKind::StatusCheck,
    IntentKind::FaceIdentify,
    IntentKind::FaceEnroll,
    IntentKind::SceneDescribe,
    IntentKind::ReadText,
    IntentKind::ObjectsIdentify,
    IntentKind::CountMoney,
    IntentKind::NoteRecord,
    IntentKind::NoteRetrieve,
    IntentKind::BarcodeScan,
];

/// Perception kind an intent consumes, if any.
pub fn perception_kind(intent: IntentKind) -> Option<&'static str> {
    match intent {
        IntentKind::SceneDescribe => Some(KIND_SCENE),
        IntentKind::ObjectsIdentify => Some(KIND_OBJECTS),
        IntentKind::ReadText | IntentKind::CountMoney => Some(KIND_OCR),
        IntentKind::FaceIdentify | IntentKind::FaceEnroll => Some(KIND_FACE),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoutingTable(pub BTreeMap<IntentKind, Placement>);

impl Default for RoutingTable {
    fn default() -> Self {
        let mut t = BTreeMap::new();
        for kind in DISPATCHABLE {
            let placement = match kind {
                IntentKind::SceneDescribe => Placement::Remote(KIND_SCENE.into()),
                IntentKind::ObjectsIdentify => Placement::Remote(KIND_OBJECTS.into()),
                IntentKind::ReadText | IntentKind::CountMoney => Placement::Remote(KIND_OCR.into()),
                _ => Placement::Local,
            };
            t.insert(kind, placement);
        }
        Self(t)
    }
}

impl RoutingTable {
    pub fn get(&self, intent: IntentKind) -> Option<&Placement> {
        self.0.get(&intent)
    }

    /// Every dispatchable kind needs a placement, and only perception
    /// intents may be remote.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for kind in DISPATCHABLE {
            match (self.0.get(&kind), perception_kind(kind)) {
                (None, _) => return Err(ConfigError::MissingPlacement(kind)),
                (Some(Placement::Remote(_)), None) => return Err(ConfigError::NotRemotable(kind)),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("routing table has no placement for {0}")]
    MissingPlacement(IntentKind),
    #[error("{0} runs on the edge only")]
    NotRemotable(IntentKind),
    #[error("battery level {0} is outside 0-100")]
    BadBattery(u8),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn default_budgets() -> BTreeMap<String, f64> {
    // per-module response-time targets
    BTreeMap::from([
        (KIND_FACE.to_string(), 50.0),
        (KIND_OBJECTS.to_string(), 150.0),
        (KIND_SCENE.to_string(), 150.0),
        (KIND_OCR.to_string(), 150.0),
    ])
}

fn default_gateway() -> String {
    DEFAULT_GATEWAY_ADDR.to_string()
}

fn default_notes_dir() -> PathBuf {
    PathBuf::from("state/notes")
}

fn default_battery_env() -> String {
    "IRIS_BATTERY".to_string()
}

fn default_call_timeout() -> u64 {
    2000
}

fn default_status_timeout() -> u64 {
    500
}

fn default_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD
}

fn default_det_conf() -> f64 {
    DEFAULT_DETECTION_MIN_CONF
}

fn default_ocr_conf() -> f64 {
    DEFAULT_OCR_MIN_CONF
}

/// Edge node configuration. Relative paths in a loaded file resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorConfig {
    #[serde(default)]
    pub router_config: Option<PathBuf>,
    /// Overrides the wake word of the router config.
    #[serde(default)]
    pub wake_word: Option<String>,
    #[serde(default)]
    pub routing: RoutingTable,
    #[serde(default = "default_gateway")]
    pub gateway: String,
    #[serde(default = "default_notes_dir")]
    pub notes_dir: PathBuf,
    /// Face registry file; in memory only when absent.
    #[serde(default)]
    pub registry_path: Option<PathBuf>,
    #[serde(default)]
    pub catalog_path: Option<PathBuf>,
    /// Base URL of an optional product lookup service.
    #[serde(default)]
    pub remote_catalog: Option<String>,
    /// Fixture file backing locally placed perception intents.
    #[serde(default)]
    pub fixtures_path: Option<PathBuf>,
    /// Per-kind latency overrides for the edge fixture backend.
    #[serde(default)]
    pub local_latency_ms: BTreeMap<String, u64>,
    #[serde(default)]
    pub currency_config: Option<PathBuf>,
    #[serde(default = "default_budgets")]
    pub budgets_ms: BTreeMap<String, f64>,
    #[serde(default)]
    pub battery_pct: Option<u8>,
    /// Environment variable consulted before `battery_pct`.
    #[serde(default = "default_battery_env")]
    pub battery_env: String,
    #[serde(default = "default_call_timeout")]
    pub call_timeout_ms: u64,
    #[serde(default = "default_status_timeout")]
    pub status_timeout_ms: u64,
    #[serde(default = "default_threshold")]
    pub face_threshold: f64,
    #[serde(default = "default_det_conf")]
    pub detection_min_conf: f64,
    #[serde(default = "default_ocr_conf")]
    pub ocr_min_conf: f64,
    #[serde(default)]
    pub transcript_log: Option<PathBuf>,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl OrchestratorConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.notes_dir);
        for p in [
            &mut self.router_config,
            &mut self.registry_path,
            &mut self.catalog_path,
            &mut self.fixtures_path,
            &mut self.currency_config,
            &mut self.transcript_log,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.routing.validate()?;
        match self.battery_pct {
            Some(b) if b > 100 => Err(ConfigError::BadBattery(b)),
            _ => Ok(()),
        }
    }

    pub fn budget_for(&self, intent: IntentKind) -> Option<f64> {
        perception_kind(intent).and_then(|k| self.budgets_ms.get(k).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_intent() {
        let cfg = OrchestratorConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.routing.get(IntentKind::SceneDescribe), Some(&Placement::Remote("scene".into())));
        assert_eq!(cfg.routing.get(IntentKind::FaceIdentify), Some(&Placement::Local));
        assert_eq!(cfg.routing.get(IntentKind::CountMoney), Some(&Placement::Remote("ocr".into())));
        assert_eq!(cfg.budget_for(IntentKind::FaceIdentify), Some(50.0));
        assert_eq!(cfg.budget_for(IntentKind::NoteRecord), None);
    }

    #[test]
    fn routing_rules() {
        let mut t = RoutingTable::default();
        t.0.insert(IntentKind::BarcodeScan, Placement::Remote("ocr".into()));
        assert!(matches!(t.validate(), Err(ConfigError::NotRemotable(IntentKind::BarcodeScan))));
        let mut t = RoutingTable::default();
        t.0.remove(&IntentKind::ReadText);
        assert!(matches!(t.validate(), Err(ConfigError::MissingPlacement(IntentKind::ReadText))));
    }

    #[test]
    fn routing_json_shape() {
        let t = RoutingTable::default();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["SceneDescribe"], serde_json::json!({"remote": "scene"}));
        assert_eq!(v["BarcodeScan"], serde_json::json!("local"));
    }

    #[test]
    fn load_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edge.json");
        std::fs::write(&path, r#"{"notes_dir": "n", "catalog_path": "/abs/c.csv", "battery_pct": 70}"#).unwrap();
        let cfg = OrchestratorConfig::load(&path).unwrap();
        assert_eq!(cfg.notes_dir, dir.path().join("n"));
        assert_eq!(cfg.catalog_path, Some(PathBuf::from("/abs/c.csv")));
        assert_eq!(cfg.battery_pct, Some(70));
        std::fs::write(&path, r#"{"battery_pct": 170}"#).unwrap();
        assert!(matches!(OrchestratorConfig::load(&path), Err(ConfigError::BadBattery(170))));
        std::fs::write(&path, r#"{"gateway_addr": "x"}"#).unwrap();
        assert!(matches!(OrchestratorConfig::load(&path), Err(ConfigError::Parse { .. })));
    }
}
