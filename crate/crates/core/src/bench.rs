//! Latency benchmark: alternating scene and objects commands against a
//! gateway, summarised as median and 95th percentile.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::gateway::{frame_digest, FixtureEntry, FixtureSet};
use crate::imaging::ImageFrame;
use crate::orchestrator::{CommandTrace, Orchestrator, OVERHEAD_BUDGET_MS};
use crate::protocol::{KIND_OBJECTS, KIND_SCENE};
use crate::router::{IntentKind, Utterance};

pub const DEFAULT_COMMANDS: usize = 100;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("the gateway at {0} is unreachable")]
    GatewayUnreachable(String),
    #[error("command {utterance:?} did not reach a backend: {reply}")]
    CommandFailed { utterance: String, reply: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub commands: usize,
    pub median_total_ms: f64,
    pub p95_total_ms: f64,
    pub median_overhead_ms: f64,
    pub p95_overhead_ms: f64,
    pub overhead_budget_ms: f64,
}

/// Nearest-rank percentile of unsorted samples; `p` in (0, 100].
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    assert!(!samples.is_empty(), "percentile of no samples");
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

impl BenchSummary {
    pub fn from_traces(traces: &[CommandTrace]) -> Self {
        let totals: Vec<f64> = traces.iter().map(|t| t.total_ms).collect();
        let overheads: Vec<f64> = traces.iter().map(CommandTrace::overhead_ms).collect();
        Self {
            commands: traces.len(),
            median_total_ms: percentile(&totals, 50.0),
            p95_total_ms: percentile(&totals, 95.0),
            median_overhead_ms: percentile(&overheads, 50.0),
            p95_overhead_ms: percentile(&overheads, 95.0),
            overhead_budget_ms: OVERHEAD_BUDGET_MS,
        }
    }

    pub fn overhead_within_budget(&self) -> bool {
        self.median_overhead_ms <= self.overhead_budget_ms
    }

    pub fn render(&self) -> String {
        format!(
            "{:<10} {:>10} {:>10}\n{:<10} {:>10.2} {:>10.2}\n{:<10} {:>10.2} {:>10.2}\n\
             {} commands; median overhead {:.2} ms vs budget {:.0} ms: {}\n",
            "",
            "median",
            "p95",
            "total",
            self.median_total_ms,
            self.p95_total_ms,
            "overhead",
            self.median_overhead_ms,
            self.p95_overhead_ms,
            self.commands,
            self.median_overhead_ms,
            self.overhead_budget_ms,
            if self.overhead_within_budget() { "within budget" } else { "OVER BUDGET" }
        )
    }
}

/// Two synthetic frames with scene and objects fixtures at `latency_ms`.
pub fn bench_fixtures(latency_ms: u64) -> (FixtureSet, ImageFrame, ImageFrame) {
    let gradient = |w: usize, h: usize, phase: usize| {
        let px = (0..w * h).map(|i| ((i % w) * 4 + (i / w) * 2 + phase) as u8).collect();
        ImageFrame::new(w, h, px).expect("valid geometry")
    };
    let scene = gradient(64, 48, 0);
    let objects = gradient(64, 48, 7);
    let entries = vec![
        FixtureEntry {
            kind: KIND_SCENE.into(),
            digest: frame_digest(&scene),
            result: json!({"caption": "a hallway with a door at the end"}),
            latency_ms: Some(latency_ms),
        },
        FixtureEntry {
            kind: KIND_OBJECTS.into(),
            digest: frame_digest(&objects),
            result: json!({"detections": [
                {"label": "chair", "confidence": 0.91, "bbox": [0.05, 0.4, 0.3, 0.95]},
                {"label": "person", "confidence": 0.88, "bbox": [0.4, 0.1, 0.6, 0.9]}
            ]}),
            latency_ms: Some(latency_ms),
        },
    ];
    (FixtureSet::new(entries).expect("bench fixtures are valid"), scene, objects)
}

/// Wakes the session, then issues `commands` alternating scene and
/// objects commands. Only those commands are summarised.
pub fn run_bench(
    orchestrator: &mut Orchestrator,
    scene: &ImageFrame,
    objects: &ImageFrame,
    commands: usize,
) -> Result<(BenchSummary, Vec<CommandTrace>), BenchError> {
    if !orchestrator.status().server_reachable {
        return Err(BenchError::GatewayUnreachable(orchestrator.config().gateway.clone()));
    }
    let wake = orchestrator.router().wake_word.clone();
    orchestrator.handle_utterance(&Utterance::new(wake, None).expect("wake word is non-empty"));
    let mut traces = Vec::with_capacity(commands);
    for i in 0..commands {
        let (frame, text, kind) = if i % 2 == 0 {
            (scene, "what do you see", IntentKind::SceneDescribe)
        } else {
            (objects, "what is in front of me", IntentKind::ObjectsIdentify)
        };
        orchestrator.set_frame(Some(frame.clone()));
        let reply = orchestrator
            .handle_utterance(&Utterance::new(text, None).expect("non-empty"))
            .expect("active session always replies");
        if reply.trace.intent != kind || reply.trace.server_ms.is_none() {
            return Err(BenchError::CommandFailed {
                utterance: text.into(),
                reply: reply.text,
            });
        }
        traces.push(reply.trace);
    }
    if traces.is_empty() {
        return Err(BenchError::CommandFailed {
            utterance: String::new(),
            reply: "no commands requested".into(),
        });
    }
    Ok((BenchSummary::from_traces(&traces), traces))
}
