//! Scripted sessions: `U:` utterances, `IMG:` frames, `E:` expected
//! substrings of the next spoken reply.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tempfile::TempDir;
use thiserror::Error;

use crate::gateway::{serve, BackendRegistry, FixtureBackend, FixtureError, FixtureSet, GatewayError, GatewayHandle};
use crate::imaging::load_pgm;
use crate::orchestrator::{CommandTrace, Orchestrator, OrchestratorConfig, SetupError};
use crate::router::Utterance;
use crate::speech::SCRIPTED_CONFIDENCE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Say(String),
    Img(PathBuf),
    Expect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    /// Steps with their 1-based source line.
    pub steps: Vec<(usize, Step)>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read scenario {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Scenario {
    /// Parses scenario text. `IMG:` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| ScenarioError::Parse { line, message };
            let (directive, rest) = trimmed
                .split_once(':')
                .ok_or_else(|| err(format!("expected `U:`, `IMG:` or `E:`, got {trimmed:?}")))?;
            let arg = rest.trim();
            if arg.is_empty() {
                return Err(err(format!("`{directive}:` needs an argument")));
            }
            let step = match directive.trim() {
                "U" => Step::Say(arg.to_string()),
                "IMG" => Step::Img(base_dir.join(arg)),
                "E" => Step::Expect(arg.to_string()),
                other => return Err(err(format!("unknown directive {other:?}"))),
            };
            steps.push((line, step));
        }
        Ok(Self { steps })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub line: usize,
    pub step: Step,
    pub passed: bool,
    /// Spoken reply for `U:`, mismatch details for a failed step.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioReport {
    pub outcomes: Vec<StepOutcome>,
    pub spoken: Vec<String>,
    pub traces: Vec<CommandTrace>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    /// 0 when every step passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let mark = if o.passed { "ok  " } else { "FAIL" };
            let what = match &o.step {
                Step::Say(t) => format!("U: {t}"),
                Step::Img(p) => format!("IMG: {}", p.display()),
                Step::Expect(t) => format!("E: {t}"),
            };
            let _ = writeln!(out, "{mark} line {:>3}  {what}", o.line);
            if let Some(d) = &o.detail {
                let _ = writeln!(out, "          {d}");
            }
        }
        out.push('\n');
        out.push_str(&timing_table(&self.traces));
        let failed = self.outcomes.iter().filter(|o| !o.passed).count();
        let _ = writeln!(
            out,
            "{}: {} steps, {failed} failed",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.outcomes.len()
        );
        out
    }
}

pub fn timing_table(traces: &[CommandTrace]) -> String {
    let mut out = format!(
        "{:>3}  {:<16} {:>8} {:>9} {:>9} {:>8} {:>8}\n",
        "#", "intent", "route", "backend", "compose", "total", "budget"
    );
    for (i, t) in traces.iter().enumerate() {
        let budget = t.budget_ms.map(|b| format!("{b:.0}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>3}  {:<16} {:>8.2} {:>9.2} {:>9.2} {:>8.2} {:>8}",
            i + 1,
            t.intent.to_string(),
            t.route_ms,
            t.backend_ms,
            t.compose_ms,
            t.total_ms,
            budget
        );
    }
    out
}

/// Drives `orchestrator` through the scenario. Each `E:` consumes the
/// oldest reply not yet checked.
pub fn run_scenario(scenario: &Scenario, orchestrator: &mut Orchestrator) -> ScenarioReport {
    let mut report = ScenarioReport::default();
    let mut checked = 0usize;
    for (line, step) in &scenario.steps {
        let (passed, detail) = match step {
            Step::Say(text) => {
                let utterance = Utterance::new(text.clone(), Some(SCRIPTED_CONFIDENCE)).expect("parser rejects blank text");
                match orchestrator.handle_utterance(&utterance) {
                    Some(reply) => {
                        report.spoken.push(reply.text.clone());
                        report.traces.push(reply.trace);
                        (true, Some(format!("-> {}", reply.text)))
                    }
                    None => (true, Some("(no reply)".into())),
                }
            }
            Step::Img(path) => match std::fs::read(path).map_err(|e| e.to_string()).and_then(|b| load_pgm(&b).map_err(|e| e.to_string())) {
                Ok(frame) => {
                    orchestrator.set_frame(Some(frame));
                    (true, None)
                }
                Err(e) => (false, Some(format!("cannot load image: {e}"))),
            },
            Step::Expect(want) => match report.spoken.get(checked) {
                Some(actual) => {
                    checked += 1;
                    if actual.contains(want.as_str()) {
                        (true, None)
                    } else {
                        (false, Some(format!("expected substring {want:?}, actual {actual:?}")))
                    }
                }
                None => (false, Some(format!("expected substring {want:?}, but there is no reply left"))),
            },
        };
        report.outcomes.push(StepOutcome {
            line: *line,
            step: step.clone(),
            passed,
            detail,
        });
    }
    report
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("a self-contained run needs `fixtures_path` in the config")]
    NoFixtures,
    #[error(transparent)]
    Fixtures(#[from] FixtureError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("cannot create state directory: {0}")]
    State(std::io::Error),
}

/// Fresh state per run and, unless an external gateway is named, an
/// in-process gateway serving the configured fixtures on an ephemeral port.
pub struct Harness {
    config: OrchestratorConfig,
    state: TempDir,
    runs: usize,
    gateway: Option<GatewayHandle>,
}

impl Harness {
    pub fn new(mut config: OrchestratorConfig, external_gateway: Option<String>) -> Result<Self, HarnessError> {
        let gateway = match external_gateway {
            Some(addr) => {
                config.gateway = addr;
                None
            }
            None => {
                let path = config.fixtures_path.as_ref().ok_or(HarnessError::NoFixtures)?;
                let set = FixtureSet::load(path)?;
                return Self::serving(config, &set);
            }
        };
        Ok(Self {
            config,
            state: tempfile::tempdir().map_err(HarnessError::State)?,
            runs: 0,
            gateway,
        })
    }

    /// Starts an in-process gateway over `fixtures`.
    pub fn serving(mut config: OrchestratorConfig, fixtures: &FixtureSet) -> Result<Self, HarnessError> {
        let backend = FixtureBackend::new(fixtures);
        let handle = serve("127.0.0.1:0", Arc::new(BackendRegistry::with_fixtures(backend)))?;
        config.gateway = handle.local_addr().to_string();
        Ok(Self {
            config,
            state: tempfile::tempdir().map_err(HarnessError::State)?,
            runs: 0,
            gateway: Some(handle),
        })
    }

    pub fn gateway_addr(&self) -> &str {
        &self.config.gateway
    }

    pub fn is_self_contained(&self) -> bool {
        self.gateway.is_some()
    }

    /// An orchestrator with empty notes and face registry.
    pub fn orchestrator(&mut self) -> Result<Orchestrator, HarnessError> {
        self.runs += 1;
        let dir = self.state.path().join(format!("run-{}", self.runs));
        let mut config = self.config.clone();
        config.notes_dir = dir.join("notes");
        config.registry_path = Some(dir.join("faces.jsonl"));
        config.transcript_log = None;
        Ok(Orchestrator::from_config(config)?)
    }

    pub fn run(&mut self, scenario: &Scenario) -> Result<ScenarioReport, HarnessError> {
        let mut o = self.orchestrator()?;
        Ok(run_scenario(scenario, &mut o))
    }
}
