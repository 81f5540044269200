//! Python bindings for the edge assistant core.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use iris_core::barcode::{self, Catalog, DigitString, Scanline};
use iris_core::face::{FaceEmbedding, FaceRegistry as CoreRegistry, MatchResult};
use iris_core::gateway::{self, BackendRegistry, FixtureBackend, FixtureSet, GatewayHandle};
use iris_core::imaging::{self, ImageFrame};
use iris_core::money::{self, CurrencyConfig, OcrToken};
use iris_core::notes::NoteStore as CoreNotes;
use iris_core::orchestrator::{Orchestrator as CoreOrchestrator, OrchestratorConfig};
use iris_core::protocol::{GatewayClient, PerceptionRequest};
use iris_core::router::{self, RouterConfig, Utterance};
use iris_core::scenario::{Harness, Scenario};
use pyo3::exceptions::{PyConnectionError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// 8-bit greyscale image.
#[pyclass(module = "iris_py", from_py_object)]
#[derive(Clone)]
struct Image {
    frame: ImageFrame,
}

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, pixels: &[u8]) -> PyResult<Self> {
        Ok(Self {
            frame: ImageFrame::new(width, height, pixels.to_vec()).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_pgm(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            frame: imaging::load_pgm(data).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        let data = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_pgm(&data)
    }

    fn to_pgm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &imaging::save_pgm(&self.frame))
    }

    #[getter]
    fn width(&self) -> usize {
        self.frame.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.frame.height()
    }

    #[getter]
    fn pixels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.frame.pixels())
    }

    fn otsu_level(&self) -> Option<u8> {
        imaging::otsu_level(&self.frame.histogram())
    }

    fn otsu_threshold(&self) -> Self {
        Self {
            frame: imaging::otsu_threshold(&self.frame),
        }
    }

    fn sharpen(&self) -> Self {
        Self {
            frame: imaging::sharpen(&self.frame),
        }
    }

    fn scale(&self, num: u32, den: u32) -> PyResult<Self> {
        Ok(Self {
            frame: imaging::scale_nearest(&self.frame, num, den).map_err(value_err)?,
        })
    }

    /// SHA-256 of the canonical PGM, as used for fixture lookup.
    fn digest(&self) -> String {
        gateway::frame_digest(&self.frame)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.frame.width(), self.frame.height())
    }
}

#[pyfunction]
fn decode_barcode(image: &Image) -> PyResult<String> {
    barcode::decode_image(&image.frame).map(|d| d.to_string()).map_err(value_err)
}

#[pyfunction]
fn decode_scanline(line: &[u8]) -> PyResult<String> {
    barcode::decode_scanline(&Scanline(line.to_vec())).map(|d| d.to_string()).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (digits, module_px=2, quiet_px=20))]
fn encode_scanline<'py>(py: Python<'py>, digits: &str, module_px: usize, quiet_px: usize) -> PyResult<Bound<'py, PyBytes>> {
    let d: DigitString = digits.parse().map_err(value_err)?;
    let line = barcode::encode_scanline(&d, module_px, quiet_px).map_err(value_err)?;
    Ok(PyBytes::new(py, &line.0))
}

#[pyfunction]
fn checksum_digit(payload: &str) -> PyResult<u8> {
    barcode::checksum_digit(payload).map_err(value_err)
}

/// Product name and price text for `digits`, or None when not listed.
#[pyfunction]
fn lookup_product(digits: &str, catalog_path: PathBuf) -> PyResult<Option<(String, Option<String>)>> {
    let d: DigitString = digits.parse().map_err(value_err)?;
    let catalog = Catalog::load(&catalog_path).map_err(value_err)?;
    Ok(catalog.get(&d).map(|p| (p.name.clone(), p.price_text())))
}

#[pyfunction]
fn normalize(text: &str) -> Vec<String> {
    router::normalize(text)
}

/// Routes `text` with the default keyword table (or one loaded from `config_path`).
/// Returns the intent name and its slots.
#[pyfunction]
#[pyo3(signature = (text, config_path=None))]
fn route(text: &str, config_path: Option<PathBuf>) -> PyResult<(String, Vec<(String, String)>)> {
    let config = match config_path {
        Some(p) => RouterConfig::load(&p).map_err(value_err)?,
        None => RouterConfig::default(),
    };
    let u = Utterance::new(text, None).ok_or_else(|| value_err("utterance is empty"))?;
    let intent = router::route(&u, &config);
    Ok((intent.kind.to_string(), intent.slots.into_iter().collect()))
}

#[pyclass(module = "iris_py")]
struct FaceRegistry {
    inner: CoreRegistry,
}

#[pymethods]
impl FaceRegistry {
    /// In-memory when `path` is None, otherwise backed by a JSON-lines file.
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => CoreRegistry::open(p).map_err(value_err)?,
            None => CoreRegistry::in_memory(),
        };
        Ok(Self { inner })
    }

    fn enroll(&mut self, name: &str, embedding: Vec<f64>) -> PyResult<String> {
        let e = FaceEmbedding::new(embedding).map_err(value_err)?;
        self.inner.enroll(name, e).map_err(value_err)
    }

    fn remove(&mut self, name: &str) -> PyResult<usize> {
        self.inner.remove(name).map_err(value_err)
    }

    /// (display_name, distance) of the match, or None.
    #[pyo3(signature = (embedding, threshold=0.6))]
    fn identify(&self, embedding: Vec<f64>, threshold: f64) -> PyResult<Option<(String, f64)>> {
        let q = FaceEmbedding::new(embedding).map_err(value_err)?;
        Ok(match self.inner.identify(&q, threshold) {
            MatchResult::Known { display_name, distance, .. } => Some((display_name, distance)),
            MatchResult::Unknown { .. } => None,
        })
    }

    fn names(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.display_name.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn ocr_tokens(lines: Vec<Vec<String>>) -> Vec<OcrToken> {
    lines
        .into_iter()
        .enumerate()
        .flat_map(|(i, words)| {
            words.into_iter().map(move |text| OcrToken {
                text,
                line_index: i as u32,
                confidence: 1.0,
                bbox: None,
            })
        })
        .collect()
}

/// Banknotes found in OCR lines (each line a list of tokens), as (currency, value_minor).
#[pyfunction]
fn parse_money(lines: Vec<Vec<String>>) -> Vec<(String, u64)> {
    money::parse_denominations(&ocr_tokens(lines), &CurrencyConfig::default())
        .into_iter()
        .map(|d| (d.currency, d.value_minor))
        .collect()
}

#[pyfunction]
fn describe_money(lines: Vec<Vec<String>>) -> String {
    let config = CurrencyConfig::default();
    let denoms = money::parse_denominations(&ocr_tokens(lines), &config);
    money::describe(&money::aggregate(&denoms), &config)
}

#[pyclass(module = "iris_py")]
struct NoteStore {
    inner: CoreNotes,
}

#[pymethods]
impl NoteStore {
    #[new]
    fn new(dir: PathBuf) -> Self {
        Self {
            inner: CoreNotes::new(dir),
        }
    }

    fn record(&self, category: &str, text: &str) -> PyResult<String> {
        self.inner.record(category, text).map(|n| n.id).map_err(value_err)
    }

    fn list(&self, category: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.list(category).map_err(value_err)?.into_iter().map(|n| n.text).collect())
    }

    fn clear(&self, category: &str) -> PyResult<usize> {
        self.inner.clear(category).map_err(value_err)
    }
}

fn load_config(path: Option<PathBuf>) -> PyResult<OrchestratorConfig> {
    match path {
        Some(p) => OrchestratorConfig::load(&p).map_err(value_err),
        None => Ok(OrchestratorConfig::default()),
    }
}

/// A spoken-command session.
#[pyclass(module = "iris_py", unsendable)]
struct Orchestrator {
    inner: CoreOrchestrator,
}

#[pymethods]
impl Orchestrator {
    #[new]
    #[pyo3(signature = (config_path=None, gateway=None))]
    fn new(config_path: Option<PathBuf>, gateway: Option<String>) -> PyResult<Self> {
        let mut config = load_config(config_path)?;
        if let Some(g) = gateway {
            config.gateway = g;
        }
        Ok(Self {
            inner: CoreOrchestrator::from_config(config).map_err(value_err)?,
        })
    }

    fn set_frame(&mut self, image: Option<Image>) {
        self.inner.set_frame(image.map(|i| i.frame));
    }

    /// The spoken reply, or None while dormant.
    fn say(&mut self, text: &str) -> PyResult<Option<String>> {
        let u = Utterance::new(text, None).ok_or_else(|| value_err("utterance is empty"))?;
        Ok(self.inner.handle_utterance(&u).map(|r| r.text))
    }

    /// Like `say`, also returning the timing trace as a dict.
    fn say_traced<'py>(&mut self, py: Python<'py>, text: &str) -> PyResult<Option<(String, Bound<'py, PyAny>)>> {
        let u = Utterance::new(text, None).ok_or_else(|| value_err("utterance is empty"))?;
        match self.inner.handle_utterance(&u) {
            Some(r) => {
                let trace = serde_json::to_string(&r.trace).map_err(value_err)?;
                Ok(Some((r.text, json_to_py(py, &trace)?)))
            }
            None => Ok(None),
        }
    }

    #[getter]
    fn state(&self) -> String {
        format!("{:?}", self.inner.state()).split('(').next().unwrap_or_default().to_string()
    }
}

/// In-process gateway serving a fixture file.
#[pyclass(module = "iris_py")]
struct Gateway {
    handle: Option<GatewayHandle>,
    addr: String,
}

#[pymethods]
impl Gateway {
    #[new]
    #[pyo3(signature = (fixtures_path, bind="127.0.0.1:0", latency_ms=None))]
    fn new(fixtures_path: PathBuf, bind: &str, latency_ms: Option<u64>) -> PyResult<Self> {
        let set = FixtureSet::load(&fixtures_path).map_err(value_err)?;
        let mut backend = FixtureBackend::new(&set);
        if let Some(ms) = latency_ms {
            backend = backend.with_uniform_latency(ms);
        }
        let handle = gateway::serve(bind, Arc::new(BackendRegistry::with_fixtures(backend))).map_err(value_err)?;
        let addr = handle.local_addr().to_string();
        Ok(Self {
            handle: Some(handle),
            addr,
        })
    }

    #[getter]
    fn address(&self) -> String {
        self.addr.clone()
    }

    fn shutdown(&mut self) {
        if let Some(mut h) = self.handle.take() {
            h.shutdown();
        }
    }
}

/// One perception call; returns the result dict or raises.
#[pyfunction]
#[pyo3(signature = (address, kind, image, timeout_ms=2000))]
fn perceive<'py>(py: Python<'py>, address: &str, kind: &str, image: &Image, timeout_ms: u64) -> PyResult<Bound<'py, PyAny>> {
    let mut client = GatewayClient::new(address);
    let req = PerceptionRequest::with_frame(client.next_id(), kind, &image.frame);
    let resp = client
        .call(&req, Duration::from_millis(timeout_ms))
        .map_err(|e| PyConnectionError::new_err(e.to_string()))?;
    if let Some(code) = resp.error_code() {
        return Err(value_err(code));
    }
    json_to_py(py, &resp.result.unwrap_or_default().to_string())
}

/// Runs a scenario file against an in-process gateway; returns (passed, report).
#[pyfunction]
fn run_scenario(config_path: PathBuf, scenario_path: PathBuf) -> PyResult<(bool, String)> {
    let config = load_config(Some(config_path))?;
    let scenario = Scenario::load(&scenario_path).map_err(value_err)?;
    let mut harness = Harness::new(config, None).map_err(value_err)?;
    let report = harness.run(&scenario).map_err(value_err)?;
    Ok((report.passed(), report.render()))
}

#[pymodule]
fn iris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_class::<FaceRegistry>()?;
    m.add_class::<NoteStore>()?;
    m.add_class::<Orchestrator>()?;
    m.add_class::<Gateway>()?;
    m.add_function(wrap_pyfunction!(decode_barcode, m)?)?;
    m.add_function(wrap_pyfunction!(decode_scanline, m)?)?;
    m.add_function(wrap_pyfunction!(encode_scanline, m)?)?;
    m.add_function(wrap_pyfunction!(checksum_digit, m)?)?;
    m.add_function(wrap_pyfunction!(lookup_product, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(route, m)?)?;
    m.add_function(wrap_pyfunction!(parse_money, m)?)?;
    m.add_function(wrap_pyfunction!(describe_money, m)?)?;
    m.add_function(wrap_pyfunction!(perceive, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
