use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use iris_core::barcode::{decode_image, lookup, Catalog};
use iris_core::bench::{bench_fixtures, run_bench, DEFAULT_COMMANDS};
use iris_core::face::{FaceEmbedding, FaceRegistry};
use iris_core::gateway::{
    serve, BackendRegistry, FixtureBackend, FixtureSet, HttpProxyBackend, PERCEPTION_KINDS,
};
use iris_core::imaging::{load_pgm, ImageFrame};
use iris_core::orchestrator::{Orchestrator, OrchestratorConfig};
use iris_core::router::Utterance;
use iris_core::scenario::{timing_table, Harness, Scenario};
use iris_core::speech::SpokenOutput;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "iris", version, about = "Assistive vision edge node and perception gateway")]
struct Cli {
    /// Edge configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Gateway address, overriding the config.
    #[arg(long, global = true, value_name = "HOST:PORT")]
    gateway: Option<String>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Interactive session on stdin. `IMG: <path>` sets the camera frame.
    Run {
        /// Print the timing trace after every reply.
        #[arg(long)]
        trace: bool,
    },
    /// Run a scripted scenario; exits 0 when every expectation holds.
    Scenario { file: PathBuf },
    /// Serve perception requests.
    Serve {
        #[arg(long, default_value = iris_core::protocol::DEFAULT_GATEWAY_ADDR)]
        bind: String,
        /// Fixture file; defaults to `fixtures_path` from the config.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Forward every kind to this HTTP service instead of fixtures.
        #[arg(long, value_name = "URL", conflicts_with = "fixtures")]
        upstream: Option<String>,
        /// Latency for every fixture kind, in milliseconds.
        #[arg(long)]
        latency_ms: Option<u64>,
    },
    /// Decode an EAN-13 symbol from a PGM image.
    DecodeBarcode {
        image: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Add a face embedding (JSON array of 128 numbers) to the registry.
    EnrollFace {
        name: String,
        embedding_file: PathBuf,
        /// Registry file; defaults to `registry_path` from the config.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Time alternating scene and objects commands.
    Bench {
        #[arg(long, default_value_t = DEFAULT_COMMANDS)]
        commands: usize,
        /// Fixture latency for the in-process gateway.
        #[arg(long, default_value_t = 150)]
        latency_ms: u64,
        /// Frames known to an external gateway (needed with --gateway).
        #[arg(long, requires = "objects_image")]
        scene_image: Option<PathBuf>,
        #[arg(long, requires = "scene_image")]
        objects_image: Option<PathBuf>,
    },
}

/// An error that maps to a specific exit code.
struct Exit(u8, String);

fn usage(msg: impl Into<String>) -> Exit {
    Exit(EXIT_USAGE, msg.into())
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit(EXIT_FAIL, format!("{e:#}"))
    }
}

fn load_config(cli: &Cli) -> Result<OrchestratorConfig, Exit> {
    let mut cfg = match &cli.config {
        Some(p) => OrchestratorConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => OrchestratorConfig::default(),
    };
    if let Some(g) = &cli.gateway {
        cfg.gateway = g.clone();
    }
    Ok(cfg)
}

fn read_frame(path: &Path) -> anyhow::Result<ImageFrame> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    load_pgm(&bytes).with_context(|| format!("{} is not a usable PGM", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("iris: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Exit> {
    match &cli.command {
        Command::Run { trace } => run_interactive(cli, *trace),
        Command::Scenario { file } => run_scenario_file(cli, file),
        Command::Serve {
            bind,
            fixtures,
            upstream,
            latency_ms,
        } => run_gateway(cli, bind, fixtures.as_deref(), upstream.as_deref(), *latency_ms),
        Command::DecodeBarcode { image, catalog } => decode(image, catalog.as_deref()),
        Command::EnrollFace {
            name,
            embedding_file,
            registry,
        } => enroll(cli, name, embedding_file, registry.as_deref()),
        Command::Bench {
            commands,
            latency_ms,
            scene_image,
            objects_image,
        } => bench(cli, *commands, *latency_ms, scene_image.as_deref(), objects_image.as_deref()),
    }
}

fn run_interactive(cli: &Cli, trace: bool) -> Result<u8, Exit> {
    let cfg = load_config(cli)?;
    let log = cfg.transcript_log.clone();
    let mut orchestrator = Orchestrator::from_config(cfg).map_err(|e| usage(e.to_string()))?;
    let mut out = SpokenOutput::new(Some(Box::new(std::io::stdout())), log.as_deref())
        .context("cannot open transcript log")?;
    let wake = orchestrator.router().wake_word.clone();
    eprintln!("Say \"{wake}\" to start. `IMG: <path>` sets the camera frame; Ctrl-D quits.");
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.context("cannot read stdin")?;
        let line = line.trim();
        if let Some(path) = line.strip_prefix("IMG:") {
            match read_frame(Path::new(path.trim())) {
                Ok(f) => orchestrator.set_frame(Some(f)),
                Err(e) => eprintln!("{e:#}"),
            }
            continue;
        }
        let Some(utterance) = Utterance::new(line, None) else {
            continue;
        };
        out.heard(&utterance.text).context("cannot write transcript")?;
        if let Some(reply) = orchestrator.handle_utterance(&utterance) {
            out.speak(&reply.text).context("cannot write output")?;
            if trace {
                eprint!("{}", timing_table(std::slice::from_ref(&reply.trace)));
            }
        }
        let _ = std::io::stdout().flush();
    }
    Ok(0)
}

fn run_scenario_file(cli: &Cli, file: &Path) -> Result<u8, Exit> {
    let scenario = Scenario::load(file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let cfg = load_config(cli)?;
    let mut harness = Harness::new(cfg, cli.gateway.clone()).map_err(|e| usage(e.to_string()))?;
    let report = harness.run(&scenario).map_err(|e| usage(e.to_string()))?;
    print!("{}", report.render());
    Ok(report.exit_code() as u8)
}

fn run_gateway(
    cli: &Cli,
    bind: &str,
    fixtures: Option<&Path>,
    upstream: Option<&str>,
    latency_ms: Option<u64>,
) -> Result<u8, Exit> {
    let registry = if let Some(url) = upstream {
        let mut reg = BackendRegistry::new();
        let proxy: Arc<HttpProxyBackend> = Arc::new(HttpProxyBackend::new(url, Duration::from_secs(5)));
        for kind in PERCEPTION_KINDS {
            reg.register(kind, proxy.clone());
        }
        reg
    } else {
        let path = match fixtures {
            Some(p) => p.to_path_buf(),
            None => match load_config(cli)?.fixtures_path {
                Some(p) => p,
                None => return Err(usage("serve needs --fixtures, --upstream or a config with fixtures_path")),
            },
        };
        let set = FixtureSet::load(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut backend = FixtureBackend::new(&set);
        if let Some(ms) = latency_ms {
            backend = backend.with_uniform_latency(ms);
        }
        BackendRegistry::with_fixtures(backend)
    };
    let handle = serve(bind, Arc::new(registry)).map_err(|e| Exit(EXIT_FAIL, e.to_string()))?;
    eprintln!("gateway listening on {}", handle.local_addr());
    handle.wait();
    Ok(0)
}

fn decode(image: &Path, catalog: Option<&Path>) -> Result<u8, Exit> {
    let frame = read_frame(image)?;
    let digits = match decode_image(&frame) {
        Ok(d) => d,
        Err(e) => {
            println!("no barcode: {e}");
            return Ok(EXIT_FAIL);
        }
    };
    println!("{digits}");
    if let Some(path) = catalog {
        let catalog = Catalog::load(path).with_context(|| format!("cannot load {}", path.display()))?;
        match lookup(&digits, &catalog, None).product {
            Some(p) => match p.price_text() {
                Some(price) => println!("{}, {price}", p.name),
                None => println!("{}", p.name),
            },
            None => println!("not in catalog"),
        }
    }
    Ok(0)
}

fn enroll(cli: &Cli, name: &str, file: &Path, registry: Option<&Path>) -> Result<u8, Exit> {
    let path = match registry {
        Some(p) => p.to_path_buf(),
        None => load_config(cli)?
            .registry_path
            .ok_or_else(|| usage("enroll-face needs --registry or a config with registry_path"))?,
    };
    let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("embedding file is not JSON")?;
    // accept a bare array or a face result object
    let values = value.get("embedding").unwrap_or(&value).clone();
    let values: Vec<f64> = serde_json::from_value(values).context("embedding must be an array of numbers")?;
    let embedding = FaceEmbedding::new(values).context("invalid embedding")?;
    let mut reg = FaceRegistry::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let id = reg.enroll(name, embedding).context("cannot save registry")?;
    println!("{id} {name}");
    Ok(0)
}

fn bench(
    cli: &Cli,
    commands: usize,
    latency_ms: u64,
    scene_image: Option<&Path>,
    objects_image: Option<&Path>,
) -> Result<u8, Exit> {
    if commands == 0 {
        return Err(usage("--commands must be at least 1"));
    }
    let cfg = load_config(cli)?;
    let (summary, _) = if cli.gateway.is_some() {
        let (Some(s), Some(o)) = (scene_image, objects_image) else {
            return Err(usage("bench against --gateway needs --scene-image and --objects-image"));
        };
        let (scene, objects) = (read_frame(s)?, read_frame(o)?);
        let mut harness = Harness::new(cfg, cli.gateway.clone()).map_err(|e| usage(e.to_string()))?;
        let mut orch = harness.orchestrator().map_err(|e| usage(e.to_string()))?;
        run_bench(&mut orch, &scene, &objects, commands).map_err(|e| Exit(EXIT_FAIL, e.to_string()))?
    } else {
        let (set, scene, objects) = bench_fixtures(latency_ms);
        let mut harness = Harness::serving(cfg, &set).map_err(|e| usage(e.to_string()))?;
        let mut orch = harness.orchestrator().map_err(|e| usage(e.to_string()))?;
        run_bench(&mut orch, &scene, &objects, commands).map_err(|e| Exit(EXIT_FAIL, e.to_string()))?
    };
    print!("{}", summary.render());
    if summary.overhead_within_budget() {
        Ok(0)
    } else {
        Err(Exit(EXIT_FAIL, "orchestrator overhead exceeds its budget".into()))
    }
}
