//! The `edge3d` command line: `run`, `serve`, `bench`, `eval`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 budget failure (`bench`).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentSpec;
use crate::edgenet::{serve, ClientConfig, EdgeClient, OracleBackend, ServerConfig};
use crate::metrics::MetricsConfig;
use crate::pipeline::{
    bench_lift_stage, bench_poses, evaluate_run, grid_keys, latency_breakdown, read_timeline, run_cell, run_cell_with,
    run_grid, CellResult, DepthPairing, GridOutput, PipelineError, RemoteDetector, Variant,
};
use crate::simkit::{ClassCatalog, NoiseSpec, Scenario, Scene, SimError};

/// Environment variable holding the default server address.
pub const SERVER_ENV: &str = "EDGE3D_SERVER";
pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
/// Environment variable overriding `serve --bind`.
pub const BIND_ENV: &str = "EDGE3D_BIND";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "edge3d",
    version,
    about = "Hybrid edge 2D detection + on-device 3D lifting: experiments, server, benchmark"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a variant × scenario × speed grid and write per-cell reports.
    Run(RunArgs),
    /// Serve the oracle 2D detector over TCP until interrupted.
    Serve(ServeArgs),
    /// Time the on-device lift stage over rendered 360×360 frames.
    Bench(BenchArgs),
    /// Re-score a timeline dump offline.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Hybrid,
    Monolithic,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PairingArg {
    /// Latest depth frame at result arrival.
    Latest,
    /// Depth frame captured with the image.
    Capture,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment file (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene: "acceptance", "room", or a scene file.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Scenarios, comma separated: parallel, away_close, circling.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<Scenario>,
    /// Walking speeds in m/s, comma separated.
    #[arg(long, value_delimiter = ',')]
    speed: Vec<f64>,
    /// Fixed network latency in milliseconds.
    #[arg(long)]
    latency_ms: Option<f64>,
    /// Uniform network jitter bound in milliseconds.
    #[arg(long)]
    jitter_ms: Option<f64>,
    /// Lift stale 2D boxes where they were detected, without moving them.
    #[arg(long)]
    no_compensation: bool,
    /// Replace registry entries instead of fusing views.
    #[arg(long)]
    no_fusion: bool,
    /// Which depth frame a result is lifted against.
    #[arg(long, value_enum)]
    depth_pairing: Option<PairingArg>,
    /// Render without sensor or detector noise.
    #[arg(long)]
    zero_noise: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each cell's timeline as JSON lines.
    #[arg(long)]
    dump_timelines: bool,
    /// Use a detection server instead of the in-process oracle (hybrid only).
    #[arg(long, env = SERVER_ENV)]
    server: Option<String>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, alias = "addr", env = BIND_ENV, default_value = DEFAULT_ADDR)]
    bind: String,
    #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
    backend: BackendKind,
    /// Emulated model compute per request, milliseconds.
    #[arg(long, default_value_t = 13.0)]
    compute_ms: f64,
    /// Uniform half-width around the compute time, milliseconds.
    #[arg(long, default_value_t = 0.0)]
    jitter_ms: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Detect without noise.
    #[arg(long)]
    zero_noise: bool,
    /// Instead of serving, ping the server at --bind and exit.
    #[arg(long)]
    ping: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendKind {
    /// Renders the requested scene view and returns the oracle's boxes.
    Oracle,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Number of rendered frames to time.
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Fail (exit 3) when the p95 exceeds this many milliseconds.
    #[arg(long, default_value_t = 33.0)]
    budget_ms: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Scene: "acceptance", "room", or a scene file.
    #[arg(long, default_value = "room")]
    scene: String,
    /// Distance of the look-around poses from the scene center, metres.
    #[arg(long, default_value_t = 3.2)]
    radius: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Timeline dump (JSON lines) written by `run --dump-timelines`.
    record: PathBuf,
    /// Scene the record was produced on.
    #[arg(long, default_value = "acceptance")]
    scene: String,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    Budget(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::Sim(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out`. Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Serve(a) => cmd_serve(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Eval(a) => cmd_eval(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (CliError::Config(m) | CliError::Runtime(m) | CliError::Budget(m)) = &e;
            eprintln!("edge3d: {m}");
            e.code()
        }
    }
}

fn experiment(a: &RunArgs) -> Result<ExperimentSpec, CliError> {
    let mut spec = match &a.config {
        // an unreadable config file is a configuration problem too
        Some(p) => ExperimentSpec::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = &a.scene {
        spec.scene = s.clone();
    }
    match a.variant {
        Some(VariantArg::Hybrid) => spec.variants = vec![Variant::Hybrid],
        Some(VariantArg::Monolithic) => spec.variants = vec![Variant::MonolithicEdge3D],
        Some(VariantArg::Both) => spec.variants = Variant::ALL.to_vec(),
        None => {}
    }
    if !a.scenario.is_empty() {
        spec.scenarios = a.scenario.clone();
    }
    if !a.speed.is_empty() {
        spec.speeds = a.speed.clone();
    }
    let p = &mut spec.pipeline;
    if let Some(ms) = a.latency_ms {
        p.latency.fixed = ms / 1e3;
    }
    if let Some(ms) = a.jitter_ms {
        p.latency.jitter = ms / 1e3;
    }
    p.compensation &= !a.no_compensation;
    p.fusion &= !a.no_fusion;
    match a.depth_pairing {
        Some(PairingArg::Latest) => p.depth_pairing = DepthPairing::LatestAtArrival,
        Some(PairingArg::Capture) => p.depth_pairing = DepthPairing::AtCapture,
        None => {}
    }
    if a.zero_noise {
        p.noise = NoiseSpec::zero();
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(o) = &a.out {
        spec.output_dir = o.clone();
    }
    spec.dump_timelines |= a.dump_timelines;
    spec.validate()?;
    Ok(spec)
}

fn scene_id(name: &str) -> Option<u64> {
    match name {
        "acceptance" => Some(0),
        "room" => Some(1),
        _ => None,
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = experiment(&a)?;
    let scene = spec.load_scene()?;
    let pipelines = spec.pipelines();
    let cells: Vec<CellResult> = match &a.server {
        None => run_grid(&scene, &pipelines, &spec.scenarios, &spec.speeds, &spec.trajectory, &spec.metrics)?,
        Some(addr) => {
            let id = scene_id(&spec.scene)
                .ok_or_else(|| CliError::Config("--server needs a bundled scene (acceptance or room)".into()))?;
            let client = EdgeClient::connect(
                addr.as_str(),
                ClientConfig { timeout: Duration::from_secs(5), ..Default::default() },
            )
            .map_err(runtime(addr))?;
            let variants: Vec<Variant> = pipelines.keys().copied().collect();
            let mut cells = Vec::new();
            for key in grid_keys(&variants, &spec.scenarios, &spec.speeds) {
                let p = &pipelines[&key.variant];
                let cell = match key.variant {
                    Variant::Hybrid => {
                        let mut det = RemoteDetector::new(&client, id);
                        run_cell_with(&scene, key, &spec.trajectory, p, &spec.metrics, &mut det)?
                    }
                    Variant::MonolithicEdge3D => run_cell(&scene, key, &spec.trajectory, p, &spec.metrics)?,
                };
                cells.push(cell);
            }
            cells
        }
    };
    let written = GridOutput::write(&cells, &spec.output_dir, spec.dump_timelines)?;
    let table = std::fs::read_to_string(written.table.as_ref().expect("table is always written"))
        .map_err(runtime("table.md"))?;
    let w = runtime::<std::io::Error>("stdout");
    let mut text = table;
    text += "| cell | end-to-end mean ms | p95 ms | dropped |\n|---|---|---|---|\n";
    for c in &cells {
        let l = &c.latency;
        text += &format!(
            "| {} | {:.1} | {:.1} | {} |\n",
            c.key.stem(),
            l.end_to_end.mean * 1e3,
            l.end_to_end.p95 * 1e3,
            l.dropped_frames
        );
    }
    text += &format!("\n{} reports written to {}\n", written.reports.len(), spec.output_dir.display());
    out.write_all(text.as_bytes()).map_err(w)
}

fn noise(zero: bool) -> NoiseSpec {
    if zero {
        NoiseSpec::zero()
    } else {
        NoiseSpec::default()
    }
}

fn cmd_serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.ping {
        let client = EdgeClient::connect(a.bind.as_str(), ClientConfig::default()).map_err(runtime(&a.bind))?;
        let rtt = client.ping().map_err(runtime("ping"))?;
        return writeln!(out, "pong from {} in {:.2} ms", client.peer(), rtt.as_secs_f64() * 1e3)
            .map_err(runtime("stdout"));
    }
    if !(a.compute_ms >= 0.0 && a.jitter_ms >= 0.0) {
        return Err(CliError::Config("compute and jitter must be >= 0".into()));
    }
    let BackendKind::Oracle = a.backend;
    let backend = OracleBackend::new(
        OracleBackend::builtin_scenes(),
        crate::geometry::CameraIntrinsics::headset_depth(),
        noise(a.zero_noise),
    );
    let cfg = ServerConfig { model_compute: a.compute_ms / 1e3, jitter: a.jitter_ms / 1e3, seed: a.seed };
    let server = serve(Arc::new(backend), a.bind.as_str(), cfg).map_err(runtime(&a.bind))?;
    writeln!(out, "serving on {}", server.local_addr()).map_err(runtime("stdout"))?;
    out.flush().map_err(runtime("stdout"))?;
    let stop = server.stop_handle();
    if let Err(e) = ctrlc::set_handler(stop) {
        log::warn!("no interrupt handler: {e}");
    }
    server.wait();
    writeln!(out, "server stopped").map_err(runtime("stdout"))
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.frames == 0 {
        return Err(CliError::Config("--frames must be at least 1".into()));
    }
    if !(a.budget_ms > 0.0 && a.radius > 0.0) {
        return Err(CliError::Config("--budget-ms and --radius must be positive".into()));
    }
    let scene = Scene::resolve(&a.scene, &ClassCatalog::builtin())?;
    let cfg = crate::pipeline::PipelineConfig { seed: a.seed, ..Default::default() };
    let b = bench_lift_stage(&scene, &bench_poses(a.frames, a.radius), &cfg);
    let s = &b.stats;
    writeln!(
        out,
        "lift stage over {} frames (≤{} detections each): mean {:.2} ms, p95 {:.2} ms, max {:.2} ms (budget {:.1} ms)",
        s.count,
        b.max_detections,
        s.mean * 1e3,
        s.p95 * 1e3,
        s.max * 1e3,
        a.budget_ms
    )
    .map_err(runtime("stdout"))?;
    if s.p95 * 1e3 > a.budget_ms {
        return Err(CliError::Budget(format!("p95 {:.2} ms exceeds budget {:.1} ms", s.p95 * 1e3, a.budget_ms)));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scene = Scene::resolve(&a.scene, &ClassCatalog::builtin())?;
    let file = File::open(&a.record).map_err(runtime(&a.record.display().to_string()))?;
    let record = read_timeline(BufReader::new(file)).map_err(|e| match e {
        PipelineError::Record { line, msg } => CliError::Runtime(format!("{}:{line}: {msg}", a.record.display())),
        other => other.into(),
    })?;
    let report = evaluate_run(&record, &scene, &MetricsConfig::default());
    if let Some(p) = &a.out {
        std::fs::write(p, report.to_csv()).map_err(runtime(&p.display().to_string()))?;
    }
    let text = format!(
        "{} ticks\n\n{}\n{}",
        record.ticks.len(),
        report.to_markdown(),
        latency_breakdown(&record).to_markdown()
    );
    out.write_all(text.as_bytes()).map_err(runtime("stdout"))
}
