use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mess::curves::{load_family, save_family, CurveFamily};
use mess::devices::{AnalyticDevice, DeviceError, FixedLatencyDevice, Md1Device, MemoryDevice};
use mess::frontend::{characterize, parse_trace, CharacterizeConfig, CoreConfig, FrontendError, TraceStyle};
use mess::metrics::family_metrics;
use mess::profiler::{profile, read_samples, write_profile, StressWeights};
use mess::simulator::{run_simulation, ControllerConfig, DeviceMode, MessDevice, SimulationError};
use mess::synth::{analytic_family, platform, platform_family, AnalyticSpec};

/// Bandwidth-latency memory model toolkit.
#[derive(Parser)]
#[command(name = "mess", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print summary metrics of a curve family (text table, then JSON).
    Metrics {
        /// Curve file (CSV; an optional JSON manifest with the same stem is read too).
        curves: PathBuf,
    },
    /// Run a memory trace through the core model and a memory device.
    Simulate(SimulateArgs),
    /// Measure a device with the loaded-latency benchmark and write a curve family.
    Characterize(CharacterizeArgs),
    /// Score an application bandwidth timeline against a curve family.
    Profile(ProfileArgs),
    /// Generate a synthetic curve family.
    GenCurves(GenCurvesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ramulator,
    Dramsim3,
}

impl From<Format> for TraceStyle {
    fn from(f: Format) -> Self {
        match f {
            Format::Ramulator => TraceStyle::Ramulator,
            Format::Dramsim3 => TraceStyle::Dramsim3,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DeviceKind {
    /// Feedback controller over the curve family (needs --curves).
    Mess,
    /// Constant latency (--fixed-latency).
    Fixed,
    /// Single-server deterministic queue (--service-bw, --base-lat).
    Md1,
    /// Closed-form curve (--l0, --k, --bmax, --penalty); characterize only.
    Analytic,
}

#[derive(Args)]
struct ControllerArgs {
    /// Memory operations per controller window.
    #[arg(long = "window", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    window_ops: u64,
    /// Gain of the bandwidth estimate update, in (0, 1].
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    conv_factor: f64,
    /// CPU-side share of load-to-use latency, subtracted before handing latency to the core (ns).
    #[arg(long, default_value_t = 0.0)]
    cpu_latency: f64,
    /// Ceiling on the bandwidth estimate, as a fraction of the curve maximum.
    #[arg(long, default_value_t = 0.999, value_parser = unit_interval)]
    clamp_fraction: f64,
    /// Starting latency (ns); defaults to the unloaded latency of the all-read curve.
    #[arg(long)]
    initial_latency: Option<f64>,
}

impl ControllerArgs {
    fn config(&self) -> ControllerConfig {
        ControllerConfig {
            window_ops: self.window_ops,
            conv_factor: self.conv_factor,
            cpu_latency_ns: self.cpu_latency,
            clamp_fraction: self.clamp_fraction,
            initial_latency_ns: self.initial_latency,
        }
    }
}

#[derive(Args)]
struct CoreArgs {
    /// Core clock (GHz).
    #[arg(long = "freq", default_value_t = 2.0)]
    frequency_ghz: f64,
    /// Non-memory instructions retired per cycle.
    #[arg(long = "ipc", default_value_t = 1.0)]
    ipc_nonmem: f64,
    /// Outstanding-miss slots (per core, or per generator stream).
    #[arg(long = "mshr", default_value_t = 10)]
    mshr_entries: usize,
    /// Reads stall the core until they complete.
    #[arg(long)]
    reads_blocking: bool,
}

impl CoreArgs {
    fn config(&self, line_size: u32) -> CoreConfig {
        CoreConfig {
            frequency_ghz: self.frequency_ghz,
            ipc_nonmem: self.ipc_nonmem,
            mshr_entries: self.mshr_entries,
            line_size,
            reads_blocking: self.reads_blocking,
        }
    }
}

#[derive(Args)]
struct DeviceArgs {
    /// Latency of the fixed device (ns).
    #[arg(long, default_value_t = 89.0)]
    fixed_latency: f64,
    /// Service bandwidth of the M/D/1 device (GB/s).
    #[arg(long, default_value_t = 128.0)]
    service_bw: f64,
    /// Base latency of the M/D/1 device (ns).
    #[arg(long, default_value_t = 89.0)]
    base_lat: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Curve file driving the feedback controller.
    #[arg(long)]
    curves: PathBuf,
    /// Memory trace.
    #[arg(long)]
    trace: PathBuf,
    /// Trace style.
    #[arg(long, value_enum, default_value = "ramulator")]
    format: Format,
    /// Device answering the core's requests.
    #[arg(long, value_enum, default_value = "mess")]
    device: DeviceKind,
    #[command(flatten)]
    controller: ControllerArgs,
    #[command(flatten)]
    core: CoreArgs,
    #[command(flatten)]
    dev: DeviceArgs,
    /// Per-window log (CSV); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run summary (JSON); stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CharacterizeArgs {
    /// Device to measure.
    #[arg(long, value_enum)]
    device: DeviceKind,
    /// Curve file for the mess device.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[command(flatten)]
    dev: DeviceArgs,
    /// Analytic device: unloaded latency (ns).
    #[arg(long, default_value_t = 89.0)]
    l0: f64,
    /// Analytic device: queueing scale (ns).
    #[arg(long, default_value_t = 31.2)]
    k: f64,
    /// Analytic device: asymptotic bandwidth (GB/s).
    #[arg(long, default_value_t = 128.0)]
    bmax: f64,
    /// Analytic device: latency penalty per 50 points of write share.
    #[arg(long, default_value_t = 0.0)]
    penalty: f64,
    /// Read ratios (percent), `lo:hi:step` or a comma list.
    #[arg(long, default_value = "50:100:10")]
    ratios: String,
    /// Generator inter-request gaps (cycles), `lo:hi:step` or a comma list.
    #[arg(long, default_value = "0,1,2,5,10,20,50,100,200,500,1000,2000,10000")]
    gaps: String,
    /// Generator streams.
    #[arg(long, default_value_t = 16)]
    streams: u32,
    /// Probe reads measured per point.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    probe_ops: u64,
    /// Device operations discarded before measuring each point.
    #[arg(long, default_value_t = 50_000)]
    warmup_ops: u64,
    #[command(flatten)]
    core: CoreArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Platform name recorded in the manifest.
    #[arg(long, default_value = "characterized")]
    name: String,
    /// Theoretical maximum bandwidth recorded in the manifest (GB/s).
    #[arg(long)]
    theoretical_bw: Option<f64>,
    /// Output curve file (a manifest is written next to it); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Curve file.
    #[arg(long)]
    curves: PathBuf,
    /// Sample timeline (CSV).
    #[arg(long)]
    samples: PathBuf,
    /// Weight of the latency term.
    #[arg(long, default_value_t = 0.5)]
    w_lat: f64,
    /// Weight of the slope term.
    #[arg(long, default_value_t = 0.5)]
    w_slope: f64,
    /// Scored timeline (CSV); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    /// Sampled closed-form curve with a write penalty.
    Analytic,
    /// Family shaped after a platform's published summary numbers.
    Table1,
}

#[derive(Args)]
struct GenCurvesArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Platform for the table1 model (skylake, cascadelake, zen2, power9, graviton3, sapphirerapids, a64fx, h100).
    #[arg(long)]
    platform: Option<String>,
    /// Add falling-bandwidth tails to two of the table1 curves.
    #[arg(long)]
    waves: bool,
    /// Unloaded latency (ns).
    #[arg(long, default_value_t = 89.0)]
    l0: f64,
    /// Queueing scale (ns).
    #[arg(long, default_value_t = 31.2)]
    k: f64,
    /// Asymptotic bandwidth (GB/s).
    #[arg(long, default_value_t = 128.0)]
    bmax: f64,
    /// Latency penalty per 50 points of write share.
    #[arg(long, default_value_t = 0.3)]
    penalty: f64,
    /// Read ratios (percent), `lo:hi:step` or a comma list.
    #[arg(long, default_value = "50:100:10")]
    ratios: String,
    /// Points per curve.
    #[arg(long, default_value_t = 30)]
    points: usize,
    /// Highest sampled bandwidth as a fraction of --bmax.
    #[arg(long, default_value_t = 0.95)]
    max_frac: f64,
    /// Output curve file (a manifest is written next to it); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

/// Parses `lo:hi:step` (inclusive) or `a,b,c`.
fn parse_sweep<T>(text: &str) -> anyhow::Result<Vec<T>>
where
    T: FromStr + Copy + PartialOrd + Into<u64> + TryFrom<u64>,
{
    let num = |s: &str| -> anyhow::Result<T> {
        s.trim()
            .parse::<T>()
            .map_err(|_| anyhow!("`{}` is not a valid sweep value", s.trim()))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("sweep `{text}` must look like lo:hi:step");
        }
        let (lo, hi, step): (u64, u64, u64) = (num(parts[0])?.into(), num(parts[1])?.into(), num(parts[2])?.into());
        if step == 0 || lo > hi {
            bail!("sweep `{text}` needs lo <= hi and a positive step");
        }
        Ok((lo..=hi)
            .step_by(step as usize)
            .filter_map(|v| T::try_from(v).ok())
            .collect())
    } else {
        text.split(',').map(num).collect()
    }
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn simulation(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

fn sim_failure(e: SimulationError) -> Failure {
    match e {
        SimulationError::Trace(_) | SimulationError::Config(_) => input(e.into()),
        _ => simulation(e.into()),
    }
}

fn frontend_failure(e: FrontendError) -> Failure {
    match e {
        FrontendError::Device(DeviceError::Config(_)) | FrontendError::Config(_) | FrontendError::Trace(_) => {
            input(e.into())
        }
        _ => simulation(e.into()),
    }
}

fn load(path: &Path) -> Result<CurveFamily, Failure> {
    load_family(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(input)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes to stdout; a reader that went away early is not an error.
fn print_stdout(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(input(e.into())),
        _ => Ok(()),
    }
}

fn emit_family(family: &CurveFamily, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => save_family(family, p)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(input),
        None => print_stdout(&family.to_csv_string()),
    }
}

fn cmd_metrics(curves: &Path) -> Result<(), Failure> {
    let family = load(curves)?;
    let m = family_metrics(&family);
    let json = serde_json::to_string_pretty(&m).expect("metrics serialize");
    print_stdout(&format!("{}\n{json}\n", m.to_table()))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let family = load(&a.curves)?;
    let core = a.core.config(family.line_size);
    let mode = match a.device {
        DeviceKind::Mess => DeviceMode::Mess,
        DeviceKind::Fixed => DeviceMode::Fixed {
            latency_ns: a.dev.fixed_latency,
        },
        DeviceKind::Md1 => DeviceMode::Md1 {
            service_bandwidth_gbps: a.dev.service_bw,
            base_latency_ns: a.dev.base_lat,
        },
        DeviceKind::Analytic => return Err(input(anyhow!("the analytic device is available to characterize only"))),
    };
    let trace = parse_trace(&a.trace, a.format.into())
        .with_context(|| format!("opening {}", a.trace.display()))
        .map_err(input)?;
    let log = run_simulation(&family, &a.controller.config(), trace, &core, mode).map_err(sim_failure)?;

    let mut out = output(a.out.as_deref()).map_err(input)?;
    log.write_csv(&mut out)
        .and_then(|_| out.flush())
        .context("writing window log")
        .map_err(input)?;
    let summary = log.summary_json();
    match &a.summary {
        Some(p) => std::fs::write(p, summary + "\n")
            .with_context(|| format!("writing {}", p.display()))
            .map_err(input)?,
        None => eprintln!("{summary}"),
    }
    Ok(())
}

fn cmd_characterize(a: &CharacterizeArgs) -> Result<(), Failure> {
    let ratios: Vec<u8> = parse_sweep(&a.ratios).map_err(input)?;
    if ratios.iter().any(|&r| r > 100) {
        return Err(input(anyhow!("read ratios must be within 0..=100")));
    }
    let gaps: Vec<u64> = parse_sweep(&a.gaps).map_err(input)?;
    let mess_family = match (a.device, &a.curves) {
        (DeviceKind::Mess, Some(p)) => Some(Arc::new(load(p)?)),
        (DeviceKind::Mess, None) => return Err(input(anyhow!("--device mess needs --curves"))),
        _ => None,
    };
    let line_size = mess_family.as_ref().map_or(64, |f| f.line_size);
    let config = CharacterizeConfig {
        ratios,
        gaps,
        streams: a.streams,
        core: a.core.config(line_size),
        probe_ops: a.probe_ops,
        warmup_ops: a.warmup_ops,
        platform_name: a.name.clone(),
        theoretical_max_bandwidth: a.theoretical_bw,
    };
    let cycle_ns = config.core.cycle_ns();
    let controller = a.controller.config();
    let make = || -> Result<Box<dyn MemoryDevice>, DeviceError> {
        Ok(match a.device {
            DeviceKind::Fixed => Box::new(FixedLatencyDevice::new(a.dev.fixed_latency)?),
            DeviceKind::Md1 => Box::new(Md1Device::new(a.dev.service_bw, a.dev.base_lat, line_size, cycle_ns)?),
            // The closed form is driven through the controller like a curve family.
            DeviceKind::Analytic => Box::new(
                MessDevice::new(
                    AnalyticDevice::new(a.l0, a.k, a.bmax)?.with_write_penalty(a.penalty),
                    controller.clone(),
                    line_size,
                    cycle_ns,
                )
                    .map_err(|e| DeviceError::Config(e.to_string()))?
                    .strict(true),
            ),
            DeviceKind::Mess => {
                let fam = mess_family.clone().expect("checked above");
                Box::new(
                    MessDevice::new(fam, controller.clone(), line_size, cycle_ns)
                        .map_err(|e| DeviceError::Config(e.to_string()))?
                        .strict(true),
                )
            }
        })
    };
    let family = characterize(make, &config).map_err(frontend_failure)?;
    emit_family(&family, a.out.as_deref())
}

fn cmd_profile(a: &ProfileArgs) -> Result<(), Failure> {
    let family = load(&a.curves)?;
    let weights = StressWeights::new(a.w_lat, a.w_slope).map_err(|e| input(e.into()))?;
    let file = File::open(&a.samples)
        .with_context(|| format!("opening {}", a.samples.display()))
        .map_err(input)?;
    let samples = read_samples(file)
        .with_context(|| format!("reading {}", a.samples.display()))
        .map_err(input)?;
    let points = profile(&family, &samples, weights);
    let out = output(a.out.as_deref()).map_err(input)?;
    write_profile(&points, out).context("writing profile").map_err(input)
}

fn cmd_gen_curves(a: &GenCurvesArgs) -> Result<(), Failure> {
    let family = match a.model {
        Model::Analytic => {
            let ratios: Vec<u8> = parse_sweep(&a.ratios).map_err(input)?;
            if ratios.iter().any(|&r| r > 100) {
                return Err(input(anyhow!("read ratios must be within 0..=100")));
            }
            analytic_family(&AnalyticSpec {
                l0_ns: a.l0,
                k_ns: a.k,
                bmax_gbps: a.bmax,
                write_penalty: a.penalty,
                ratios,
                points: a.points,
                max_fraction: a.max_frac,
            })
            .map_err(|e| input(e.into()))?
        }
        Model::Table1 => {
            let name = a
                .platform
                .as_deref()
                .ok_or_else(|| input(anyhow!("--model table1 needs --platform")))?;
            let p = platform(name).map_err(|e| input(e.into()))?;
            platform_family(p, a.waves).map_err(|e| input(e.into()))?
        }
    };
    emit_family(&family, a.out.as_deref())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MESS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("MESS_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Metrics { curves } => cmd_metrics(curves),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Characterize(a) => cmd_characterize(a),
        Command::Profile(a) => cmd_profile(a),
        Command::GenCurves(a) => cmd_gen_curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
