//! The curve-driven feedback memory model.
//!
//! Every simulated request in a window receives the same latency. At the end
//! of each window the controller compares the bandwidth the core actually
//! produced (`cpu_bw`) with its own running estimate (`mess_bw`), moves the
//! estimate a fraction `conv_factor` of the way towards the observation, and
//! reads the next window's latency off the curve family at the new estimate:
//!
//! ```text
//! mess_bw[i+1] = mess_bw[i] + conv_factor * (cpu_bw[i] - mess_bw[i])
//! latency[i+1] = curve(read_ratio[i], mess_bw[i+1])
//! ```
//!
//! The latency handed to the core is the load-to-use curve latency minus the
//! part of the path the core model already simulates (`cpu_latency_ns`).

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::curves::CurveFamily;
use crate::devices::{
    DeviceError, FixedLatencyDevice, LatencyModel, Md1Device, MemoryDevice, MemoryRequest, OpKind,
};
use crate::frontend::{run_trace_core, CoreConfig, FrontendError, TraceRecord};
use crate::frontend::trace::TraceError;

/// Smallest latency ever handed to the core model.
pub const MIN_DEVICE_LATENCY_NS: f64 = 1.0;

pub const RUN_LOG_CSV_HEADER: &str =
    "window_index,cpu_bw_gbps,mess_bw_gbps,read_ratio_pct,latency_ns,saturated";

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("window {window} closed with zero elapsed cycles")]
    ZeroElapsed { window: u64 },
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl From<FrontendError> for SimulationError {
    fn from(e: FrontendError) -> Self {
        match e {
            FrontendError::Trace(t) => SimulationError::Trace(t),
            FrontendError::Device(d) => SimulationError::Device(d),
            FrontendError::Config(c) => SimulationError::Config(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerConfig {
    /// Memory operations per control window.
    pub window_ops: u64,
    /// Gain of the bandwidth-estimate update, in (0, 1].
    pub conv_factor: f64,
    /// Portion of the load-to-use latency already modelled by the core (ns).
    pub cpu_latency_ns: f64,
    /// `mess_bw` is never allowed above this fraction of the curve maximum.
    pub clamp_fraction: f64,
    /// Starting latency; defaults to the unloaded latency of the model.
    pub initial_latency_ns: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            window_ops: 1000,
            conv_factor: 0.5,
            cpu_latency_ns: 0.0,
            clamp_fraction: 0.999,
            initial_latency_ns: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.conv_factor > 0.0 && self.conv_factor <= 1.0) {
            return Err(SimulationError::Config(format!(
                "convergence factor must be in (0, 1], got {}",
                self.conv_factor
            )));
        }
        if self.window_ops == 0 {
            return Err(SimulationError::Config("window must hold at least one operation".into()));
        }
        if !(self.cpu_latency_ns >= 0.0 && self.cpu_latency_ns.is_finite()) {
            return Err(SimulationError::Config(format!(
                "CPU latency must be non-negative, got {}",
                self.cpu_latency_ns
            )));
        }
        if !(self.clamp_fraction > 0.0 && self.clamp_fraction <= 1.0) {
            return Err(SimulationError::Config(format!(
                "clamp fraction must be in (0, 1], got {}",
                self.clamp_fraction
            )));
        }
        if let Some(l) = self.initial_latency_ns {
            if !(l > 0.0 && l.is_finite()) {
                return Err(SimulationError::Config(format!(
                    "initial latency must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerState {
    pub mess_bw: f64,
    /// Load-to-use latency for the current window (ns).
    pub latency: f64,
    pub window_reads: u64,
    pub window_writes: u64,
    pub window_start_cycle: u64,
    pub window_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub window_index: u64,
    /// Operations that fell in this window.
    pub ops: u64,
    pub cpu_bw: f64,
    /// Estimate for the next window, after update and clamping.
    pub mess_bw: f64,
    pub read_ratio: u8,
    /// Load-to-use latency for the next window.
    pub latency_ns: f64,
    pub saturated: bool,
}

/// Proportional bandwidth-estimate update.
pub fn update_estimate(mess_bw: f64, cpu_bw: f64, conv_factor: f64) -> f64 {
    mess_bw + conv_factor * (cpu_bw - mess_bw)
}

/// Latency handed to the core: the load-to-use latency minus the CPU-side
/// share, floored at [`MIN_DEVICE_LATENCY_NS`]. The flag reports whether the
/// floor was hit.
pub fn memory_latency(latency: f64, cpu_latency_ns: f64) -> (f64, bool) {
    let raw = latency - cpu_latency_ns;
    if raw < MIN_DEVICE_LATENCY_NS {
        (MIN_DEVICE_LATENCY_NS, true)
    } else {
        (raw, false)
    }
}

/// Window bandwidth in GB/s (bytes per ns).
pub fn window_bandwidth(ops: u64, line_size: u32, elapsed_cycles: u64, cycle_ns: f64) -> f64 {
    (ops * line_size as u64) as f64 / (elapsed_cycles as f64 * cycle_ns)
}

/// Integer percent of reads, rounded to nearest.
pub fn read_ratio_pct(reads: u64, writes: u64) -> u8 {
    let total = reads + writes;
    if total == 0 {
        return 100;
    }
    ((100 * reads) as f64 / total as f64).round() as u8
}

/// The feedback controller over any [`LatencyModel`].
#[derive(Debug, Clone)]
pub struct Controller<M> {
    model: M,
    config: ControllerConfig,
    line_size: u32,
    cycle_ns: f64,
    state: ControllerState,
    records: Vec<WindowRecord>,
    floor_warned: bool,
}

impl<M: LatencyModel> Controller<M> {
    pub fn new(
        model: M,
        config: ControllerConfig,
        line_size: u32,
        cycle_ns: f64,
    ) -> Result<Self, SimulationError> {
        config.validate()?;
        if !(cycle_ns > 0.0 && cycle_ns.is_finite()) {
            return Err(SimulationError::Config(format!("cycle time must be positive, got {cycle_ns}")));
        }
        let latency = config
            .initial_latency_ns
            .unwrap_or_else(|| model.unloaded_latency());
        Ok(Self {
            model,
            config,
            line_size,
            cycle_ns,
            state: ControllerState {
                mess_bw: 0.0,
                latency,
                window_reads: 0,
                window_writes: 0,
                window_start_cycle: 0,
                window_index: 0,
            },
            records: Vec::new(),
            floor_warned: false,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn records(&self) -> &[WindowRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<WindowRecord> {
        self.records
    }

    /// Latency for requests issued in the current window.
    pub fn memory_latency(&mut self) -> f64 {
        let (lat, floored) = memory_latency(self.state.latency, self.config.cpu_latency_ns);
        if floored && !self.floor_warned {
            log::warn!(
                "curve latency {:.3} ns minus CPU latency {:.3} ns is below {MIN_DEVICE_LATENCY_NS} ns; flooring",
                self.state.latency,
                self.config.cpu_latency_ns
            );
            self.floor_warned = true;
        }
        lat
    }

    /// Counts one access; closes the window when it is full.
    pub fn record_access(
        &mut self,
        kind: OpKind,
        now_cycle: u64,
    ) -> Result<Option<WindowRecord>, SimulationError> {
        match kind {
            OpKind::Read => self.state.window_reads += 1,
            OpKind::Write => self.state.window_writes += 1,
        }
        if self.state.window_reads + self.state.window_writes >= self.config.window_ops {
            return self.close_window(now_cycle).map(Some);
        }
        Ok(None)
    }

    /// Ends the current window at `now_cycle` and updates the estimate.
    pub fn close_window(&mut self, now_cycle: u64) -> Result<WindowRecord, SimulationError> {
        let s = &self.state;
        let ops = s.window_reads + s.window_writes;
        let elapsed = now_cycle.saturating_sub(s.window_start_cycle);
        if elapsed == 0 {
            return Err(SimulationError::ZeroElapsed {
                window: s.window_index,
            });
        }
        let cpu_bw = window_bandwidth(ops, self.line_size, elapsed, self.cycle_ns);
        let read_ratio = read_ratio_pct(s.window_reads, s.window_writes);
        let ratio = read_ratio as f64;

        let proposed = update_estimate(s.mess_bw, cpu_bw, self.config.conv_factor);
        let ceiling = self.config.clamp_fraction * self.model.max_bandwidth(ratio);
        let clamped = proposed > ceiling;
        let mess_bw = if clamped { ceiling } else { proposed.max(0.0) };
        let lookup = self.model.lookup(ratio, mess_bw)?;

        let record = WindowRecord {
            window_index: s.window_index,
            ops,
            cpu_bw,
            mess_bw,
            read_ratio,
            latency_ns: lookup.latency,
            saturated: clamped || lookup.saturated,
        };
        self.state = ControllerState {
            mess_bw,
            latency: lookup.latency,
            window_reads: 0,
            window_writes: 0,
            window_start_cycle: now_cycle,
            window_index: s.window_index + 1,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Closes a trailing partial window, if it holds any operation.
    pub fn finish(&mut self, end_cycle: u64) -> Result<Option<WindowRecord>, SimulationError> {
        if self.state.window_reads + self.state.window_writes == 0 {
            return Ok(None);
        }
        let end = end_cycle.max(self.state.window_start_cycle + 1);
        self.close_window(end).map(Some)
    }
}

/// The feedback controller packaged as a [`MemoryDevice`].
///
/// In strict mode a saturated window turns into [`DeviceError::Saturation`],
/// which characterization sweeps treat as "skip this point".
#[derive(Debug, Clone)]
pub struct MessDevice<M> {
    controller: Controller<M>,
    strict: bool,
}

impl<M: LatencyModel> MessDevice<M> {
    pub fn new(
        model: M,
        config: ControllerConfig,
        line_size: u32,
        cycle_ns: f64,
    ) -> Result<Self, SimulationError> {
        Ok(Self {
            controller: Controller::new(model, config, line_size, cycle_ns)?,
            strict: false,
        })
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn controller(&self) -> &Controller<M> {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut Controller<M> {
        &mut self.controller
    }

    pub fn into_controller(self) -> Controller<M> {
        self.controller
    }
}

impl<M: LatencyModel> MemoryDevice for MessDevice<M> {
    fn latency(&mut self, request: &MemoryRequest) -> Result<f64, DeviceError> {
        let latency = self.controller.memory_latency();
        let closed = self
            .controller
            .record_access(request.kind, request.issue_cycle)
            .map_err(|e| match e {
                SimulationError::Device(d) => d,
                other => DeviceError::Simulation(other.to_string()),
            })?;
        if let Some(rec) = closed {
            if self.strict && rec.saturated {
                return Err(DeviceError::Saturation {
                    bandwidth: rec.cpu_bw,
                    limit: self.controller.model.max_bandwidth(rec.read_ratio as f64),
                });
            }
        }
        Ok(latency)
    }

    fn name(&self) -> &str {
        "mess"
    }
}

/// Passive per-window accounting for devices without a controller. Records
/// `mess_bw = cpu_bw` and the mean latency the device returned in the window.
#[derive(Debug, Clone)]
pub struct WindowMonitor<D> {
    inner: D,
    window_ops: u64,
    line_size: u32,
    cycle_ns: f64,
    reads: u64,
    writes: u64,
    latency_sum: f64,
    start_cycle: u64,
    records: Vec<WindowRecord>,
}

impl<D: MemoryDevice> WindowMonitor<D> {
    pub fn new(inner: D, window_ops: u64, line_size: u32, cycle_ns: f64) -> Self {
        Self {
            inner,
            window_ops: window_ops.max(1),
            line_size,
            cycle_ns,
            reads: 0,
            writes: 0,
            latency_sum: 0.0,
            start_cycle: 0,
            records: Vec::new(),
        }
    }

    fn close(&mut self, now_cycle: u64) {
        let ops = self.reads + self.writes;
        let elapsed = now_cycle.saturating_sub(self.start_cycle).max(1);
        let cpu_bw = window_bandwidth(ops, self.line_size, elapsed, self.cycle_ns);
        self.records.push(WindowRecord {
            window_index: self.records.len() as u64,
            ops,
            cpu_bw,
            mess_bw: cpu_bw,
            read_ratio: read_ratio_pct(self.reads, self.writes),
            latency_ns: self.latency_sum / ops as f64,
            saturated: false,
        });
        self.reads = 0;
        self.writes = 0;
        self.latency_sum = 0.0;
        self.start_cycle = now_cycle;
    }

    pub fn finish(&mut self, end_cycle: u64) {
        if self.reads + self.writes > 0 {
            self.close(end_cycle.max(self.start_cycle + 1));
        }
    }

    pub fn into_records(self) -> Vec<WindowRecord> {
        self.records
    }
}

impl<D: MemoryDevice> MemoryDevice for WindowMonitor<D> {
    fn latency(&mut self, request: &MemoryRequest) -> Result<f64, DeviceError> {
        let l = self.inner.latency(request)?;
        match request.kind {
            OpKind::Read => self.reads += 1,
            OpKind::Write => self.writes += 1,
        }
        self.latency_sum += l;
        if self.reads + self.writes >= self.window_ops {
            self.close(request.issue_cycle);
        }
        Ok(l)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no steady state below {limit:.3} GB/s: demand exceeds the model")]
    NoRoot { limit: f64 },
    #[error("invalid oracle input: {0}")]
    Input(String),
}

/// Bandwidth `b` at which a closed loop of `outstanding` requests, each
/// followed by `think_ns` of think time, sustains itself:
/// `b = outstanding·line_size / (think_ns + latency(b))`. Solved by bisection
/// to 1e-9 relative tolerance; returns `(b, latency(b))`.
pub fn steady_state_oracle<M: LatencyModel + ?Sized>(
    model: &M,
    read_ratio: f64,
    think_ns: f64,
    outstanding: u32,
    line_size: u32,
) -> Result<(f64, f64), OracleError> {
    if outstanding == 0 {
        return Err(OracleError::Input("at least one outstanding request".into()));
    }
    if !(think_ns >= 0.0) {
        return Err(OracleError::Input(format!("think time must be non-negative, got {think_ns}")));
    }
    let bytes = outstanding as f64 * line_size as f64;
    let limit = model.max_bandwidth(read_ratio);
    let lat = |b: f64| model.lookup(read_ratio, b).map(|l| l.latency);
    let residual = |b: f64| lat(b).map(|l| b - bytes / (think_ns + l));

    let mut lo = 0.0;
    // The model may have a pole at its maximum; approach it from below.
    let mut hi = limit * (1.0 - 1e-12);
    match residual(hi) {
        Ok(r) if r >= 0.0 => {}
        _ => return Err(OracleError::NoRoot { limit }),
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid).map_err(|_| OracleError::NoRoot { limit })?;
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let l = lat(b).map_err(|_| OracleError::NoRoot { limit })?;
    Ok((b, l))
}

/// Which device answers the core's requests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceMode {
    Mess,
    Fixed { latency_ns: f64 },
    Md1 { service_bandwidth_gbps: f64, base_latency_ns: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub device: String,
    pub total_cycles: u64,
    pub total_time_ns: f64,
    pub reads: u64,
    pub writes: u64,
    pub windows: usize,
    pub saturated_windows: usize,
    pub mean_latency_ns: f64,
    pub p50_latency_ns: f64,
    pub p95_latency_ns: f64,
    pub p99_latency_ns: f64,
    pub max_latency_ns: f64,
    pub mean_bandwidth_gbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub windows: Vec<WindowRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{RUN_LOG_CSV_HEADER}")?;
        for w in &self.windows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                w.window_index, w.cpu_bw, w.mess_bw, w.read_ratio, w.latency_ns, w.saturated
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("Vec writes cannot fail");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(
    device: &str,
    stats: &crate::frontend::CoreRunStats,
    windows: &[WindowRecord],
    core: &CoreConfig,
) -> RunSummary {
    let mut lat = stats.latencies_ns.clone();
    lat.sort_by(f64::total_cmp);
    let n = lat.len();
    RunSummary {
        device: device.to_string(),
        total_cycles: stats.total_cycles,
        total_time_ns: stats.total_cycles as f64 * core.cycle_ns(),
        reads: stats.reads,
        writes: stats.writes,
        windows: windows.len(),
        saturated_windows: windows.iter().filter(|w| w.saturated).count(),
        mean_latency_ns: if n == 0 { 0.0 } else { lat.iter().sum::<f64>() / n as f64 },
        p50_latency_ns: percentile(&lat, 50.0),
        p95_latency_ns: percentile(&lat, 95.0),
        p99_latency_ns: percentile(&lat, 99.0),
        max_latency_ns: lat.last().copied().unwrap_or(0.0),
        mean_bandwidth_gbps: stats.achieved_bandwidth_gbps,
    }
}

/// Drives a trace through the core model against the selected device.
pub fn run_simulation<I>(
    family: &CurveFamily,
    config: &ControllerConfig,
    records: I,
    core: &CoreConfig,
    mode: DeviceMode,
) -> Result<RunLog, SimulationError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    run_simulation_with_model(family, family.line_size, config, records, core, mode)
}

/// As [`run_simulation`], for any latency model.
pub fn run_simulation_with_model<M, I>(
    model: M,
    line_size: u32,
    config: &ControllerConfig,
    records: I,
    core: &CoreConfig,
    mode: DeviceMode,
) -> Result<RunLog, SimulationError>
where
    M: LatencyModel,
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    config.validate()?;
    core.validate().map_err(SimulationError::Config)?;
    let cycle_ns = core.cycle_ns();
    match mode {
        DeviceMode::Mess => {
            let mut device = MessDevice::new(model, config.clone(), line_size, cycle_ns)?;
            let stats = run_trace_core(records, core, &mut device)?;
            let mut controller = device.into_controller();
            controller.finish(stats.total_cycles)?;
            let windows = controller.into_records();
            let summary = summarize("mess", &stats, &windows, core);
            Ok(RunLog { windows, summary })
        }
        DeviceMode::Fixed { latency_ns } => {
            let inner = FixedLatencyDevice::new(latency_ns)?;
            run_monitored(inner, config, line_size, records, core)
        }
        DeviceMode::Md1 {
            service_bandwidth_gbps,
            base_latency_ns,
        } => {
            let inner = Md1Device::new(service_bandwidth_gbps, base_latency_ns, line_size, cycle_ns)?;
            run_monitored(inner, config, line_size, records, core)
        }
    }
}

fn run_monitored<D, I>(
    inner: D,
    config: &ControllerConfig,
    line_size: u32,
    records: I,
    core: &CoreConfig,
) -> Result<RunLog, SimulationError>
where
    D: MemoryDevice,
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    let name = inner.name().to_string();
    let mut device = WindowMonitor::new(inner, config.window_ops, line_size, core.cycle_ns());
    let stats = run_trace_core(records, core, &mut device)?;
    device.finish(stats.total_cycles);
    let windows = device.into_records();
    let summary = summarize(&name, &stats, &windows, core);
    Ok(RunLog { windows, summary })
}
