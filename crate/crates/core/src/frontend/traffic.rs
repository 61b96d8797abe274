//! Simulated loaded-latency benchmark.
//!
//! A dependent-load probe (exactly one outstanding read) runs alongside a
//! set of traffic-generator streams, all sharing one device instance. The
//! streams issue at a fixed inter-request gap, bounded by their MSHR slots,
//! and interleave reads and writes in a fixed pattern so that every pattern
//! period holds exactly the configured read ratio. A single deterministic
//! event loop orders all issues by cycle, ties broken by agent index (probe
//! first).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use super::{CoreConfig, FrontendError, Mshr};
use crate::curves::{Curve, CurveFamily, CurvePoint};
use crate::devices::{DeviceError, MemoryDevice, MemoryRequest, OpKind};

/// Deterministic read/write interleaving for a given read percentage.
///
/// Operation `i` is a read when `floor((i+1)·r/100) > floor(i·r/100)`, which
/// spreads the reads evenly and makes every block of `100 / gcd(r, 100)`
/// consecutive operations hold exactly `r` percent reads.
#[derive(Debug, Clone)]
pub struct RatioPattern {
    ratio: u64,
    index: u64,
}

impl RatioPattern {
    pub fn new(read_ratio: u8) -> Self {
        Self::with_phase(read_ratio, 0)
    }

    /// Pattern started `phase` operations in.
    pub fn with_phase(read_ratio: u8, phase: u64) -> Self {
        Self {
            ratio: read_ratio.min(100) as u64,
            index: phase,
        }
    }

    /// Length of the repeating pattern.
    pub fn period(&self) -> u64 {
        100 / gcd(self.ratio, 100)
    }

    pub fn next_kind(&mut self) -> OpKind {
        let i = self.index;
        self.index += 1;
        if (i + 1) * self.ratio / 100 > i * self.ratio / 100 {
            OpKind::Read
        } else {
            OpKind::Write
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub streams: u32,
    pub read_ratio: u8,
    /// Minimum cycles between consecutive issues of one stream.
    pub gap_cycles: u64,
    /// Operations per stream (for [`run_generator`]).
    pub duration_ops: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), FrontendError> {
        if self.read_ratio > 100 {
            return Err(FrontendError::Config(format!(
                "read ratio {} outside 0..=100",
                self.read_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Role {
    Probe,
    Stream { pattern: RatioPattern, gap: u64 },
}

#[derive(Debug, Clone)]
struct Agent {
    role: Role,
    mshr: Mshr,
    next_address: u64,
    issued: u64,
    reads: u64,
    writes: u64,
    limit: Option<u64>,
}

struct TrafficSpec {
    streams: u32,
    read_ratio: u8,
    gap: u64,
    stream_ops: Option<u64>,
    probe_ops: Option<u64>,
    warmup_ops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrafficStats {
    /// Start and end of the measurement interval, in cycles.
    pub measure_start_cycle: u64,
    pub measure_end_cycle: u64,
    pub measured_ops: u64,
    /// Bandwidth of all traffic (probe included) over the measurement interval.
    pub bandwidth_gbps: f64,
    pub probe_latencies_ns: Vec<f64>,
    pub probe_mean_latency_ns: f64,
    pub probe_peak_outstanding: usize,
    pub stream_reads: Vec<u64>,
    pub stream_writes: Vec<u64>,
    pub stream_peak_outstanding: Vec<usize>,
    pub total_ops: u64,
}

fn simulate<D: MemoryDevice + ?Sized>(
    device: &mut D,
    core: &CoreConfig,
    spec: &TrafficSpec,
) -> Result<TrafficStats, FrontendError> {
    core.validate().map_err(FrontendError::Config)?;
    if spec.probe_ops.is_none() && spec.stream_ops.is_none() && spec.streams > 0 {
        return Err(FrontendError::Config("unbounded generator run without a probe".into()));
    }
    let line = core.line_size as u64;
    let mut agents = Vec::new();
    let mut heap = BinaryHeap::new();
    if let Some(n) = spec.probe_ops {
        if n == 0 {
            return Err(FrontendError::Config("probe needs at least one operation".into()));
        }
        agents.push(Agent {
            role: Role::Probe,
            mshr: Mshr::new(1),
            next_address: 0,
            issued: 0,
            reads: 0,
            writes: 0,
            limit: None,
        });
        heap.push(Reverse((0u64, 0usize)));
    }
    let streams = spec.streams as u64;
    for s in 0..streams {
        if spec.stream_ops == Some(0) {
            break;
        }
        let idx = agents.len();
        agents.push(Agent {
            role: Role::Stream {
                // Out of phase, so concurrent streams do not issue all their
                // reads (or writes) together.
                pattern: RatioPattern::with_phase(spec.read_ratio, s),
                gap: spec.gap,
            },
            mshr: Mshr::new(core.mshr_entries),
            // Distinct high bits per stream, sequential lines within it.
            next_address: (s + 1) << 40,
            issued: 0,
            reads: 0,
            writes: 0,
            limit: spec.stream_ops,
        });
        // Stagger stream start times across one gap.
        heap.push(Reverse((s * spec.gap / streams, idx)));
    }

    let mut total_ops = 0u64;
    let mut measuring = false;
    let mut t0 = 0u64;
    let mut measured_ops = 0u64;
    let mut probe_latencies = Vec::new();
    let mut stop_at: Option<u64> = None;

    while let Some(Reverse((t, i))) = heap.pop() {
        if stop_at.is_some_and(|s| t >= s) {
            break;
        }
        if !measuring && total_ops >= spec.warmup_ops {
            measuring = true;
            t0 = t;
        }
        let agent = &mut agents[i];
        let kind = match &mut agent.role {
            Role::Probe => OpKind::Read,
            Role::Stream { pattern, .. } => pattern.next_kind(),
        };
        let request = MemoryRequest {
            kind,
            address: agent.next_address,
            issue_cycle: t,
        };
        agent.next_address += line;
        let latency = device.latency(&request)?;
        let complete = t + core.latency_cycles(latency);
        agent.mshr.acquire(t, complete);
        agent.issued += 1;
        match kind {
            OpKind::Read => agent.reads += 1,
            OpKind::Write => agent.writes += 1,
        }
        total_ops += 1;
        if measuring {
            measured_ops += 1;
        }
        if agent.limit.is_some_and(|l| agent.issued >= l) {
            continue;
        }
        match agent.role {
            Role::Probe => {
                if measuring {
                    probe_latencies.push(latency);
                    if probe_latencies.len() as u64 >= spec.probe_ops.unwrap_or(u64::MAX) {
                        stop_at = Some(complete);
                        continue;
                    }
                }
                heap.push(Reverse((complete, i)));
            }
            Role::Stream { gap, .. } => {
                let next = agent.mshr.earliest_free(t + gap);
                heap.push(Reverse((next, i)));
            }
        }
    }

    let t1 = match stop_at {
        Some(s) => s,
        None => agents.iter().map(|a| a.mshr.last_completion()).max().unwrap_or(0),
    };
    let elapsed = t1.saturating_sub(t0);
    let bandwidth = if elapsed == 0 {
        0.0
    } else {
        (measured_ops * line) as f64 / (elapsed as f64 * core.cycle_ns())
    };
    let probe_mean = if probe_latencies.is_empty() {
        0.0
    } else {
        probe_latencies.iter().sum::<f64>() / probe_latencies.len() as f64
    };
    let (probe, gens): (Vec<&Agent>, Vec<&Agent>) =
        agents.iter().partition(|a| matches!(a.role, Role::Probe));
    Ok(TrafficStats {
        measure_start_cycle: t0,
        measure_end_cycle: t1,
        measured_ops,
        bandwidth_gbps: bandwidth,
        probe_mean_latency_ns: probe_mean,
        probe_latencies_ns: probe_latencies,
        probe_peak_outstanding: probe.first().map_or(0, |a| a.mshr.peak()),
        stream_reads: gens.iter().map(|a| a.reads).collect(),
        stream_writes: gens.iter().map(|a| a.writes).collect(),
        stream_peak_outstanding: gens.iter().map(|a| a.mshr.peak()).collect(),
        total_ops,
    })
}

/// Mean latency of `duration_ops` strictly serialized reads on an otherwise
/// idle device.
pub fn run_probe<D: MemoryDevice + ?Sized>(
    device: &mut D,
    core: &CoreConfig,
    duration_ops: u64,
) -> Result<f64, FrontendError> {
    let stats = simulate(
        device,
        core,
        &TrafficSpec {
            streams: 0,
            read_ratio: 100,
            gap: 0,
            stream_ops: None,
            probe_ops: Some(duration_ops),
            warmup_ops: 0,
        },
    )?;
    Ok(stats.probe_mean_latency_ns)
}

/// Aggregate bandwidth of the generator streams alone, each issuing
/// `duration_ops` operations; measured from cycle 0 to the last completion.
pub fn run_generator<D: MemoryDevice + ?Sized>(
    device: &mut D,
    gen: &GeneratorConfig,
    core: &CoreConfig,
) -> Result<TrafficStats, FrontendError> {
    gen.validate()?;
    simulate(
        device,
        core,
        &TrafficSpec {
            streams: gen.streams,
            read_ratio: gen.read_ratio,
            gap: gen.gap_cycles,
            stream_ops: Some(gen.duration_ops),
            probe_ops: None,
            warmup_ops: 0,
        },
    )
}

/// One characterization point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMeasurement {
    pub read_ratio: u8,
    pub gap_cycles: u64,
    /// Total bandwidth, probe traffic included.
    pub bandwidth_gbps: f64,
    pub latency_ns: f64,
    pub stats: TrafficStats,
}

/// Runs probe and generators together. The first `warmup_ops` device
/// operations are discarded; measurement then lasts until the probe has
/// completed `probe_ops` reads.
pub fn measure_point<D: MemoryDevice + ?Sized>(
    device: &mut D,
    gen: &GeneratorConfig,
    core: &CoreConfig,
    probe_ops: u64,
    warmup_ops: u64,
) -> Result<PointMeasurement, FrontendError> {
    gen.validate()?;
    let stats = simulate(
        device,
        core,
        &TrafficSpec {
            streams: gen.streams,
            read_ratio: gen.read_ratio,
            gap: gen.gap_cycles,
            stream_ops: None,
            probe_ops: Some(probe_ops),
            warmup_ops,
        },
    )?;
    Ok(PointMeasurement {
        read_ratio: gen.read_ratio,
        gap_cycles: gen.gap_cycles,
        bandwidth_gbps: stats.bandwidth_gbps,
        latency_ns: stats.probe_mean_latency_ns,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizeConfig {
    pub ratios: Vec<u8>,
    /// Inter-request gaps to sweep; measured from the largest (lowest
    /// pressure) down.
    pub gaps: Vec<u64>,
    pub streams: u32,
    pub core: CoreConfig,
    pub probe_ops: u64,
    pub warmup_ops: u64,
    pub platform_name: String,
    pub theoretical_max_bandwidth: Option<f64>,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self {
            ratios: (50..=100).step_by(10).collect(),
            gaps: vec![10_000, 2_000, 1_000, 500, 200, 100, 50, 20, 10, 5, 2, 1, 0],
            streams: 16,
            core: CoreConfig::default(),
            probe_ops: 200,
            warmup_ops: 50_000,
            platform_name: "characterized".into(),
            theoretical_max_bandwidth: None,
        }
    }
}

/// Sweeps read ratio × pressure, building one curve per ratio. Each point
/// gets a fresh device from `make_device`; points run in parallel on the
/// current rayon pool. Points where the device saturates are skipped.
pub fn characterize<'a, F>(
    make_device: F,
    config: &CharacterizeConfig,
) -> Result<CurveFamily, FrontendError>
where
    F: Fn() -> Result<Box<dyn MemoryDevice + 'a>, DeviceError> + Sync,
{
    if config.ratios.is_empty() || config.gaps.is_empty() {
        return Err(FrontendError::Config("empty ratio or pressure sweep".into()));
    }
    let mut gaps = config.gaps.clone();
    gaps.sort_unstable_by(|a, b| b.cmp(a));
    gaps.dedup();
    let mut ratios = config.ratios.clone();
    ratios.sort_unstable();
    ratios.dedup();

    let jobs: Vec<(u8, u64)> = ratios
        .iter()
        .flat_map(|&r| gaps.iter().map(move |&g| (r, g)))
        .collect();
    let results: Vec<Result<Option<PointMeasurement>, FrontendError>> = jobs
        .par_iter()
        .map(|&(ratio, gap)| {
            let mut device = make_device()?;
            let gen = GeneratorConfig {
                streams: config.streams,
                read_ratio: ratio,
                gap_cycles: gap,
                duration_ops: 0,
            };
            match measure_point(&mut *device, &gen, &config.core, config.probe_ops, config.warmup_ops) {
                Ok(m) => Ok(Some(m)),
                Err(FrontendError::Device(
                    e @ (DeviceError::Saturation { .. } | DeviceError::Simulation(_)),
                )) => {
                    log::warn!("ratio {ratio}%, gap {gap}: point skipped ({e})");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut per_ratio: Vec<(u8, Vec<CurvePoint>)> = ratios.iter().map(|&r| (r, Vec::new())).collect();
    for ((ratio, _), res) in jobs.iter().zip(results) {
        if let Some(m) = res? {
            let p = CurvePoint::new(m.bandwidth_gbps, m.latency_ns);
            if p.is_valid() {
                let slot = per_ratio.iter_mut().find(|(r, _)| r == ratio).expect("known ratio");
                slot.1.push(p);
            }
        }
    }
    let curves: Vec<Curve> = per_ratio
        .into_iter()
        .filter_map(|(r, pts)| {
            if pts.is_empty() {
                log::warn!("ratio {r}%: every point saturated, curve dropped");
                None
            } else {
                Some(Curve::new(r, pts))
            }
        })
        .collect();
    CurveFamily::new(
        config.platform_name.clone(),
        config.theoretical_max_bandwidth,
        config.core.line_size,
        curves,
    )
    .map_err(|e| FrontendError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{FixedLatencyDevice, Md1Device};

    #[test]
    fn ratio_fifty_alternates() {
        let mut p = RatioPattern::new(50);
        let kinds: Vec<OpKind> = (0..6).map(|_| p.next_kind()).collect();
        assert!(kinds.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(p.period(), 2);
    }

    #[test]
    fn ratio_seventy_has_seven_reads_per_ten() {
        let mut p = RatioPattern::new(70);
        assert_eq!(p.period(), 10);
        for _ in 0..5 {
            let reads = (0..10).filter(|_| p.next_kind() == OpKind::Read).count();
            assert_eq!(reads, 7);
        }
    }

    #[test]
    fn extreme_ratios() {
        let mut all = RatioPattern::new(100);
        assert!((0..10).all(|_| all.next_kind() == OpKind::Read));
        let mut none = RatioPattern::new(0);
        assert!((0..10).all(|_| none.next_kind() == OpKind::Write));
    }

    #[test]
    fn probe_on_fixed_device() {
        let mut d = FixedLatencyDevice::new(89.0).unwrap();
        assert_eq!(run_probe(&mut d, &CoreConfig::default(), 100).unwrap(), 89.0);
    }

    #[test]
    fn probe_on_idle_md1_sees_base_plus_service() {
        let core = CoreConfig::default();
        let mut d = Md1Device::new(128.0, 89.0, 64, core.cycle_ns()).unwrap();
        let mean = run_probe(&mut d, &core, 50).unwrap();
        assert!((mean - 89.5).abs() < 1e-9);
    }

    #[test]
    fn loaded_md1_probe_waits() {
        let core = CoreConfig {
            mshr_entries: 32,
            ..CoreConfig::default()
        };
        let mut d = Md1Device::new(128.0, 89.0, 64, core.cycle_ns()).unwrap();
        let gen = GeneratorConfig {
            streams: 16,
            read_ratio: 100,
            gap_cycles: 0,
            duration_ops: 0,
        };
        let m = measure_point(&mut d, &gen, &core, 100, 10_000).unwrap();
        assert!(m.latency_ns > 89.5);
        assert_eq!(m.stats.probe_peak_outstanding, 1);
    }

    #[test]
    fn rate_limited_generator() {
        let core = CoreConfig::default();
        let mut d = FixedLatencyDevice::new(89.0).unwrap();
        let gen = GeneratorConfig {
            streams: 4,
            read_ratio: 100,
            gap_cycles: 2_000,
            duration_ops: 500,
        };
        let s = run_generator(&mut d, &gen, &core).unwrap();
        let expected = 4.0 * 64.0 / (2_000.0 * core.cycle_ns());
        assert!((s.bandwidth_gbps - expected).abs() / expected < 0.01);
    }

    #[test]
    fn concurrency_limited_generator() {
        let core = CoreConfig::default();
        let mut d = FixedLatencyDevice::new(89.0).unwrap();
        let gen = GeneratorConfig {
            streams: 3,
            read_ratio: 70,
            gap_cycles: 0,
            duration_ops: 1_000,
        };
        let s = run_generator(&mut d, &gen, &core).unwrap();
        let expected = 3.0 * 10.0 * 64.0 / 89.0;
        assert!((s.bandwidth_gbps - expected).abs() < 1e-9, "{}", s.bandwidth_gbps);
        assert!(s.stream_peak_outstanding.iter().all(|&p| p == 10));
        assert!(s.stream_reads.iter().all(|&r| r == 700));
    }

    #[test]
    fn characterize_fixed_device_is_flat() {
        let cfg = CharacterizeConfig {
            ratios: vec![50, 100],
            gaps: vec![1000, 100, 10, 0],
            streams: 4,
            probe_ops: 20,
            warmup_ops: 1000,
            ..CharacterizeConfig::default()
        };
        let fam = characterize(
            || Ok(Box::new(FixedLatencyDevice::new(89.0)?) as Box<dyn MemoryDevice>),
            &cfg,
        )
        .unwrap();
        assert_eq!(fam.read_ratios(), vec![50, 100]);
        for c in fam.curves() {
            assert_eq!(c.points().len(), 4);
            assert!(c.points().iter().all(|p| p.latency == 89.0));
            // measurement order is increasing pressure
            assert!(c.points().windows(2).all(|w| w[1].bandwidth >= 0.98 * w[0].bandwidth));
        }
    }
}
