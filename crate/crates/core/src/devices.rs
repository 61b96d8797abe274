//! Memory devices: anything that can answer "what is the latency of this
//! request, now".
//!
//! The reference devices here are the ones simulators commonly ship with: a
//! fixed-latency memory, a single-server M/D/1 queue, and a closed-form
//! analytic curve used as a test oracle. The curve-driven feedback device
//! lives in [`crate::simulator`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveFamily, Lookup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryRequest {
    pub kind: OpKind,
    pub address: u64,
    pub issue_cycle: u64,
}

impl MemoryRequest {
    pub fn read(address: u64, issue_cycle: u64) -> Self {
        Self {
            kind: OpKind::Read,
            address,
            issue_cycle,
        }
    }

    pub fn write(address: u64, issue_cycle: u64) -> Self {
        Self {
            kind: OpKind::Write,
            address,
            issue_cycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("device saturated at {bandwidth:.3} GB/s (limit {limit:.3} GB/s)")]
    Saturation { bandwidth: f64, limit: f64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("invalid device configuration: {0}")]
    Config(String),
}

/// A memory device consulted once per request, in non-decreasing issue order.
pub trait MemoryDevice {
    /// Load-to-use latency in ns for `request`.
    fn latency(&mut self, request: &MemoryRequest) -> Result<f64, DeviceError>;

    fn name(&self) -> &str;
}

impl<D: MemoryDevice + ?Sized> MemoryDevice for Box<D> {
    fn latency(&mut self, request: &MemoryRequest) -> Result<f64, DeviceError> {
        (**self).latency(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// A bandwidth-to-latency map, parameterized by read ratio. Implemented by
/// curve families and by the analytic device.
pub trait LatencyModel {
    fn lookup(&self, read_ratio: f64, bandwidth: f64) -> Result<Lookup, DeviceError>;

    /// Highest bandwidth the model covers at `read_ratio`.
    fn max_bandwidth(&self, read_ratio: f64) -> f64;

    /// Latency of the most-read curve at zero load.
    fn unloaded_latency(&self) -> f64 {
        self.lookup(100.0, 0.0)
            .map(|l| l.latency)
            .expect("zero load is always in range")
    }
}

impl LatencyModel for CurveFamily {
    fn lookup(&self, read_ratio: f64, bandwidth: f64) -> Result<Lookup, DeviceError> {
        Ok(self.lookup_latency(read_ratio, bandwidth))
    }

    fn max_bandwidth(&self, read_ratio: f64) -> f64 {
        CurveFamily::max_bandwidth(self, read_ratio)
    }
}

impl<M: LatencyModel + ?Sized> LatencyModel for &M {
    fn lookup(&self, read_ratio: f64, bandwidth: f64) -> Result<Lookup, DeviceError> {
        (**self).lookup(read_ratio, bandwidth)
    }

    fn max_bandwidth(&self, read_ratio: f64) -> f64 {
        (**self).max_bandwidth(read_ratio)
    }

    fn unloaded_latency(&self) -> f64 {
        (**self).unloaded_latency()
    }
}

impl<M: LatencyModel + ?Sized> LatencyModel for std::sync::Arc<M> {
    fn lookup(&self, read_ratio: f64, bandwidth: f64) -> Result<Lookup, DeviceError> {
        (**self).lookup(read_ratio, bandwidth)
    }

    fn max_bandwidth(&self, read_ratio: f64) -> f64 {
        (**self).max_bandwidth(read_ratio)
    }

    fn unloaded_latency(&self) -> f64 {
        (**self).unloaded_latency()
    }
}

/// Parameters of the reference devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "device", rename_all = "snake_case")]
pub enum DeviceConfig {
    Fixed {
        latency_ns: f64,
    },
    Md1 {
        service_bandwidth_gbps: f64,
        base_latency_ns: f64,
    },
    Analytic {
        l0_ns: f64,
        k_ns: f64,
        bmax_gbps: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<(), DeviceError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DeviceError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), DeviceError> {
        match *self {
            DeviceConfig::Fixed { latency_ns } => positive("fixed latency", latency_ns),
            DeviceConfig::Md1 {
                service_bandwidth_gbps,
                base_latency_ns,
            } => {
                positive("service bandwidth", service_bandwidth_gbps)?;
                positive("base latency", base_latency_ns)
            }
            DeviceConfig::Analytic { l0_ns, k_ns, bmax_gbps } => {
                positive("L0", l0_ns)?;
                positive("k", k_ns)?;
                positive("Bmax", bmax_gbps)
            }
        }
    }
}

/// Constant latency, whatever the load.
#[derive(Debug, Clone)]
pub struct FixedLatencyDevice {
    latency_ns: f64,
}

impl FixedLatencyDevice {
    pub fn new(latency_ns: f64) -> Result<Self, DeviceError> {
        positive("fixed latency", latency_ns)?;
        Ok(Self { latency_ns })
    }
}

impl MemoryDevice for FixedLatencyDevice {
    fn latency(&mut self, _request: &MemoryRequest) -> Result<f64, DeviceError> {
        Ok(self.latency_ns)
    }

    fn name(&self) -> &str {
        "fixed"
    }
}

/// Single FIFO server with deterministic service time `line_size /
/// service_bandwidth`, shared by reads and writes.
#[derive(Debug, Clone)]
pub struct Md1Device {
    base_latency_ns: f64,
    service_ns: f64,
    cycle_ns: f64,
    last_arrival_ns: f64,
    last_completion_ns: f64,
}

impl Md1Device {
    /// `cycle_ns` converts request issue cycles to time.
    pub fn new(
        service_bandwidth_gbps: f64,
        base_latency_ns: f64,
        line_size: u32,
        cycle_ns: f64,
    ) -> Result<Self, DeviceError> {
        positive("service bandwidth", service_bandwidth_gbps)?;
        positive("base latency", base_latency_ns)?;
        positive("cycle time", cycle_ns)?;
        if line_size == 0 {
            return Err(DeviceError::Config("line size must be positive".into()));
        }
        Ok(Self {
            base_latency_ns,
            // bytes / (GB/s) = ns
            service_ns: line_size as f64 / service_bandwidth_gbps,
            cycle_ns,
            last_arrival_ns: f64::NEG_INFINITY,
            last_completion_ns: f64::NEG_INFINITY,
        })
    }

    pub fn service_ns(&self) -> f64 {
        self.service_ns
    }

    /// Latency for an arrival at `arrival_ns` (ns).
    pub fn arrive(&mut self, arrival_ns: f64) -> Result<f64, DeviceError> {
        if arrival_ns < self.last_arrival_ns {
            return Err(DeviceError::Protocol(format!(
                "arrival at {arrival_ns} ns precedes previous arrival at {} ns",
                self.last_arrival_ns
            )));
        }
        self.last_arrival_ns = arrival_ns;
        let completion = arrival_ns.max(self.last_completion_ns) + self.service_ns;
        self.last_completion_ns = completion;
        Ok(self.base_latency_ns + (completion - arrival_ns))
    }
}

impl MemoryDevice for Md1Device {
    fn latency(&mut self, request: &MemoryRequest) -> Result<f64, DeviceError> {
        self.arrive(request.issue_cycle as f64 * self.cycle_ns)
    }

    fn name(&self) -> &str {
        "md1"
    }
}

/// Closed-form curve `L0 + k·b / (Bmax − b)`, optionally penalized for write
/// traffic by `(1 + write_penalty·(100 − ratio)/50)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticDevice {
    pub l0_ns: f64,
    pub k_ns: f64,
    pub bmax_gbps: f64,
    pub write_penalty: f64,
}

impl AnalyticDevice {
    pub fn new(l0_ns: f64, k_ns: f64, bmax_gbps: f64) -> Result<Self, DeviceError> {
        DeviceConfig::Analytic {
            l0_ns,
            k_ns,
            bmax_gbps,
        }
        .validate()?;
        Ok(Self {
            l0_ns,
            k_ns,
            bmax_gbps,
            write_penalty: 0.0,
        })
    }

    pub fn with_write_penalty(mut self, penalty: f64) -> Self {
        self.write_penalty = penalty;
        self
    }

    pub fn latency_at(&self, bandwidth: f64) -> Result<f64, DeviceError> {
        if bandwidth >= self.bmax_gbps {
            return Err(DeviceError::Saturation {
                bandwidth,
                limit: self.bmax_gbps,
            });
        }
        Ok(self.l0_ns + self.k_ns * bandwidth / (self.bmax_gbps - bandwidth))
    }

    pub fn ratio_factor(&self, read_ratio: f64) -> f64 {
        1.0 + self.write_penalty * (100.0 - read_ratio) / 50.0
    }

    pub fn latency_at_ratio(&self, read_ratio: f64, bandwidth: f64) -> Result<f64, DeviceError> {
        Ok(self.latency_at(bandwidth)? * self.ratio_factor(read_ratio))
    }
}

impl LatencyModel for AnalyticDevice {
    fn lookup(&self, read_ratio: f64, bandwidth: f64) -> Result<Lookup, DeviceError> {
        Ok(Lookup {
            latency: self.latency_at_ratio(read_ratio, bandwidth)?,
            saturated: false,
        })
    }

    fn max_bandwidth(&self, _read_ratio: f64) -> f64 {
        self.bmax_gbps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_device_ignores_load() {
        let mut d = FixedLatencyDevice::new(89.0).unwrap();
        assert_eq!(d.latency(&MemoryRequest::read(0, 0)).unwrap(), 89.0);
        assert_eq!(d.latency(&MemoryRequest::write(64, 0)).unwrap(), 89.0);
        assert!(FixedLatencyDevice::new(0.0).is_err());
    }

    #[test]
    fn md1_empty_queue_and_fifo_wait() {
        // 64 B at 128 GB/s is 0.5 ns of service.
        let mut d = Md1Device::new(128.0, 89.0, 64, 0.5).unwrap();
        assert_eq!(d.service_ns(), 0.5);
        assert_eq!(d.latency(&MemoryRequest::read(0, 10)).unwrap(), 89.5);
        let mut d = Md1Device::new(128.0, 89.0, 64, 0.5).unwrap();
        assert_eq!(d.latency(&MemoryRequest::read(0, 10)).unwrap(), 89.5);
        assert_eq!(d.latency(&MemoryRequest::write(64, 10)).unwrap(), 90.0);
    }

    #[test]
    fn md1_rejects_arrival_regression() {
        let mut d = Md1Device::new(128.0, 89.0, 64, 0.5).unwrap();
        d.latency(&MemoryRequest::read(0, 10)).unwrap();
        assert!(matches!(
            d.latency(&MemoryRequest::read(0, 9)),
            Err(DeviceError::Protocol(_))
        ));
    }

    #[test]
    fn md1_at_critical_load_never_recovers() {
        // One arrival per service time plus one extra request: the wait never drains.
        let mut d = Md1Device::new(64.0, 89.0, 64, 1.0).unwrap();
        d.arrive(0.0).unwrap();
        let mut prev = 0.0;
        for i in 0..1000 {
            let l = d.arrive(i as f64).unwrap();
            assert!(l >= prev);
            prev = l;
        }
        assert!(prev > 89.0 + 1.0);
    }

    #[test]
    fn analytic_device_values() {
        let d = AnalyticDevice::new(89.0, 31.2, 128.0).unwrap();
        assert_eq!(d.latency_at(0.0).unwrap(), 89.0);
        // 89 + 31.2·116/12 = 89 + 301.6
        assert!((d.latency_at(116.0).unwrap() - 390.6).abs() < 1e-9);
        assert!(matches!(d.latency_at(128.0), Err(DeviceError::Saturation { .. })));
    }

    #[test]
    fn analytic_write_penalty() {
        let d = AnalyticDevice::new(89.0, 31.2, 128.0).unwrap().with_write_penalty(0.3);
        assert_eq!(d.latency_at_ratio(100.0, 0.0).unwrap(), 89.0);
        assert!((d.latency_at_ratio(50.0, 0.0).unwrap() - 89.0 * 1.3).abs() < 1e-12);
    }
}
