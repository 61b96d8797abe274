//! Traffic sources for the memory devices: a minimal trace-driven core, and
//! a software analog of the loaded-latency benchmark (a dependent-load probe
//! running next to configurable traffic generators) used to characterize a
//! device into a curve family.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::devices::DeviceError;

mod cpu;
pub mod trace;
mod traffic;

pub use cpu::{run_trace_core, CoreRunStats, OpTiming};
pub use trace::{parse_trace, parse_trace_str, trace_to_string, write_trace, Timing, TraceError, TraceReader, TraceRecord,
    TraceStyle};
pub use traffic::{
    characterize, measure_point, run_generator, run_probe, CharacterizeConfig, GeneratorConfig,
    PointMeasurement, RatioPattern, TrafficStats,
};

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreConfig {
    pub frequency_ghz: f64,
    /// Non-memory instructions retired per cycle.
    pub ipc_nonmem: f64,
    /// Outstanding-miss slots (per core, or per generator stream).
    pub mshr_entries: usize,
    pub line_size: u32,
    /// Reads stall retirement until they complete.
    pub reads_blocking: bool,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self {
            frequency_ghz: 2.0,
            ipc_nonmem: 1.0,
            mshr_entries: 10,
            line_size: 64,
            reads_blocking: false,
        }
    }
}

impl CoreConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.frequency_ghz > 0.0 && self.frequency_ghz.is_finite()) {
            return Err(format!("frequency must be positive, got {}", self.frequency_ghz));
        }
        if !(self.ipc_nonmem > 0.0 && self.ipc_nonmem.is_finite()) {
            return Err(format!("IPC must be positive, got {}", self.ipc_nonmem));
        }
        if self.mshr_entries == 0 {
            return Err("at least one MSHR entry is required".into());
        }
        if self.line_size == 0 {
            return Err("line size must be positive".into());
        }
        Ok(())
    }

    pub fn cycle_ns(&self) -> f64 {
        1.0 / self.frequency_ghz
    }

    /// Cycles a request of `latency_ns` occupies, rounded up, at least one.
    pub fn latency_cycles(&self, latency_ns: f64) -> u64 {
        ((latency_ns * self.frequency_ghz).ceil() as u64).max(1)
    }
}

/// Outstanding-request slots, tracked by completion cycle.
#[derive(Debug, Clone)]
pub(crate) struct Mshr {
    capacity: usize,
    inflight: BinaryHeap<Reverse<u64>>,
    peak: usize,
    last_completion: u64,
}

impl Mshr {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            capacity,
            inflight: BinaryHeap::with_capacity(capacity),
            peak: 0,
            last_completion: 0,
        }
    }

    fn retire(&mut self, now: u64) {
        while let Some(&Reverse(c)) = self.inflight.peek() {
            if c > now {
                break;
            }
            self.inflight.pop();
        }
    }

    /// Earliest cycle at or after `at` with a free slot.
    pub(crate) fn earliest_free(&mut self, at: u64) -> u64 {
        self.retire(at);
        if self.inflight.len() < self.capacity {
            at
        } else {
            self.inflight.peek().map(|r| r.0).expect("full MSHR is non-empty")
        }
    }

    /// Occupies a slot from `at` until `completion`.
    pub(crate) fn acquire(&mut self, at: u64, completion: u64) {
        self.retire(at);
        assert!(
            self.inflight.len() < self.capacity,
            "MSHR overflow: {} outstanding with capacity {}",
            self.inflight.len(),
            self.capacity
        );
        self.inflight.push(Reverse(completion));
        self.peak = self.peak.max(self.inflight.len());
        self.last_completion = self.last_completion.max(completion);
    }

    pub(crate) fn peak(&self) -> usize {
        self.peak
    }

    pub(crate) fn last_completion(&self) -> u64 {
        self.last_completion
    }
}
