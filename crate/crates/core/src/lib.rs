//! Bandwidth-latency memory modelling.
//!
//! A memory system is described by a [`CurveFamily`]: one bandwidth-latency
//! curve per read/write mix. The [`simulator`] drives a feedback controller
//! over such a family to hand realistic latencies to a CPU model, the
//! [`frontend`] provides trace-driven and benchmark-style traffic, and
//! [`metrics`] and [`profiler`] summarize families and application
//! timelines.
//!
//! ```
//! use mess::synth::{platform, platform_family};
//!
//! let family = platform_family(platform("skylake")?, false)?;
//! let m = mess::metrics::family_metrics(&family);
//! assert_eq!(m.unloaded_latency, 89.0);
//! let l = family.lookup_latency(100.0, 50.0);
//! assert!(l.latency > 89.0 && !l.saturated);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod curves;
pub mod devices;
pub mod frontend;
pub mod metrics;
pub mod profiler;
pub mod simulator;
pub mod synth;

pub use curves::{load_family, save_family, Curve, CurveError, CurveFamily, CurvePoint, Lookup};
pub use devices::{DeviceError, LatencyModel, MemoryDevice, MemoryRequest, OpKind};
pub use simulator::{Controller, ControllerConfig, MessDevice, SimulationError};

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/curves.md")]
    mod curves {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/devices.md")]
    mod devices {}
    #[doc = include_str!("../../../book/src/characterization.md")]
    mod characterization {}
    #[doc = include_str!("../../../book/src/profiling.md")]
    mod profiling {}
}
