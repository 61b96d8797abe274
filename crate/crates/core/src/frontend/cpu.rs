use serde::Serialize;

use super::trace::{Timing, TraceError, TraceRecord};
use super::{CoreConfig, FrontendError, Mshr};
use crate::devices::{MemoryDevice, MemoryRequest, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpTiming {
    pub issue_cycle: u64,
    pub complete_cycle: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoreRunStats {
    /// Cycle at which the last operation completed (or the last instruction
    /// retired, if later).
    pub total_cycles: u64,
    pub reads: u64,
    pub writes: u64,
    /// Latency the device returned for each operation, in trace order.
    pub latencies_ns: Vec<f64>,
    pub timeline: Vec<OpTiming>,
    pub peak_outstanding: usize,
    pub achieved_bandwidth_gbps: f64,
}

/// Runs a trace through an in-order core with MSHR-bounded memory-level
/// parallelism.
///
/// Ramulator-style records advance the clock by `ceil(nonmem / ipc)` cycles
/// and then issue as soon as an MSHR slot is free. DRAMsim3-style records
/// issue at the later of their arrival cycle and the first free slot. Each
/// operation holds its slot for `ceil(latency_ns · frequency)` cycles; with
/// `reads_blocking` a read also holds the clock until it completes.
pub fn run_trace_core<I, D>(
    records: I,
    core: &CoreConfig,
    device: &mut D,
) -> Result<CoreRunStats, FrontendError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
    D: MemoryDevice + ?Sized,
{
    core.validate().map_err(FrontendError::Config)?;
    let mut mshr = Mshr::new(core.mshr_entries);
    let mut stats = CoreRunStats::default();
    let mut clock: u64 = 0;

    for rec in records {
        let rec = rec?;
        clock = match rec.timing {
            Timing::NonMem(n) => clock + (n as f64 / core.ipc_nonmem).ceil() as u64,
            Timing::Arrival(a) => clock.max(a),
        };
        let issue = mshr.earliest_free(clock);
        clock = issue;

        let request = MemoryRequest {
            kind: rec.kind,
            address: rec.address,
            issue_cycle: issue,
        };
        let latency = device.latency(&request)?;
        let complete = issue + core.latency_cycles(latency);
        mshr.acquire(issue, complete);
        if core.reads_blocking && rec.kind == OpKind::Read {
            clock = complete;
        }

        match rec.kind {
            OpKind::Read => stats.reads += 1,
            OpKind::Write => stats.writes += 1,
        }
        stats.latencies_ns.push(latency);
        stats.timeline.push(OpTiming {
            issue_cycle: issue,
            complete_cycle: complete,
        });
    }

    stats.total_cycles = clock.max(mshr.last_completion());
    stats.peak_outstanding = mshr.peak();
    let ops = stats.reads + stats.writes;
    stats.achieved_bandwidth_gbps = if stats.total_cycles == 0 {
        0.0
    } else {
        (ops * core.line_size as u64) as f64 / (stats.total_cycles as f64 * core.cycle_ns())
    };
    Ok(stats)
}
