//! Strategies and property bodies shared by the property tests and the
//! acceptance runner.
#![allow(dead_code)]

use mess::curves::{build_envelope, Curve, CurveFamily, CurvePoint};
use mess::devices::{FixedLatencyDevice, Md1Device, MemoryDevice, OpKind};
use mess::frontend::{
    measure_point, run_generator, run_trace_core, CoreConfig, GeneratorConfig, RatioPattern, TraceRecord,
};
use mess::profiler::{normalized_slope, stress_score, StressWeights};
use mess::simulator::{run_simulation, ControllerConfig, DeviceMode};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn raw_points() -> impl Strategy<Value = Vec<CurvePoint>> {
    // Half-unit grid so that duplicates and ties show up often.
    prop::collection::vec((0u32..400, 100u32..1000), 1..40).prop_map(|v| {
        v.into_iter()
            .map(|(b, l)| CurvePoint::new(b as f64 * 0.5, l as f64 * 0.5))
            .collect()
    })
}

/// Curve whose raw points all lie on the envelope: strictly increasing in
/// both bandwidth and latency.
pub fn monotone_points() -> impl Strategy<Value = Vec<CurvePoint>> {
    (
        1.0f64..20.0,
        50.0f64..150.0,
        prop::collection::vec((0.1f64..20.0, 0.1f64..50.0), 1..15),
    )
        .prop_map(|(b0, l0, steps)| {
            let mut out = vec![CurvePoint::new(b0, l0)];
            let (mut b, mut l) = (b0, l0);
            for (db, dl) in steps {
                b += db;
                l += dl;
                out.push(CurvePoint::new(b, l));
            }
            out
        })
}

pub fn monotone_family() -> impl Strategy<Value = CurveFamily> {
    prop::collection::btree_map(0u8..=100, monotone_points(), 1..5).prop_map(|m| {
        CurveFamily::from_curves(m.into_iter().map(|(r, p)| Curve::new(r, p))).unwrap()
    })
}

pub fn envelope_dominance(points: Vec<CurvePoint>) -> Result<(), TestCaseError> {
    let env = build_envelope(&points);
    prop_assert!(!env.is_empty());
    for w in env.windows(2) {
        prop_assert!(w[0].bandwidth < w[1].bandwidth);
        prop_assert!(w[0].latency < w[1].latency);
    }
    for e in &env {
        prop_assert!(points.contains(e));
        prop_assert!(!points.iter().any(|p| p.dominates(e)));
    }
    for p in &points {
        prop_assert!(env
            .iter()
            .any(|e| e.bandwidth >= p.bandwidth && e.latency <= p.latency));
    }
    Ok(())
}

pub fn lookup_monotone_exact(
    (points, queries): (Vec<CurvePoint>, Vec<f64>),
) -> Result<(), TestCaseError> {
    let curve = Curve::new(100, points);
    let mut qs = queries;
    qs.sort_by(f64::total_cmp);
    let mut last = f64::NEG_INFINITY;
    for q in qs {
        let l = curve.lookup(q);
        prop_assert!(l.latency >= last);
        prop_assert_eq!(l.saturated, q > curve.max_bandwidth());
        last = l.latency;
    }
    for e in curve.envelope() {
        let l = curve.lookup(e.bandwidth);
        prop_assert_eq!(l.latency, e.latency);
        prop_assert!(!l.saturated);
    }
    Ok(())
}

pub fn lookup_case() -> impl Strategy<Value = (Vec<CurvePoint>, Vec<f64>)> {
    (raw_points(), prop::collection::vec(0.0f64..250.0, 1..30))
}

pub fn skylake_like() -> CurveFamily {
    mess::synth::platform_family(mess::synth::platform("skylake").unwrap(), false).unwrap()
}

/// Traces with at least one instruction between memory operations, so no
/// window can close in the cycle it opened (that is a reported error).
pub fn trace_case() -> impl Strategy<Value = (Vec<(u64, bool)>, u64)> {
    (prop::collection::vec((1u64..20, any::<bool>()), 1..3000), 1u64..400)
}

fn to_records(ops: &[(u64, bool)]) -> Vec<Result<TraceRecord, mess::frontend::TraceError>> {
    ops.iter()
        .enumerate()
        .map(|(i, &(n, read))| {
            let kind = if read { OpKind::Read } else { OpKind::Write };
            Ok(TraceRecord::ramulator(n, kind, 64 * i as u64))
        })
        .collect()
}

/// Windows partition the operation stream: full windows of `window_ops`,
/// at most one trailing partial window, nothing lost.
pub fn window_partition((ops, window): (Vec<(u64, bool)>, u64)) -> Result<(), TestCaseError> {
    let family = skylake_like();
    let cfg = ControllerConfig {
        window_ops: window,
        ..ControllerConfig::default()
    };
    let core = CoreConfig::default();
    let log = run_simulation(&family, &cfg, to_records(&ops), &core, DeviceMode::Mess)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let n = ops.len() as u64;
    prop_assert_eq!(log.windows.len() as u64, n.div_ceil(window));
    prop_assert_eq!(log.windows.iter().map(|w| w.ops).sum::<u64>(), n);
    let (last, full) = log.windows.split_last().unwrap();
    prop_assert!(full.iter().all(|w| w.ops == window));
    prop_assert!(last.ops >= 1 && last.ops <= window);
    for (i, w) in log.windows.iter().enumerate() {
        prop_assert_eq!(w.window_index, i as u64);
    }
    Ok(())
}

pub fn traffic_case() -> impl Strategy<Value = (u32, u8, u64, usize, f64)> {
    (1u32..8, 0u8..=100, 0u64..400, 1usize..12, 20.0f64..300.0)
}

fn measure(
    device: &mut dyn MemoryDevice,
    (streams, ratio, gap, mshr, _): (u32, u8, u64, usize, f64),
) -> Result<mess::frontend::PointMeasurement, TestCaseError> {
    let core = CoreConfig {
        mshr_entries: mshr,
        ..CoreConfig::default()
    };
    let gen = GeneratorConfig {
        streams,
        read_ratio: ratio,
        gap_cycles: gap,
        duration_ops: 0,
    };
    measure_point(device, &gen, &core, 20, 500).map_err(|e| TestCaseError::fail(e.to_string()))
}

/// Identical inputs give bit-identical results, for both the benchmark and
/// the trace-driven simulation.
pub fn determinism(case: (u32, u8, u64, usize, f64)) -> Result<(), TestCaseError> {
    let run = || -> Result<_, TestCaseError> {
        let mut d = Md1Device::new(64.0, case.4, 64, 0.5).unwrap();
        measure(&mut d, case)
    };
    let (a, b) = (run()?, run()?);
    prop_assert_eq!(a.bandwidth_gbps.to_bits(), b.bandwidth_gbps.to_bits());
    prop_assert_eq!(a.latency_ns.to_bits(), b.latency_ns.to_bits());
    prop_assert_eq!(&a.stats, &b.stats);

    let ops: Vec<(u64, bool)> = (0..600u64).map(|i| (i % (case.3 as u64 + 3), i % 3 != 0)).collect();
    let sim = || {
        run_simulation(
            &skylake_like(),
            &ControllerConfig {
                window_ops: 50,
                ..ControllerConfig::default()
            },
            to_records(&ops),
            &CoreConfig {
                mshr_entries: case.3,
                ..CoreConfig::default()
            },
            DeviceMode::Mess,
        )
        .unwrap()
    };
    prop_assert_eq!(sim().to_csv_string(), sim().to_csv_string());
    Ok(())
}

/// The dependent-load probe never has more than one request in flight.
pub fn probe_single_outstanding(case: (u32, u8, u64, usize, f64)) -> Result<(), TestCaseError> {
    let mut d = Md1Device::new(64.0, case.4, 64, 0.5).unwrap();
    let m = measure(&mut d, case)?;
    prop_assert_eq!(m.stats.probe_peak_outstanding, 1);
    prop_assert_eq!(m.stats.probe_latencies_ns.len(), 20);
    Ok(())
}

/// No stream, and no trace-driven core, exceeds its MSHR count.
pub fn mshr_bound(case: (u32, u8, u64, usize, f64)) -> Result<(), TestCaseError> {
    let (streams, ratio, gap, mshr, lat) = case;
    let core = CoreConfig {
        mshr_entries: mshr,
        ..CoreConfig::default()
    };
    let mut d = FixedLatencyDevice::new(lat).unwrap();
    let gen = GeneratorConfig {
        streams,
        read_ratio: ratio,
        gap_cycles: gap,
        duration_ops: 200,
    };
    let s = run_generator(&mut d, &gen, &core).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(s.stream_peak_outstanding.iter().all(|&p| p <= mshr));
    let busy = (lat * 2.0).ceil() as u64 > gap * mshr as u64;
    if busy {
        // Concurrency-limited: every slot ends up in use.
        prop_assert!(s.stream_peak_outstanding.iter().all(|&p| p == mshr));
    }

    let recs: Vec<_> = (0..300u64)
        .map(|i| Ok(TraceRecord::ramulator(i % (gap + 1), OpKind::Read, i * 64)))
        .collect();
    let mut d = FixedLatencyDevice::new(lat).unwrap();
    let stats = run_trace_core(recs, &core, &mut d).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(stats.peak_outstanding <= mshr);
    Ok(())
}

/// The first `n` operations of a stream hold exactly `floor(n·r/100)` reads.
/// With any phase, every whole period holds exactly `r` percent reads,
/// and a generator stream's read count matches its pattern.
pub fn ratio_exactness((ratio, n, phase): (u8, u64, u64)) -> Result<(), TestCaseError> {
    let mut p = RatioPattern::new(ratio);
    let reads = (0..n).filter(|_| p.next_kind() == OpKind::Read).count() as u64;
    prop_assert_eq!(reads, n * ratio as u64 / 100);

    let mut p = RatioPattern::with_phase(ratio, phase);
    let periods = n % 7 + 1;
    let len = periods * p.period();
    let reads = (0..len).filter(|_| p.next_kind() == OpKind::Read).count() as u64;
    prop_assert_eq!(reads * 100, len * ratio as u64);

    let streams = (phase % 5 + 1) as u32;
    let gen = GeneratorConfig {
        streams,
        read_ratio: ratio,
        gap_cycles: 3,
        duration_ops: len,
    };
    let mut d = FixedLatencyDevice::new(50.0).unwrap();
    let s = run_generator(&mut d, &gen, &CoreConfig::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (r, w) in s.stream_reads.iter().zip(&s.stream_writes) {
        prop_assert_eq!(r + w, len);
        prop_assert_eq!(r * 100, len * ratio as u64);
    }
    Ok(())
}

pub fn ratio_case() -> impl Strategy<Value = (u8, u64, u64)> {
    (0u8..=100, 0u64..5000, 0u64..1000)
}

/// Score is 0 at the unloaded point and 1 at the right-most end of the
/// curve holding the family's maximum latency.
pub fn stress_anchors(family: CurveFamily) -> Result<(), TestCaseError> {
    let w = StressWeights::default();
    let unloaded = family.unloaded_latency();
    let max = family.max_latency();
    let low = family
        .curves()
        .find(|c| c.min_latency() == unloaded)
        .unwrap();
    let first = low.envelope()[0];
    prop_assert_eq!(
        stress_score(&family, low.read_ratio() as f64, first.bandwidth, w),
        0.0
    );
    prop_assert_eq!(stress_score(&family, low.read_ratio() as f64, 0.0, w), 0.0);
    let high = family.curves().find(|c| c.max_latency() == max).unwrap();
    let s = stress_score(&family, high.read_ratio() as f64, high.max_bandwidth(), w);
    prop_assert!((s - 1.0).abs() < 1e-12, "score {}", s);
    Ok(())
}

/// Along one curve the score never decreases with bandwidth.
pub fn stress_monotone((family, qs): (CurveFamily, Vec<f64>)) -> Result<(), TestCaseError> {
    let w = StressWeights::default();
    for c in family.curves() {
        let mut qs = qs.clone();
        qs.sort_by(f64::total_cmp);
        let mut last = 0.0;
        let mut last_slope = 0.0;
        for q in qs {
            let s = stress_score(&family, c.read_ratio() as f64, q, w);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s >= last - 1e-12);
            let n = normalized_slope(c, q);
            prop_assert!(n >= last_slope);
            last = s;
            last_slope = n;
        }
    }
    Ok(())
}
