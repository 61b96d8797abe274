//! Quantitative summaries of a curve family: unloaded latency, the spread of
//! per-ratio maximum latencies, where each curve saturates, and the span of
//! saturated bandwidth.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::curves::{Curve, CurveFamily};

/// Saturation onset of one curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Onset {
    pub bandwidth: f64,
    /// False when the curve never reaches twice the unloaded latency; the
    /// bandwidth is then the last envelope bandwidth.
    pub saturating: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyRange {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthRange {
    pub low: f64,
    pub high: f64,
    /// Whether the lower bound comes from a curve that actually saturates.
    pub low_saturating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyMetrics {
    pub platform_name: String,
    pub theoretical_max_bandwidth: Option<f64>,
    pub unloaded_latency: f64,
    pub max_latency_range: LatencyRange,
    pub saturated_bandwidth_range: BandwidthRange,
    pub saturation_onset_per_ratio: BTreeMap<u8, Onset>,
    pub wave_segments_per_ratio: BTreeMap<u8, Vec<(usize, usize)>>,
}

pub fn unloaded_latency(family: &CurveFamily) -> f64 {
    family.unloaded_latency()
}

/// (lowest, highest) of the per-curve maximum raw latency.
pub fn max_latency_range(family: &CurveFamily) -> LatencyRange {
    let maxima = family.curves().map(Curve::max_latency);
    let (low, high) = maxima.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
        (lo.min(m), hi.max(m))
    });
    LatencyRange { low, high }
}

/// Smallest envelope bandwidth at which latency reaches twice `unloaded`.
pub fn saturation_onset(curve: &Curve, unloaded: f64) -> Onset {
    let threshold = 2.0 * unloaded;
    let env = curve.envelope();
    let Some(i) = env.iter().position(|p| p.latency >= threshold) else {
        return Onset {
            bandwidth: curve.max_bandwidth(),
            saturating: false,
        };
    };
    let hit = env[i];
    if i == 0 || hit.latency == threshold {
        return Onset {
            bandwidth: hit.bandwidth,
            saturating: true,
        };
    }
    let prev = env[i - 1];
    let t = (threshold - prev.latency) / (hit.latency - prev.latency);
    Onset {
        bandwidth: prev.bandwidth + t * (hit.bandwidth - prev.bandwidth),
        saturating: true,
    }
}

/// Earliest saturation onset across ratios, up to the highest bandwidth any
/// ratio achieves.
pub fn saturated_bandwidth_range(family: &CurveFamily) -> BandwidthRange {
    let unloaded = family.unloaded_latency();
    let mut low = f64::INFINITY;
    let mut low_saturating = false;
    let mut high = f64::NEG_INFINITY;
    for curve in family.curves() {
        let onset = saturation_onset(curve, unloaded);
        if onset.bandwidth < low {
            low = onset.bandwidth;
            low_saturating = onset.saturating;
        }
        high = high.max(curve.max_bandwidth());
    }
    BandwidthRange {
        low,
        high,
        low_saturating,
    }
}

/// Maximal runs of raw points (in measurement order) over which bandwidth
/// strictly falls while latency strictly rises. Indices are inclusive.
pub fn wave_segments(curve: &Curve) -> Vec<(usize, usize)> {
    wave_segments_with_tolerance(curve, 0.0)
}

/// As [`wave_segments`], but a step only counts as a decline when bandwidth
/// drops by more than `epsilon` (relative) and latency rises by more than
/// `epsilon` (relative).
pub fn wave_segments_with_tolerance(curve: &Curve, epsilon: f64) -> Vec<(usize, usize)> {
    let pts = curve.points();
    let mut segments = Vec::new();
    let mut start: Option<usize> = None;
    for i in 1..pts.len() {
        let (a, b) = (pts[i - 1], pts[i]);
        let declining = b.bandwidth < a.bandwidth * (1.0 - epsilon)
            && b.latency > a.latency * (1.0 + epsilon);
        match (declining, start) {
            (true, None) => start = Some(i - 1),
            (false, Some(s)) => {
                segments.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push((s, pts.len() - 1));
    }
    segments
}

pub fn family_metrics(family: &CurveFamily) -> FamilyMetrics {
    family_metrics_with_tolerance(family, 0.0)
}

pub fn family_metrics_with_tolerance(family: &CurveFamily, wave_epsilon: f64) -> FamilyMetrics {
    let unloaded = family.unloaded_latency();
    FamilyMetrics {
        platform_name: family.platform_name.clone(),
        theoretical_max_bandwidth: family.theoretical_max_bandwidth,
        unloaded_latency: unloaded,
        max_latency_range: max_latency_range(family),
        saturated_bandwidth_range: saturated_bandwidth_range(family),
        saturation_onset_per_ratio: family
            .curves()
            .map(|c| (c.read_ratio(), saturation_onset(c, unloaded)))
            .collect(),
        wave_segments_per_ratio: family
            .curves()
            .map(|c| (c.read_ratio(), wave_segments_with_tolerance(c, wave_epsilon)))
            .collect(),
    }
}

impl FamilyMetrics {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let pct = |bw: f64| match self.theoretical_max_bandwidth {
            Some(t) => format!(" ({:.0}%)", 100.0 * bw / t),
            None => String::new(),
        };
        let rows = [
            ("Platform", self.platform_name.clone()),
            (
                "Theoretical bandwidth",
                self.theoretical_max_bandwidth
                    .map_or("-".to_string(), |t| format!("{t:.1} GB/s")),
            ),
            ("Unloaded latency", format!("{:.1} ns", self.unloaded_latency)),
            (
                "Maximum latency range",
                format!(
                    "{:.1}-{:.1} ns",
                    self.max_latency_range.low, self.max_latency_range.high
                ),
            ),
            (
                "Saturated bandwidth range",
                format!(
                    "{:.1}{}-{:.1}{} GB/s{}",
                    self.saturated_bandwidth_range.low,
                    pct(self.saturated_bandwidth_range.low),
                    self.saturated_bandwidth_range.high,
                    pct(self.saturated_bandwidth_range.high),
                    if self.saturated_bandwidth_range.low_saturating {
                        ""
                    } else {
                        " (no curve saturates)"
                    }
                ),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:>6}  {:>12}  {:>10}  {}\n",
            "ratio", "onset GB/s", "saturates", "wave segments"
        ));
        for (ratio, onset) in &self.saturation_onset_per_ratio {
            let waves = &self.wave_segments_per_ratio[ratio];
            let waves = if waves.is_empty() {
                "-".to_string()
            } else {
                waves
                    .iter()
                    .map(|(a, b)| format!("{a}..={b}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out.push_str(&format!(
                "{:>6}  {:>12.3}  {:>10}  {}\n",
                ratio,
                onset.bandwidth,
                if onset.saturating { "yes" } else { "no" },
                waves
            ));
        }
        out
    }
}
