//! Synthetic curve families: sampled analytic curves, and shaped families
//! matching published platform summaries.

use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::curves::{Curve, CurveError, CurveFamily, CurvePoint};
use crate::devices::{AnalyticDevice, DeviceError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("{0}")]
    Config(String),
}

/// Sampling parameters for an analytic family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticSpec {
    pub l0_ns: f64,
    pub k_ns: f64,
    pub bmax_gbps: f64,
    pub write_penalty: f64,
    pub ratios: Vec<u8>,
    pub points: usize,
    /// Highest sampled bandwidth as a fraction of `bmax_gbps`.
    pub max_fraction: f64,
}

impl Default for AnalyticSpec {
    fn default() -> Self {
        Self {
            l0_ns: 89.0,
            k_ns: 31.2,
            bmax_gbps: 128.0,
            write_penalty: 0.3,
            ratios: (50..=100).step_by(10).collect(),
            points: 30,
            max_fraction: 0.95,
        }
    }
}

/// Samples `L(ρ, b) = (L0 + k·b/(Bmax − b))·(1 + p·(100 − ρ)/50)` at
/// `points` evenly spaced bandwidths from 0 to `max_fraction·Bmax`.
pub fn analytic_family(spec: &AnalyticSpec) -> Result<CurveFamily, SynthError> {
    if spec.points == 0 {
        return Err(SynthError::Config("at least one point per curve is required".into()));
    }
    if !(spec.max_fraction > 0.0 && spec.max_fraction < 1.0) {
        return Err(SynthError::Config(format!(
            "maximum fraction must be in (0, 1), got {}",
            spec.max_fraction
        )));
    }
    if !(spec.write_penalty >= 0.0 && spec.write_penalty.is_finite()) {
        return Err(SynthError::Config(format!("penalty must be non-negative, got {}", spec.write_penalty)));
    }
    let dev = AnalyticDevice::new(spec.l0_ns, spec.k_ns, spec.bmax_gbps)?.with_write_penalty(spec.write_penalty);
    let top = spec.max_fraction * spec.bmax_gbps;
    let mut curves = Vec::new();
    for &r in &spec.ratios {
        let pts = (0..spec.points)
            .map(|j| {
                let b = if spec.points == 1 {
                    0.0
                } else {
                    top * j as f64 / (spec.points - 1) as f64
                };
                Ok(CurvePoint::new(b, dev.latency_at_ratio(r as f64, b)?))
            })
            .collect::<Result<Vec<_>, DeviceError>>()?;
        curves.push(Curve::try_new(r, pts)?);
    }
    Ok(CurveFamily::new("analytic", Some(spec.bmax_gbps), 64, curves)?)
}

/// Published per-platform summary numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatformSummary {
    pub name: &'static str,
    pub theoretical_bw_gbps: f64,
    /// Saturated bandwidth range, percent of theoretical.
    pub saturated_pct: (f64, f64),
    pub unloaded_ns: f64,
    pub max_latency_ns: (f64, f64),
}

pub const PLATFORMS: [PlatformSummary; 8] = [
    PlatformSummary {
        name: "skylake",
        theoretical_bw_gbps: 128.0,
        saturated_pct: (72.0, 91.0),
        unloaded_ns: 89.0,
        max_latency_ns: (242.0, 391.0),
    },
    PlatformSummary {
        name: "cascadelake",
        theoretical_bw_gbps: 128.0,
        saturated_pct: (68.0, 87.0),
        unloaded_ns: 85.0,
        max_latency_ns: (182.0, 303.0),
    },
    PlatformSummary {
        name: "zen2",
        theoretical_bw_gbps: 204.0,
        saturated_pct: (57.0, 71.0),
        unloaded_ns: 113.0,
        max_latency_ns: (257.0, 657.0),
    },
    PlatformSummary {
        name: "power9",
        theoretical_bw_gbps: 170.0,
        saturated_pct: (67.0, 91.0),
        unloaded_ns: 96.0,
        max_latency_ns: (238.0, 546.0),
    },
    PlatformSummary {
        name: "graviton3",
        theoretical_bw_gbps: 307.0,
        saturated_pct: (63.0, 95.0),
        unloaded_ns: 122.0,
        max_latency_ns: (332.0, 527.0),
    },
    PlatformSummary {
        name: "sapphirerapids",
        theoretical_bw_gbps: 307.0,
        saturated_pct: (60.0, 86.0),
        unloaded_ns: 109.0,
        max_latency_ns: (238.0, 406.0),
    },
    PlatformSummary {
        name: "a64fx",
        theoretical_bw_gbps: 1024.0,
        saturated_pct: (72.0, 92.0),
        unloaded_ns: 129.0,
        max_latency_ns: (338.0, 428.0),
    },
    PlatformSummary {
        name: "h100",
        theoretical_bw_gbps: 1631.0,
        saturated_pct: (51.0, 95.0),
        unloaded_ns: 363.0,
        max_latency_ns: (699.0, 1433.0),
    },
];

impl FromStr for &'static PlatformSummary {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['-', '_', ' '], "");
        PLATFORMS.iter().find(|p| p.name == key).ok_or_else(|| {
            let names: Vec<&str> = PLATFORMS.iter().map(|p| p.name).collect();
            SynthError::Config(format!("unknown platform `{s}` (known: {})", names.join(", ")))
        })
    }
}

pub fn platform(name: &str) -> Result<&'static PlatformSummary, SynthError> {
    name.parse()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

// Bandwidth, as a fraction of the curve's end bandwidth, for every point
// before the last two.
const FRACTIONS: [f64; 15] = [
    0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.94, 0.97, 0.985, 0.995,
];
// Latency rise, as a fraction of the curve's total rise, per point: the
// fractions above, then a point 0.05 GB/s before the end, then the end.
const RISE_MIXED: [f64; 17] = [
    0.0, 0.005, 0.01, 0.02, 0.03, 0.045, 0.065, 0.09, 0.13, 0.16, 0.2, 0.25, 0.32, 0.38, 0.45, 0.5, 1.0,
];
const RISE_READS: [f64; 17] = [
    0.0, 0.01, 0.02, 0.035, 0.05, 0.075, 0.11, 0.16, 0.25, 0.33, 0.45, 0.6, 0.75, 0.86, 0.97, 0.99, 1.0,
];

/// Family shaped after a platform summary, with curves at read ratios
/// 50..=100 in steps of 10.
///
/// The 50 % read curve is the slowest and the all-read curve the fastest:
/// their last points sit at the low and high ends of the saturated range,
/// and at the low and high ends of the maximum-latency range. The minimum
/// latency of the all-read curve is the unloaded latency. Curves between
/// the two are blended linearly.
///
/// With `waves`, the 70 % and 80 % curves get two trailing points past
/// their maximum where bandwidth drops while latency keeps rising.
pub fn platform_family(p: &PlatformSummary, waves: bool) -> Result<CurveFamily, SynthError> {
    let t = p.theoretical_bw_gbps;
    let end_lo = round1(p.saturated_pct.0 / 100.0 * t);
    let end_hi = round1(p.saturated_pct.1 / 100.0 * t);
    let (lmin, lmax) = p.max_latency_ns;
    let mut curves = Vec::new();
    for r in (50u8..=100).step_by(10) {
        let w = (r - 50) as f64 / 50.0;
        let end = (1.0 - w) * end_lo + w * end_hi;
        let lend = (1.0 - w) * lmin + w * lmax;
        let base = p.unloaded_ns + 2.0 * (100 - r) as f64 / 50.0;
        let rise = |i: usize| {
            let h = RISE_MIXED[i] + w * (RISE_READS[i] - RISE_MIXED[i]);
            base + h * (lend - base)
        };
        let mut pts: Vec<CurvePoint> = FRACTIONS
            .iter()
            .enumerate()
            .map(|(i, f)| CurvePoint::new(f * end, rise(i)))
            .collect();
        pts.push(CurvePoint::new(end - 0.05, rise(15)));
        pts.push(CurvePoint::new(end, lend));
        if r > 50 {
            hold_below_doubling(&mut pts, end_lo, 2.0 * p.unloaded_ns);
        }
        if waves && (r == 70 || r == 80) {
            pts.push(CurvePoint::new(end - 0.5, (lend + 6.0).min(lmax)));
            pts.push(CurvePoint::new(end - 1.0, (lend + 12.0).min(lmax)));
        }
        curves.push(Curve::try_new(r, pts)?);
    }
    Ok(CurveFamily::new(p.name, Some(t), 64, curves)?)
}

// Keeps a faster curve from doubling its latency before `knee`, the end of
// the slowest curve, so that the earliest onset stays with the slowest one.
// `pts` is sorted by bandwidth with non-decreasing latency.
fn hold_below_doubling(pts: &mut Vec<CurvePoint>, knee: f64, doubled: f64) {
    let Some(j) = pts.iter().position(|q| q.bandwidth >= knee) else {
        return;
    };
    let at_knee = if j == 0 || pts[j].bandwidth == knee {
        pts[j].latency
    } else {
        let (a, b) = (pts[j - 1], pts[j]);
        a.latency + (knee - a.bandwidth) / (b.bandwidth - a.bandwidth) * (b.latency - a.latency)
    };
    if at_knee < doubled {
        return;
    }
    for q in &mut pts[..j] {
        q.latency = q.latency.min(doubled - 1.0);
    }
    if pts[j].bandwidth != knee {
        pts.insert(j, CurvePoint::new(knee, doubled));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    #[test]
    fn analytic_matches_closed_form() {
        let spec = AnalyticSpec {
            ratios: vec![50, 100],
            points: 5,
            ..AnalyticSpec::default()
        };
        let fam = analytic_family(&spec).unwrap();
        let c50 = fam.curve(50).unwrap();
        let b = 0.95 * 128.0 * 0.5;
        let expected = (89.0 + 31.2 * b / (128.0 - b)) * 1.3;
        assert!((c50.points()[2].latency - expected).abs() < 1e-9);
        assert_eq!(fam.curve(100).unwrap().points()[0].latency, 89.0);
    }

    #[test]
    fn analytic_single_point() {
        let spec = AnalyticSpec {
            points: 1,
            ..AnalyticSpec::default()
        };
        let fam = analytic_family(&spec).unwrap();
        assert!(fam.curves().all(|c| c.points().len() == 1 && c.points()[0].bandwidth == 0.0));
    }

    #[test]
    fn every_platform_reproduces_its_summary() {
        for p in &PLATFORMS {
            for waves in [false, true] {
                let fam = platform_family(p, waves).unwrap();
                let m = metrics::family_metrics(&fam);
                assert_eq!(m.unloaded_latency, p.unloaded_ns, "{}", p.name);
                assert_eq!(m.max_latency_range.low, p.max_latency_ns.0, "{}", p.name);
                assert_eq!(m.max_latency_range.high, p.max_latency_ns.1, "{}", p.name);
                let lo = round1(p.saturated_pct.0 / 100.0 * p.theoretical_bw_gbps);
                let hi = round1(p.saturated_pct.1 / 100.0 * p.theoretical_bw_gbps);
                assert!((m.saturated_bandwidth_range.low - lo).abs() <= 0.1, "{} {}", p.name, m.saturated_bandwidth_range.low);
                assert!((m.saturated_bandwidth_range.high - hi).abs() < 1e-9, "{}", p.name);
            }
        }
    }

    #[test]
    fn waves_show_up_only_when_asked() {
        let p = platform("Sky-Lake").unwrap();
        let plain = metrics::family_metrics(&platform_family(p, false).unwrap());
        assert!(plain.wave_segments_per_ratio.values().all(Vec::is_empty));
        let wavy = metrics::family_metrics(&platform_family(p, true).unwrap());
        assert!(!wavy.wave_segments_per_ratio[&70].is_empty());
        assert!(!wavy.wave_segments_per_ratio[&80].is_empty());
    }

    #[test]
    fn unknown_platform() {
        assert!(platform("pentium").is_err());
    }
}
