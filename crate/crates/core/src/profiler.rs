//! Memory stress score for application bandwidth timelines.
//!
//! Each sample (a time slice of an application run with its total bandwidth
//! and read ratio) is placed on the curve family. The score combines how far
//! latency has risen above unloaded with how steep the curve is at that
//! point, both normalized to `[0, 1]`.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curves::{Curve, CurveFamily};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot read samples: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("unrecognized sample header `{0}` (expected timestamp_us,total_bw_gbps,read_ratio_pct or timestamp_us,read_bw_gbps,write_bw_gbps)")]
    Header(String),
    #[error("sample row {row}: {reason}")]
    Value { row: usize, reason: String },
    #[error("invalid weights: {0}")]
    Weights(String),
}

/// Relative weight of the latency and slope terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StressWeights {
    pub latency: f64,
    pub slope: f64,
}

impl Default for StressWeights {
    fn default() -> Self {
        Self {
            latency: 0.5,
            slope: 0.5,
        }
    }
}

impl StressWeights {
    pub fn new(latency: f64, slope: f64) -> Result<Self, ProfileError> {
        let w = Self { latency, slope };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.latency >= 0.0 && self.slope >= 0.0) {
            return Err(ProfileError::Weights(format!(
                "weights must be non-negative, got {} and {}",
                self.latency, self.slope
            )));
        }
        if ((self.latency + self.slope) - 1.0).abs() > 1e-9 {
            return Err(ProfileError::Weights(format!(
                "weights must sum to 1, got {}",
                self.latency + self.slope
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Green,
    Yellow,
    Red,
}

impl Bucket {
    pub const YELLOW_FROM: f64 = 0.33;
    pub const RED_FROM: f64 = 0.66;

    pub fn from_score(score: f64) -> Self {
        if score < Self::YELLOW_FROM {
            Bucket::Green
        } else if score < Self::RED_FROM {
            Bucket::Yellow
        } else {
            Bucket::Red
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Green => "green",
            Bucket::Yellow => "yellow",
            Bucket::Red => "red",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSample {
    pub timestamp_us: f64,
    pub total_bw: f64,
    /// Percent of reads, may be fractional.
    pub read_ratio: f64,
    /// Original read and write bandwidths when the input carried them.
    pub split: Option<(f64, f64)>,
}

impl ProfileSample {
    pub fn new(timestamp_us: f64, total_bw: f64, read_ratio: f64) -> Self {
        Self {
            timestamp_us,
            total_bw,
            read_ratio,
            split: None,
        }
    }

    /// Derives total bandwidth and read ratio from separate read and write
    /// bandwidths. Idle samples count as all-read.
    pub fn from_read_write(timestamp_us: f64, read_bw: f64, write_bw: f64) -> Self {
        let total = read_bw + write_bw;
        let ratio = if total > 0.0 { 100.0 * read_bw / total } else { 100.0 };
        Self {
            timestamp_us,
            total_bw: total,
            read_ratio: ratio,
            split: Some((read_bw, write_bw)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub sample: ProfileSample,
    pub latency_ns: f64,
    pub stress_score: f64,
    pub bucket: Bucket,
    pub saturated: bool,
}

/// Running-maximum envelope slope at `bandwidth`, over the curve's maximum
/// slope. Zero on or before the first envelope point, one past the last.
pub fn normalized_slope(curve: &Curve, bandwidth: f64) -> f64 {
    let env = curve.envelope();
    let slopes = curve.envelope_slopes();
    let max = slopes.iter().cloned().fold(0.0, f64::max);
    if slopes.is_empty() || max <= 0.0 || bandwidth <= env[0].bandwidth {
        return 0.0;
    }
    if bandwidth > env[env.len() - 1].bandwidth {
        return 1.0;
    }
    // Segment j joins env[j] and env[j+1], with env[j] < b <= env[j+1].
    let seg = env.partition_point(|p| p.bandwidth < bandwidth) - 1;
    let running = slopes[..=seg].iter().cloned().fold(0.0, f64::max);
    (running / max).clamp(0.0, 1.0)
}

/// Stress score in `[0, 1]` at one operating point.
pub fn stress_score(family: &CurveFamily, read_ratio: f64, bandwidth: f64, weights: StressWeights) -> f64 {
    score_parts(family, read_ratio, bandwidth, weights).0
}

/// (score, lookup latency, saturated)
fn score_parts(family: &CurveFamily, read_ratio: f64, bandwidth: f64, weights: StressWeights) -> (f64, f64, bool) {
    let lookup = family.lookup_latency(read_ratio, bandwidth);
    let unloaded = family.unloaded_latency();
    let span = family.max_latency() - unloaded;
    if span <= 0.0 {
        log::warn!("curve family has no latency range, stress score is 0");
        return (0.0, lookup.latency, lookup.saturated);
    }
    let lat_norm = ((lookup.latency - unloaded) / span).clamp(0.0, 1.0);
    let slope_norm = family.bracket_map(read_ratio, |c| normalized_slope(c, bandwidth));
    let score = (weights.latency * lat_norm + weights.slope * slope_norm).clamp(0.0, 1.0);
    (score, lookup.latency, lookup.saturated)
}

/// Scores every sample, keeping input order.
pub fn profile(family: &CurveFamily, samples: &[ProfileSample], weights: StressWeights) -> Vec<ProfilePoint> {
    samples
        .par_iter()
        .map(|s| {
            let (score, latency, saturated) = score_parts(family, s.read_ratio, s.total_bw, weights);
            ProfilePoint {
                sample: *s,
                latency_ns: latency,
                stress_score: score,
                bucket: Bucket::from_score(score),
                saturated,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Total,
    ReadWrite,
}

const TOTAL_HEADER: [&str; 3] = ["timestamp_us", "total_bw_gbps", "read_ratio_pct"];
const SPLIT_HEADER: [&str; 3] = ["timestamp_us", "read_bw_gbps", "write_bw_gbps"];

/// Reads samples from CSV in either supported header layout.
pub fn read_samples<R: Read>(input: R) -> Result<Vec<ProfileSample>, ProfileError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let layout = if header == TOTAL_HEADER {
        Layout::Total
    } else if header == SPLIT_HEADER {
        Layout::ReadWrite
    } else {
        return Err(ProfileError::Header(header.join(",")));
    };

    let mut out: Vec<ProfileSample> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |reason: String| ProfileError::Value { row, reason };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let mut vals = [0.0f64; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("`{}` is not a number", &rec[k])))?;
        }
        let sample = match layout {
            Layout::Total => {
                if !(0.0..=100.0).contains(&vals[2]) {
                    return Err(bad(format!("read ratio {} outside 0..=100", vals[2])));
                }
                ProfileSample::new(vals[0], vals[1], vals[2])
            }
            Layout::ReadWrite => {
                if vals[1] < 0.0 || vals[2] < 0.0 {
                    return Err(bad("negative bandwidth".into()));
                }
                ProfileSample::from_read_write(vals[0], vals[1], vals[2])
            }
        };
        if sample.total_bw < 0.0 {
            return Err(bad(format!("negative bandwidth {}", sample.total_bw)));
        }
        if let Some(prev) = out.last() {
            if sample.timestamp_us < prev.timestamp_us {
                return Err(bad(format!(
                    "timestamp {} precedes {}",
                    sample.timestamp_us, prev.timestamp_us
                )));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes the scored timeline: the input columns followed by
/// `latency_ns,stress_score,bucket,saturated`. The input layout is taken
/// from the first point; an empty profile uses the total-bandwidth layout.
pub fn write_profile<W: Write>(points: &[ProfilePoint], out: W) -> Result<(), ProfileError> {
    let mut w = csv::Writer::from_writer(out);
    let split = points.first().is_some_and(|p| p.sample.split.is_some());
    let lead = if split { SPLIT_HEADER } else { TOTAL_HEADER };
    let mut header: Vec<&str> = lead.to_vec();
    header.extend(["latency_ns", "stress_score", "bucket", "saturated"]);
    w.write_record(&header)?;
    for p in points {
        let s = &p.sample;
        let (a, b) = match (split, s.split) {
            (true, Some((r, wr))) => (r, wr),
            _ => (s.total_bw, s.read_ratio),
        };
        w.write_record([
            s.timestamp_us.to_string(),
            a.to_string(),
            b.to_string(),
            p.latency_ns.to_string(),
            p.stress_score.to_string(),
            p.bucket.to_string(),
            p.saturated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn profile_to_string(points: &[ProfilePoint]) -> String {
    let mut buf = Vec::new();
    write_profile(points, &mut buf).expect("Vec writes cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::CurvePoint;

    fn family() -> CurveFamily {
        let pts = |v: &[(f64, f64)]| v.iter().map(|&(b, l)| CurvePoint::new(b, l)).collect::<Vec<_>>();
        CurveFamily::from_curves([
            Curve::new(50, pts(&[(0.0, 100.0), (50.0, 110.0), (80.0, 200.0)])),
            Curve::new(100, pts(&[(0.0, 100.0), (60.0, 120.0), (90.0, 300.0)])),
        ])
        .unwrap()
    }

    #[test]
    fn anchors() {
        let f = family();
        let w = StressWeights::default();
        assert_eq!(stress_score(&f, 100.0, 0.0, w), 0.0);
        assert_eq!(stress_score(&f, 100.0, 90.0, w), 1.0);
    }

    #[test]
    fn weighted_sum() {
        // ρ=100 at 60 GB/s: lat_norm (120-100)/200 = 0.1; slope 1/3 vs max 6 → 1/18
        let f = family();
        let s = stress_score(&f, 100.0, 60.0, StressWeights::new(0.5, 0.5).unwrap());
        assert!((s - (0.5 * 0.1 + 0.5 / 18.0)).abs() < 1e-12);
        let lat_only = stress_score(&f, 100.0, 60.0, StressWeights::new(1.0, 0.0).unwrap());
        assert!((lat_only - 0.1).abs() < 1e-12);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(StressWeights::new(0.5, 0.6).is_err());
        assert!(StressWeights::new(-0.5, 1.5).is_err());
    }

    #[test]
    fn bucket_boundaries_are_half_open() {
        assert_eq!(Bucket::from_score(0.0), Bucket::Green);
        assert_eq!(Bucket::from_score(0.329_999), Bucket::Green);
        assert_eq!(Bucket::from_score(0.33), Bucket::Yellow);
        assert_eq!(Bucket::from_score(0.66), Bucket::Red);
        assert_eq!(Bucket::from_score(1.0), Bucket::Red);
    }

    #[test]
    fn degenerate_family_scores_zero() {
        let f = CurveFamily::from_curves([Curve::new(
            100,
            vec![CurvePoint::new(0.0, 90.0), CurvePoint::new(10.0, 90.0)],
        )])
        .unwrap();
        assert_eq!(stress_score(&f, 100.0, 5.0, StressWeights::default()), 0.0);
    }

    #[test]
    fn saturation_is_carried() {
        let p = profile(&family(), &[ProfileSample::new(0.0, 200.0, 100.0)], StressWeights::default());
        assert!(p[0].saturated);
        assert_eq!(p[0].latency_ns, 300.0);
        assert_eq!(p[0].bucket, Bucket::Red);
    }

    #[test]
    fn read_write_layout() {
        let text = "timestamp_us,read_bw_gbps,write_bw_gbps\n0,30,10\n10000,0,0\n";
        let s = read_samples(text.as_bytes()).unwrap();
        assert_eq!(s[0].total_bw, 40.0);
        assert_eq!(s[0].read_ratio, 75.0);
        assert_eq!(s[1].read_ratio, 100.0);
        let out = profile_to_string(&profile(&family(), &s, StressWeights::default()));
        assert!(out.starts_with("timestamp_us,read_bw_gbps,write_bw_gbps,latency_ns,stress_score,bucket,saturated\n0,30,10,"));
    }

    #[test]
    fn bad_rows_report_position() {
        let e = read_samples("timestamp_us,total_bw_gbps,read_ratio_pct\n0,1,50\n5,x,50\n".as_bytes()).unwrap_err();
        assert!(matches!(e, ProfileError::Value { row: 2, .. }));
        let e = read_samples("timestamp_us,total_bw_gbps,read_ratio_pct\n10,1,50\n5,1,50\n".as_bytes()).unwrap_err();
        assert!(matches!(e, ProfileError::Value { row: 2, .. }));
        assert!(matches!(read_samples("a,b,c\n".as_bytes()), Err(ProfileError::Header(_))));
    }

    #[test]
    fn empty_input() {
        let s = read_samples("timestamp_us,total_bw_gbps,read_ratio_pct\n".as_bytes()).unwrap();
        assert!(profile(&family(), &s, StressWeights::default()).is_empty());
    }
}
