//! Families of bandwidth-latency curves.
//!
//! A [`CurveFamily`] holds one [`Curve`] per read ratio. Each curve keeps the
//! raw points exactly as measured (including non-monotone "wave" regions) and
//! a derived Pareto envelope that gives a single-valued, non-decreasing
//! latency-of-bandwidth map used for every lookup.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header of the curve CSV file.
pub const CURVE_CSV_HEADER: &str = "read_ratio_pct,bandwidth_gbps,latency_ns";

/// Default cache-line size used when no manifest is present.
pub const DEFAULT_LINE_SIZE: u32 = 64;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid value in row {row}: {reason}")]
    Value { row: usize, reason: String },
    #[error("curve input contains no data rows")]
    EmptyInput,
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

/// One (bandwidth, latency) observation. Bandwidth in GB/s, latency in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bandwidth: f64,
    pub latency: f64,
}

impl CurvePoint {
    pub fn new(bandwidth: f64, latency: f64) -> Self {
        Self { bandwidth, latency }
    }

    pub fn is_valid(&self) -> bool {
        self.bandwidth.is_finite()
            && self.latency.is_finite()
            && self.bandwidth >= 0.0
            && self.latency > 0.0
    }

    /// `self` dominates `other` when it delivers at least as much bandwidth at
    /// no more latency, and is strictly better in one of the two.
    pub fn dominates(&self, other: &CurvePoint) -> bool {
        self.bandwidth >= other.bandwidth
            && self.latency <= other.latency
            && (self.bandwidth > other.bandwidth || self.latency < other.latency)
    }
}

/// Result of a latency lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub latency: f64,
    /// The requested bandwidth was past the top of at least one of the curves
    /// involved, and the latency was clamped there.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    read_ratio: u8,
    points: Vec<CurvePoint>,
    envelope: Vec<CurvePoint>,
}

impl Curve {
    /// Builds a curve from raw points in measurement order.
    ///
    /// Panics if `points` is empty or contains an invalid point; use
    /// [`Curve::try_new`] for untrusted input.
    pub fn new(read_ratio: u8, points: Vec<CurvePoint>) -> Self {
        Self::try_new(read_ratio, points).expect("invalid curve")
    }

    pub fn try_new(read_ratio: u8, points: Vec<CurvePoint>) -> Result<Self, CurveError> {
        if read_ratio > 100 {
            return Err(CurveError::Format(format!(
                "read ratio {read_ratio} outside 0..=100"
            )));
        }
        if points.is_empty() {
            return Err(CurveError::EmptyInput);
        }
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| !p.is_valid()) {
            return Err(CurveError::Value {
                row: i + 1,
                reason: format!("invalid point ({}, {})", p.bandwidth, p.latency),
            });
        }
        let envelope = build_envelope(&points);
        Ok(Self {
            read_ratio,
            points,
            envelope,
        })
    }

    pub fn read_ratio(&self) -> u8 {
        self.read_ratio
    }

    /// Raw points in measurement order.
    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    /// Pareto envelope, ascending in bandwidth.
    pub fn envelope(&self) -> &[CurvePoint] {
        &self.envelope
    }

    /// Highest bandwidth on the envelope.
    pub fn max_bandwidth(&self) -> f64 {
        self.envelope[self.envelope.len() - 1].bandwidth
    }

    pub fn max_latency(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.latency)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_latency(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.latency)
            .fold(f64::INFINITY, f64::min)
    }

    /// Piecewise-linear envelope lookup. Below the first point the first
    /// latency is returned; above the last point the last latency is returned
    /// with `saturated` set.
    pub fn lookup(&self, bandwidth: f64) -> Lookup {
        let env = &self.envelope;
        let last = env[env.len() - 1];
        if bandwidth > last.bandwidth {
            return Lookup {
                latency: last.latency,
                saturated: true,
            };
        }
        // First envelope index whose bandwidth is >= the query.
        let hi = env.partition_point(|p| p.bandwidth < bandwidth);
        let upper = env[hi];
        if hi == 0 || upper.bandwidth == bandwidth {
            return Lookup {
                latency: upper.latency,
                saturated: false,
            };
        }
        let lower = env[hi - 1];
        let t = (bandwidth - lower.bandwidth) / (upper.bandwidth - lower.bandwidth);
        Lookup {
            latency: lower.latency + t * (upper.latency - lower.latency),
            saturated: false,
        }
    }

    /// Slope (ns per GB/s) of every envelope segment, in bandwidth order.
    pub fn envelope_slopes(&self) -> Vec<f64> {
        self.envelope
            .windows(2)
            .map(|w| (w[1].latency - w[0].latency) / (w[1].bandwidth - w[0].bandwidth))
            .collect()
    }
}

/// Pareto frontier of `points` under bandwidth-up / latency-down dominance,
/// sorted by ascending bandwidth.
///
/// The result has strictly increasing bandwidth and non-decreasing latency,
/// and contains only members of `points`. An empty input yields an empty
/// envelope.
pub fn build_envelope(points: &[CurvePoint]) -> Vec<CurvePoint> {
    let mut sorted: Vec<CurvePoint> = points.to_vec();
    // Descending bandwidth; for equal bandwidth the lowest latency first.
    sorted.sort_by(|a, b| {
        b.bandwidth
            .total_cmp(&a.bandwidth)
            .then(a.latency.total_cmp(&b.latency))
    });
    let mut frontier = Vec::new();
    let mut best_latency = f64::INFINITY;
    let mut last_bandwidth = f64::NAN;
    for p in sorted {
        if p.bandwidth == last_bandwidth {
            continue;
        }
        last_bandwidth = p.bandwidth;
        if p.latency < best_latency {
            best_latency = p.latency;
            frontier.push(p);
        }
    }
    frontier.reverse();
    frontier
}

/// Sidecar metadata for a curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub platform_name: String,
    pub theoretical_max_bandwidth_gbps: Option<f64>,
    pub line_size_bytes: u32,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            platform_name: "unknown".to_string(),
            theoretical_max_bandwidth_gbps: None,
            line_size_bytes: DEFAULT_LINE_SIZE,
        }
    }
}

/// Non-fatal findings produced while loading a family.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadWarning {
    /// Same (ratio, bandwidth) appears with different latencies; the envelope
    /// keeps the lowest.
    ConflictingDuplicate {
        read_ratio: u8,
        bandwidth: f64,
        latencies: (f64, f64),
    },
    /// A measured bandwidth exceeds the declared theoretical maximum.
    ExceedsTheoretical { read_ratio: u8, bandwidth: f64 },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::ConflictingDuplicate {
                read_ratio,
                bandwidth,
                latencies,
            } => write!(
                f,
                "ratio {read_ratio}%: bandwidth {bandwidth} GB/s listed with latencies {} and {} ns; lowest kept",
                latencies.0, latencies.1
            ),
            LoadWarning::ExceedsTheoretical {
                read_ratio,
                bandwidth,
            } => write!(
                f,
                "ratio {read_ratio}%: bandwidth {bandwidth} GB/s exceeds the theoretical maximum"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFamily {
    pub platform_name: String,
    pub theoretical_max_bandwidth: Option<f64>,
    pub line_size: u32,
    curves: BTreeMap<u8, Curve>,
}

impl CurveFamily {
    pub fn new(
        platform_name: impl Into<String>,
        theoretical_max_bandwidth: Option<f64>,
        line_size: u32,
        curves: impl IntoIterator<Item = Curve>,
    ) -> Result<Self, CurveError> {
        if let Some(t) = theoretical_max_bandwidth {
            if !(t.is_finite() && t > 0.0) {
                return Err(CurveError::Manifest(format!(
                    "theoretical maximum bandwidth must be positive, got {t}"
                )));
            }
        }
        if line_size == 0 {
            return Err(CurveError::Manifest("line size must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for curve in curves {
            let ratio = curve.read_ratio;
            if map.insert(ratio, curve).is_some() {
                return Err(CurveError::Format(format!("duplicate curve for ratio {ratio}")));
            }
        }
        if map.is_empty() {
            return Err(CurveError::EmptyInput);
        }
        Ok(Self {
            platform_name: platform_name.into(),
            theoretical_max_bandwidth,
            line_size,
            curves: map,
        })
    }

    /// Family with default metadata.
    pub fn from_curves(curves: impl IntoIterator<Item = Curve>) -> Result<Self, CurveError> {
        Self::new("unknown", None, DEFAULT_LINE_SIZE, curves)
    }

    pub fn curves(&self) -> impl Iterator<Item = &Curve> {
        self.curves.values()
    }

    pub fn curve(&self, read_ratio: u8) -> Option<&Curve> {
        self.curves.get(&read_ratio)
    }

    pub fn read_ratios(&self) -> Vec<u8> {
        self.curves.keys().copied().collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            platform_name: self.platform_name.clone(),
            theoretical_max_bandwidth_gbps: self.theoretical_max_bandwidth,
            line_size_bytes: self.line_size,
        }
    }

    /// True when some measured bandwidth is above the declared theoretical
    /// maximum. Simulated systems can do this, so it is not an error.
    pub fn exceeds_theoretical(&self) -> bool {
        match self.theoretical_max_bandwidth {
            Some(t) => self
                .curves()
                .flat_map(|c| c.points.iter())
                .any(|p| p.bandwidth > t),
            None => false,
        }
    }

    /// The two curves bracketing `read_ratio` and the interpolation weight of
    /// the upper one. The ratio is clamped into the key range first.
    fn bracket(&self, read_ratio: f64) -> (&Curve, &Curve, f64) {
        let (&lo_key, first) = self.curves.iter().next().expect("non-empty family");
        let (&hi_key, last) = self.curves.iter().next_back().expect("non-empty family");
        let r = read_ratio.clamp(lo_key as f64, hi_key as f64);
        if r <= lo_key as f64 {
            return (first, first, 0.0);
        }
        if r >= hi_key as f64 {
            return (last, last, 0.0);
        }
        let below = self
            .curves
            .range(..=(r.floor() as u8))
            .next_back()
            .map(|(_, c)| c)
            .expect("ratio above lowest key");
        if below.read_ratio as f64 == r {
            return (below, below, 0.0);
        }
        let above = self
            .curves
            .range((r.floor() as u8 + 1)..)
            .next()
            .map(|(_, c)| c)
            .expect("ratio below highest key");
        let w = (r - below.read_ratio as f64) / (above.read_ratio as f64 - below.read_ratio as f64);
        (below, above, w)
    }

    /// Bilinear lookup: piecewise-linear in bandwidth along each bracketing
    /// curve's envelope, then linear in read ratio between the two curves.
    pub fn lookup_latency(&self, read_ratio: f64, bandwidth: f64) -> Lookup {
        let (lo, hi, w) = self.bracket(read_ratio);
        let a = lo.lookup(bandwidth);
        if w == 0.0 {
            return a;
        }
        let b = hi.lookup(bandwidth);
        Lookup {
            latency: a.latency + w * (b.latency - a.latency),
            saturated: a.saturated || b.saturated,
        }
    }

    /// Last envelope bandwidth, interpolated by read ratio.
    pub fn max_bandwidth(&self, read_ratio: f64) -> f64 {
        let (lo, hi, w) = self.bracket(read_ratio);
        let a = lo.max_bandwidth();
        if w == 0.0 {
            return a;
        }
        a + w * (hi.max_bandwidth() - a)
    }

    /// Evaluates a per-curve quantity on the two curves bracketing
    /// `read_ratio` and interpolates linearly between them.
    pub(crate) fn bracket_map(&self, read_ratio: f64, f: impl Fn(&Curve) -> f64) -> f64 {
        let (lo, hi, w) = self.bracket(read_ratio);
        let a = f(lo);
        if w == 0.0 {
            return a;
        }
        a + w * (f(hi) - a)
    }

    /// Minimum raw latency over every curve.
    pub fn unloaded_latency(&self) -> f64 {
        self.curves()
            .map(Curve::min_latency)
            .fold(f64::INFINITY, f64::min)
    }

    /// Maximum raw latency over every curve.
    pub fn max_latency(&self) -> f64 {
        self.curves()
            .map(Curve::max_latency)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Warnings that can be derived from the family itself.
    pub fn warnings(&self) -> Vec<LoadWarning> {
        let mut out = Vec::new();
        for curve in self.curves() {
            let mut seen: BTreeMap<u64, f64> = BTreeMap::new();
            for p in &curve.points {
                match seen.get(&p.bandwidth.to_bits()) {
                    Some(&lat) if lat != p.latency => out.push(LoadWarning::ConflictingDuplicate {
                        read_ratio: curve.read_ratio,
                        bandwidth: p.bandwidth,
                        latencies: (lat, p.latency),
                    }),
                    Some(_) => {}
                    None => {
                        seen.insert(p.bandwidth.to_bits(), p.latency);
                    }
                }
            }
            if let Some(t) = self.theoretical_max_bandwidth {
                if let Some(p) = curve.points.iter().find(|p| p.bandwidth > t) {
                    out.push(LoadWarning::ExceedsTheoretical {
                        read_ratio: curve.read_ratio,
                        bandwidth: p.bandwidth,
                    });
                }
            }
        }
        out
    }

    /// Serializes the curve rows (without manifest).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CurveError> {
        let mut out = out;
        let io = |e| CurveError::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        };
        writeln!(out, "{CURVE_CSV_HEADER}").map_err(io)?;
        for curve in self.curves() {
            for p in &curve.points {
                writeln!(out, "{},{},{}", curve.read_ratio, p.bandwidth, p.latency).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses curve rows from CSV text. Metadata comes from `manifest`.
    pub fn from_csv_reader<R: Read>(input: R, manifest: Manifest) -> Result<Self, CurveError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| CurveError::Format(e.to_string()))?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CurveError::Format(format!("missing column `{name}`")))
        };
        let ratio_col = column("read_ratio_pct")?;
        let bw_col = column("bandwidth_gbps")?;
        let lat_col = column("latency_ns")?;

        let mut grouped: BTreeMap<u8, Vec<CurvePoint>> = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| CurveError::Format(format!("row {row}: {e}")))?;
            let field = |col: usize| -> Result<f64, CurveError> {
                let text = record.get(col).ok_or_else(|| CurveError::Value {
                    row,
                    reason: "missing field".into(),
                })?;
                text.parse::<f64>().map_err(|_| CurveError::Value {
                    row,
                    reason: format!("`{text}` is not a number"),
                })
            };
            let ratio = field(ratio_col)?;
            if !(0.0..=100.0).contains(&ratio) || ratio.fract() != 0.0 {
                return Err(CurveError::Value {
                    row,
                    reason: format!("read ratio {ratio} must be an integer in 0..=100"),
                });
            }
            let point = CurvePoint::new(field(bw_col)?, field(lat_col)?);
            if !point.bandwidth.is_finite() || point.bandwidth < 0.0 {
                return Err(CurveError::Value {
                    row,
                    reason: format!("bandwidth {} must be finite and non-negative", point.bandwidth),
                });
            }
            if !point.latency.is_finite() || point.latency <= 0.0 {
                return Err(CurveError::Value {
                    row,
                    reason: format!("latency {} must be finite and positive", point.latency),
                });
            }
            grouped.entry(ratio as u8).or_default().push(point);
        }
        if grouped.is_empty() {
            return Err(CurveError::EmptyInput);
        }
        let curves = grouped
            .into_iter()
            .map(|(ratio, points)| Curve::try_new(ratio, points))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(
            manifest.platform_name,
            manifest.theoretical_max_bandwidth_gbps,
            manifest.line_size_bytes,
            curves,
        )
    }
}

/// Path of the JSON manifest that accompanies a curve file: same stem,
/// `.json` extension.
pub fn manifest_path(curve_path: &Path) -> PathBuf {
    curve_path.with_extension("json")
}

/// Loads a curve file and its optional manifest, returning any non-fatal
/// warnings alongside the family.
pub fn load_family_with_warnings(path: &Path) -> Result<(CurveFamily, Vec<LoadWarning>), CurveError> {
    let text = fs::read_to_string(path).map_err(|source| CurveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if text.trim().is_empty() {
        return Err(CurveError::EmptyInput);
    }
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() && mpath != path {
        let raw = fs::read_to_string(&mpath).map_err(|source| CurveError::Io {
            path: mpath.clone(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| CurveError::Manifest(e.to_string()))?
    } else {
        Manifest::default()
    };
    let family = CurveFamily::from_csv_reader(text.as_bytes(), manifest)?;
    let warnings = family.warnings();
    Ok((family, warnings))
}

/// Loads a curve file, logging warnings.
pub fn load_family(path: &Path) -> Result<CurveFamily, CurveError> {
    let (family, warnings) = load_family_with_warnings(path)?;
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(family)
}

/// Writes the curve CSV and its manifest next to it.
pub fn save_family(family: &CurveFamily, path: &Path) -> Result<(), CurveError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CurveError::Io { path: p, source }
    };
    fs::write(path, family.to_csv_string()).map_err(io(path))?;
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&family.manifest())
        .map_err(|e| CurveError::Manifest(e.to_string()))?;
    fs::write(&mpath, json + "\n").map_err(io(&mpath))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(f64, f64)]) -> Vec<CurvePoint> {
        raw.iter().map(|&(b, l)| CurvePoint::new(b, l)).collect()
    }

    fn parse(text: &str) -> Result<CurveFamily, CurveError> {
        CurveFamily::from_csv_reader(text.as_bytes(), Manifest::default())
    }

    #[test]
    fn envelope_drops_wave_points() {
        let env = build_envelope(&pts(&[(50.0, 120.0), (90.0, 300.0), (95.0, 260.0), (100.0, 200.0)]));
        assert_eq!(env, pts(&[(50.0, 120.0), (100.0, 200.0)]));
    }

    #[test]
    fn envelope_singleton() {
        assert_eq!(build_envelope(&pts(&[(10.0, 90.0)])), pts(&[(10.0, 90.0)]));
    }

    #[test]
    fn envelope_duplicate_bandwidth_keeps_min_latency() {
        let env = build_envelope(&pts(&[(10.0, 90.0), (10.0, 95.0), (20.0, 100.0)]));
        assert_eq!(env, pts(&[(10.0, 90.0), (20.0, 100.0)]));
    }

    #[test]
    fn parses_simple_file() {
        let fam = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n100,10,90\n100,20,100\n").unwrap();
        assert_eq!(fam.read_ratios(), vec![100]);
        assert_eq!(fam.curve(100).unwrap().points().len(), 2);
    }

    #[test]
    fn rejects_negative_bandwidth_with_row() {
        let err = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n100, -5, 90\n").unwrap_err();
        assert!(matches!(err, CurveError::Value { row: 1, .. }), "{err:?}");
    }

    #[test]
    fn rejects_non_finite_and_zero_latency() {
        let err = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n100,1,90\n100,2,NaN\n").unwrap_err();
        assert!(matches!(err, CurveError::Value { row: 2, .. }));
        let err = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n100,1,0\n").unwrap_err();
        assert!(matches!(err, CurveError::Value { row: 1, .. }));
    }

    #[test]
    fn rejects_missing_column() {
        let err = parse("read_ratio_pct,bandwidth_gbps\n100,10\n").unwrap_err();
        assert!(matches!(err, CurveError::Format(_)));
    }

    #[test]
    fn rejects_empty_file() {
        let err = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n").unwrap_err();
        assert!(matches!(err, CurveError::EmptyInput));
    }

    #[test]
    fn six_ratio_file_has_six_curves() {
        let mut text = String::from(CURVE_CSV_HEADER);
        text.push('\n');
        for r in (50..=100).step_by(10) {
            text.push_str(&format!("{r},10,90\n{r},20,100\n"));
        }
        assert_eq!(parse(&text).unwrap().read_ratios().len(), 6);
    }

    #[test]
    fn conflicting_duplicates_are_kept_and_reported() {
        let fam = parse("read_ratio_pct,bandwidth_gbps,latency_ns\n100,10,90\n100,10,95\n100,20,99\n").unwrap();
        assert_eq!(fam.curve(100).unwrap().points().len(), 3);
        assert_eq!(fam.curve(100).unwrap().envelope()[0], CurvePoint::new(10.0, 90.0));
        assert!(matches!(
            fam.warnings()[..],
            [LoadWarning::ConflictingDuplicate { read_ratio: 100, .. }]
        ));
    }

    #[test]
    fn theoretical_maximum_is_a_warning_not_an_error() {
        let manifest = Manifest {
            theoretical_max_bandwidth_gbps: Some(15.0),
            ..Manifest::default()
        };
        let fam = CurveFamily::from_csv_reader(
            "read_ratio_pct,bandwidth_gbps,latency_ns\n100,10,90\n100,20,100\n".as_bytes(),
            manifest,
        )
        .unwrap();
        assert!(fam.exceeds_theoretical());
        assert!(matches!(fam.warnings()[..], [LoadWarning::ExceedsTheoretical { .. }]));
    }

    #[test]
    fn lookup_interpolates_in_bandwidth() {
        let fam = CurveFamily::from_curves([Curve::new(100, pts(&[(10.0, 90.0), (20.0, 100.0)]))]).unwrap();
        assert_eq!(fam.lookup_latency(100.0, 15.0), Lookup { latency: 95.0, saturated: false });
        assert_eq!(fam.lookup_latency(100.0, 0.0), Lookup { latency: 90.0, saturated: false });
    }

    #[test]
    fn lookup_interpolates_in_ratio() {
        let fam = CurveFamily::from_curves([
            Curve::new(70, pts(&[(10.0, 100.0), (40.0, 110.0), (60.0, 150.0)])),
            Curve::new(80, pts(&[(10.0, 90.0), (40.0, 100.0), (60.0, 140.0)])),
        ])
        .unwrap();
        let l = fam.lookup_latency(75.0, 40.0);
        assert!((l.latency - 105.0).abs() < 1e-12);
        assert!(!l.saturated);
    }

    #[test]
    fn lookup_clamps_above_top() {
        let fam = CurveFamily::from_curves([Curve::new(100, pts(&[(10.0, 90.0), (116.0, 391.0)]))]).unwrap();
        assert_eq!(fam.lookup_latency(100.0, 130.0), Lookup { latency: 391.0, saturated: true });
    }

    #[test]
    fn ratio_outside_keys_clamps_to_nearest_curve() {
        let fam = CurveFamily::from_curves([
            Curve::new(50, pts(&[(10.0, 91.0), (92.2, 242.0)])),
            Curve::new(100, pts(&[(10.0, 89.0), (116.5, 391.0)])),
        ])
        .unwrap();
        assert_eq!(fam.lookup_latency(0.0, 10.0).latency, 91.0);
        assert_eq!(fam.max_bandwidth(20.0), 92.2);
        assert_eq!(fam.max_bandwidth(100.0), 116.5);
        assert!((fam.max_bandwidth(75.0) - (92.2 + 116.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_curve_max_bandwidth_ignores_ratio() {
        let fam = CurveFamily::from_curves([Curve::new(80, pts(&[(1.0, 90.0), (70.0, 200.0)]))]).unwrap();
        for r in [0.0, 50.0, 80.0, 100.0] {
            assert_eq!(fam.max_bandwidth(r), 70.0);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fam.csv");
        let fam = CurveFamily::new(
            "box",
            Some(128.0),
            64,
            [
                Curve::new(50, pts(&[(0.1, 91.0), (92.2, 242.0)])),
                Curve::new(100, pts(&[(1.0 / 3.0, 89.0), (116.5, 391.0), (116.0, 395.5)])),
            ],
        )
        .unwrap();
        save_family(&fam, &path).unwrap();
        let back = load_family(&path).unwrap();
        assert_eq!(back, fam);
        assert_eq!(back.to_csv_string(), fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn missing_manifest_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.csv");
        fs::write(&path, "read_ratio_pct,bandwidth_gbps,latency_ns\n100,1,90\n").unwrap();
        let fam = load_family(&path).unwrap();
        assert_eq!(fam.platform_name, "unknown");
        assert_eq!(fam.theoretical_max_bandwidth, None);
        assert_eq!(fam.line_size, 64);
    }
}
