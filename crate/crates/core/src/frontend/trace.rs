//! Memory trace formats.
//!
//! Two line-oriented styles are supported:
//!
//! * ramulator: `<nonmem:int> <R|W> <addr:hex>` where `nonmem` counts the
//!   non-memory instructions executed since the previous memory operation.
//! * dramsim3: `<addr:hex> <READ|WRITE> <cycle:int>` where `cycle` is when
//!   the request reaches the memory controller (non-decreasing).
//!
//! Blank lines and lines starting with `#` are skipped. Line numbers in errors
//! are 1-based and count every physical line.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::OpKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStyle {
    Ramulator,
    Dramsim3,
}

impl FromStr for TraceStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ramulator" => Ok(TraceStyle::Ramulator),
            "dramsim3" => Ok(TraceStyle::Dramsim3),
            other => Err(format!("unknown trace style `{other}` (expected ramulator or dramsim3)")),
        }
    }
}

impl fmt::Display for TraceStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceStyle::Ramulator => "ramulator",
            TraceStyle::Dramsim3 => "dramsim3",
        })
    }
}

/// How a record is placed in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// Non-memory instructions since the previous memory operation.
    NonMem(u64),
    /// Cycle at which the request reaches the memory controller.
    Arrival(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub timing: Timing,
    pub kind: OpKind,
    pub address: u64,
}

impl TraceRecord {
    pub fn ramulator(nonmem: u64, kind: OpKind, address: u64) -> Self {
        Self {
            timing: Timing::NonMem(nonmem),
            kind,
            address,
        }
    }

    pub fn dramsim3(arrival: u64, kind: OpKind, address: u64) -> Self {
        Self {
            timing: Timing::Arrival(arrival),
            kind,
            address,
        }
    }

    pub fn style(&self) -> TraceStyle {
        match self.timing {
            Timing::NonMem(_) => TraceStyle::Ramulator,
            Timing::Arrival(_) => TraceStyle::Dramsim3,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.timing {
            Timing::NonMem(n) => {
                let k = match self.kind {
                    OpKind::Read => "R",
                    OpKind::Write => "W",
                };
                write!(f, "{n} {k} {:#x}", self.address)
            }
            Timing::Arrival(c) => {
                let k = match self.kind {
                    OpKind::Read => "READ",
                    OpKind::Write => "WRITE",
                };
                write!(f, "{:#x} {k} {c}", self.address)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl TraceError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TraceError::Parse { line, .. } => Some(*line),
            TraceError::Io(_) => None,
        }
    }
}

fn parse_hex(text: &str) -> Option<u64> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

/// Parses one non-blank, non-comment line.
pub fn parse_line(text: &str, style: TraceStyle, line: usize) -> Result<TraceRecord, TraceError> {
    let err = |message: String| TraceError::Parse { line, message };
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(err(format!("expected 3 fields, found {}", fields.len())));
    }
    match style {
        TraceStyle::Ramulator => {
            let nonmem = fields[0]
                .parse::<u64>()
                .map_err(|_| err(format!("`{}` is not an instruction count", fields[0])))?;
            let kind = match fields[1] {
                "R" => OpKind::Read,
                "W" => OpKind::Write,
                other => return Err(err(format!("`{other}` is not R or W"))),
            };
            let address = parse_hex(fields[2]).ok_or_else(|| err(format!("`{}` is not a hex address", fields[2])))?;
            Ok(TraceRecord::ramulator(nonmem, kind, address))
        }
        TraceStyle::Dramsim3 => {
            let address = parse_hex(fields[0]).ok_or_else(|| err(format!("`{}` is not a hex address", fields[0])))?;
            let kind = match fields[1] {
                "READ" => OpKind::Read,
                "WRITE" => OpKind::Write,
                other => return Err(err(format!("`{other}` is not READ or WRITE"))),
            };
            let cycle = fields[2]
                .parse::<u64>()
                .map_err(|_| err(format!("`{}` is not a cycle number", fields[2])))?;
            Ok(TraceRecord::dramsim3(cycle, kind, address))
        }
    }
}

/// Streaming trace parser.
pub struct TraceReader<R> {
    input: R,
    style: TraceStyle,
    line: usize,
    last_arrival: Option<u64>,
    buf: String,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R, style: TraceStyle) -> Self {
        Self {
            input,
            style,
            line: 0,
            last_arrival: None,
            buf: String::new(),
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let parsed = parse_line(text, self.style, self.line).and_then(|rec| {
                if let Timing::Arrival(c) = rec.timing {
                    if let Some(prev) = self.last_arrival {
                        if c < prev {
                            return Err(TraceError::Parse {
                                line: self.line,
                                message: format!("cycle {c} precedes previous cycle {prev}"),
                            });
                        }
                    }
                    self.last_arrival = Some(c);
                }
                Ok(rec)
            });
            if parsed.is_err() {
                self.failed = true;
            }
            return Some(parsed);
        }
    }
}

/// Opens a trace file for streaming.
pub fn parse_trace(path: &Path, style: TraceStyle) -> Result<TraceReader<BufReader<File>>, TraceError> {
    let file = File::open(path)?;
    Ok(TraceReader::new(BufReader::new(file), style))
}

/// Parses a whole trace held in memory.
pub fn parse_trace_str(text: &str, style: TraceStyle) -> Result<Vec<TraceRecord>, TraceError> {
    TraceReader::new(text.as_bytes(), style).collect()
}

/// Writes records one per line in their own style.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("Vec writes cannot fail");
    String::from_utf8(buf).expect("ascii")
}
