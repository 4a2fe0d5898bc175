//! Trace file ingestion/emission, latency-threshold detection and conflict
//! labeling.
//!
//! A trace is a text file, one measured address pair per line:
//!
//! ```text
//! # knock-trace v1 width=30
//! 0x1a2b40,0x3c4d80,231,C
//! 0x52e6c0,0x52f700,174
//! 0xa0b0c0,0xa0b100,,N
//! ```
//!
//! The latency column is optional when a label is present and vice versa.
//! Round trips are bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{BitVector, Gf2Error};

pub const TRACE_FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: missing or malformed header (expected '# knock-trace v1 width=<n>')")]
    BadHeader { line: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: address wider than declared width {width}")]
    WidthExceeded { line: usize, width: usize },
    #[error("record {index}: latency required for classification but absent")]
    MissingLatency { index: usize },
    #[error("record {index}: label required but absent")]
    MissingLabel { index: usize },
    #[error("record width {got} does not match trace width {want}")]
    RecordWidthMismatch { got: usize, want: usize },
    #[error("need at least {want} latency samples, got {got}")]
    InsufficientSamples { got: usize, want: usize },
    #[error(
        "no bimodal latency distribution: the measurements form a single \
         distribution, as a closed-page memory controller policy would produce"
    )]
    NoBimodalDistribution,
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// Conflict verdict attached to a measured pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictLabel {
    Conflict,
    NoConflict,
}

impl ConflictLabel {
    pub fn is_conflict(self) -> bool {
        matches!(self, ConflictLabel::Conflict)
    }

    fn as_str(self) -> &'static str {
        match self {
            ConflictLabel::Conflict => "C",
            ConflictLabel::NoConflict => "N",
        }
    }
}

/// One measured address pair. At least one of `latency` and `label` is
/// always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub addr_a: BitVector,
    pub addr_b: BitVector,
    pub latency: Option<u64>,
    pub label: Option<ConflictLabel>,
}

impl TraceRecord {
    pub fn new(
        addr_a: BitVector,
        addr_b: BitVector,
        latency: Option<u64>,
        label: Option<ConflictLabel>,
    ) -> Result<Self, TraceError> {
        if addr_a.width() != addr_b.width() {
            return Err(TraceError::RecordWidthMismatch {
                got: addr_b.width(),
                want: addr_a.width(),
            });
        }
        if latency.is_none() && label.is_none() {
            return Err(TraceError::Parse {
                line: 0,
                reason: "record needs a latency or a label".into(),
            });
        }
        Ok(Self {
            addr_a,
            addr_b,
            latency,
            label,
        })
    }

    pub fn with_latency(addr_a: BitVector, addr_b: BitVector, latency: u64) -> Self {
        Self {
            addr_a,
            addr_b,
            latency: Some(latency),
            label: None,
        }
    }

    pub fn with_label(addr_a: BitVector, addr_b: BitVector, conflict: bool) -> Self {
        Self {
            addr_a,
            addr_b,
            latency: None,
            label: Some(if conflict {
                ConflictLabel::Conflict
            } else {
                ConflictLabel::NoConflict
            }),
        }
    }

    pub fn is_labeled_conflict(&self) -> bool {
        matches!(self.label, Some(ConflictLabel::Conflict))
    }
}

/// Writes records in the trace format; `width` goes into the header and every
/// record must match it.
pub fn write_trace(
    records: &[TraceRecord],
    width: usize,
    out: &mut impl Write,
) -> Result<(), TraceError> {
    writeln!(out, "# knock-trace {TRACE_FORMAT_VERSION} width={width}")?;
    for record in records {
        if record.addr_a.width() != width {
            return Err(TraceError::RecordWidthMismatch {
                got: record.addr_a.width(),
                want: width,
            });
        }
        let latency = record
            .latency
            .map(|l| l.to_string())
            .unwrap_or_default();
        match record.label {
            Some(label) => writeln!(
                out,
                "{},{},{},{}",
                record.addr_a.to_hex(),
                record.addr_b.to_hex(),
                latency,
                label.as_str()
            )?,
            None => writeln!(
                out,
                "{},{},{}",
                record.addr_a.to_hex(),
                record.addr_b.to_hex(),
                latency
            )?,
        }
    }
    Ok(())
}

pub fn write_trace_file(
    records: &[TraceRecord],
    width: usize,
    path: impl AsRef<Path>,
) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(records, width, &mut out)?;
    out.flush()?;
    Ok(())
}

/// A parsed trace: declared address width plus records.
#[derive(Debug, Clone)]
pub struct TraceData {
    pub width: usize,
    pub records: Vec<TraceRecord>,
}

/// Parses a trace, reporting the offending line number on malformed input.
pub fn read_trace(input: &mut impl BufRead) -> Result<TraceData, TraceError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or(TraceError::BadHeader { line: 1 })??;
    let width = parse_header(&header).ok_or(TraceError::BadHeader { line: 1 })?;
    let mut records = Vec::new();
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_record(trimmed, width, line_no)?);
    }
    Ok(TraceData { width, records })
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<TraceData, TraceError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_trace(&mut reader)
}

fn parse_header(line: &str) -> Option<usize> {
    let rest = line.strip_prefix("# knock-trace ")?;
    let mut parts = rest.split_whitespace();
    if parts.next()? != TRACE_FORMAT_VERSION {
        return None;
    }
    let width: usize = parts.next()?.strip_prefix("width=")?.parse().ok()?;
    (1..=64).contains(&width).then_some(width)
}

fn parse_record(line: &str, width: usize, line_no: usize) -> Result<TraceRecord, TraceError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 3 || fields.len() > 4 {
        return Err(TraceError::Parse {
            line: line_no,
            reason: format!("expected 3 or 4 comma-separated fields, got {}", fields.len()),
        });
    }
    let parse_addr = |text: &str| -> Result<BitVector, TraceError> {
        BitVector::from_hex(text, width).map_err(|e| match e {
            Gf2Error::BitsOutOfRange { .. } => TraceError::WidthExceeded { line: line_no, width },
            _ => TraceError::Parse {
                line: line_no,
                reason: format!("bad address '{text}'"),
            },
        })
    };
    let addr_a = parse_addr(fields[0])?;
    let addr_b = parse_addr(fields[1])?;
    let latency = if fields[2].is_empty() {
        None
    } else {
        Some(fields[2].parse::<u64>().map_err(|_| TraceError::Parse {
            line: line_no,
            reason: format!("bad latency '{}'", fields[2]),
        })?)
    };
    let label = match fields.get(3) {
        None => None,
        Some(&"C") => Some(ConflictLabel::Conflict),
        Some(&"N") => Some(ConflictLabel::NoConflict),
        Some(other) => {
            return Err(TraceError::Parse {
                line: line_no,
                reason: format!("bad label '{other}' (expected C or N)"),
            })
        }
    };
    if latency.is_none() && label.is_none() {
        return Err(TraceError::Parse {
            line: line_no,
            reason: "record needs a latency or a label".into(),
        });
    }
    TraceRecord::new(addr_a, addr_b, latency, label).map_err(|_| TraceError::Parse {
        line: line_no,
        reason: "inconsistent record".into(),
    })
}

/// Latency threshold between the row-hit and row-conflict clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Latencies strictly above this value count as conflicts.
    pub threshold: u64,
    /// Most populated latency at or below the threshold.
    pub low_mode: u64,
    /// Most populated latency above the threshold.
    pub high_mode: u64,
    /// Valley depth between the two modes: 1 - valley / min(peaks), in
    /// [0, 1]. Two well-separated clusters have an empty valley and score
    /// 1.0; a single distribution splits through its own mass and scores
    /// near 0.
    pub separation_score: f64,
    /// Fraction of samples at or below the threshold.
    pub low_fraction: f64,
}

/// Tunable acceptance constants for bimodality detection.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdOptions {
    /// Minimum separation score to accept the split as bimodal.
    pub min_score: f64,
    /// Minimum fraction of samples on each side of the split. Conflicts are
    /// rare in random pairs on many-bank systems (one pair in 2^k), so the
    /// floor only exists to reject classes made of a few stray outliers.
    pub min_class_fraction: f64,
    /// Minimum sample count.
    pub min_samples: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            min_score: 0.5,
            min_class_fraction: 0.0002,
            min_samples: 100,
        }
    }
}

/// Finds the latency threshold by two-class variance maximization over an
/// integer-binned histogram (bin width: one cycle).
///
/// The split optimizes the between-class variance of log-scaled bin counts.
/// The log scaling keeps the split between the clusters even when one class
/// is orders of magnitude rarer than the other, where the mass-weighted
/// objective would happily split the bulk cluster through its middle
/// instead. Bimodality is then accepted only if the valley between the two
/// modes is deep enough and both classes carry real mass.
pub fn find_threshold(latencies: &[u64]) -> Result<ThresholdReport, TraceError> {
    find_threshold_with(latencies, &ThresholdOptions::default())
}

pub fn find_threshold_with(
    latencies: &[u64],
    opts: &ThresholdOptions,
) -> Result<ThresholdReport, TraceError> {
    if latencies.len() < opts.min_samples {
        return Err(TraceError::InsufficientSamples {
            got: latencies.len(),
            want: opts.min_samples,
        });
    }
    let min = *latencies.iter().min().expect("non-empty");
    let max = *latencies.iter().max().expect("non-empty");
    if min == max {
        return Err(TraceError::NoBimodalDistribution);
    }
    let bins = (max - min + 1) as usize;
    let mut hist = vec![0u64; bins];
    for &l in latencies {
        hist[(l - min) as usize] += 1;
    }
    let weights: Vec<f64> = hist
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (c as f64 + 1.0).log2() })
        .collect();
    let weight_total: f64 = weights.iter().sum();
    let weighted_sum: f64 = weights.iter().enumerate().map(|(i, &w)| i as f64 * w).sum();

    let mut best_split = 0usize;
    let mut best_between = -1.0f64;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    // Split after bin t: low class = bins 0..=t.
    for (t, &weight) in weights.iter().enumerate().take(bins - 1) {
        w0 += weight;
        sum0 += t as f64 * weight;
        if w0 == 0.0 {
            continue;
        }
        let w1 = weight_total - w0;
        if w1 <= 0.0 {
            break;
        }
        let mu0 = sum0 / w0;
        let mu1 = (weighted_sum - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best_between {
            best_between = between;
            best_split = t;
        }
    }

    let argmax = |range: std::ops::Range<usize>| -> usize {
        let mut best = range.start;
        for i in range {
            if hist[i] > hist[best] {
                best = i;
            }
        }
        best
    };
    let low_mode_bin = argmax(0..best_split + 1);
    let high_mode_bin = argmax(best_split + 1..bins);
    let valley = if high_mode_bin - low_mode_bin >= 2 {
        hist[low_mode_bin + 1..high_mode_bin]
            .iter()
            .copied()
            .min()
            .expect("non-empty interior")
    } else {
        // Adjacent modes: no valley at all.
        hist[low_mode_bin].min(hist[high_mode_bin])
    };
    let peak = hist[low_mode_bin].min(hist[high_mode_bin]) as f64;
    let score = (1.0 - valley as f64 / peak).clamp(0.0, 1.0);
    let low_count: u64 = hist[..best_split + 1].iter().sum();
    let low_fraction = low_count as f64 / latencies.len() as f64;
    if score < opts.min_score
        || low_fraction < opts.min_class_fraction
        || 1.0 - low_fraction < opts.min_class_fraction
    {
        return Err(TraceError::NoBimodalDistribution);
    }
    Ok(ThresholdReport {
        threshold: min + best_split as u64,
        low_mode: min + low_mode_bin as u64,
        high_mode: min + high_mode_bin as u64,
        separation_score: score,
        low_fraction,
    })
}

/// Labels records by the threshold rule: strictly greater latency means
/// conflict. Existing labels are kept unless `relabel` is set.
pub fn classify(
    records: &[TraceRecord],
    threshold: u64,
    relabel: bool,
) -> Result<Vec<TraceRecord>, TraceError> {
    records
        .iter()
        .enumerate()
        .map(|(index, record)| {
            let mut out = *record;
            if out.label.is_none() || relabel {
                let latency = out.latency.ok_or(TraceError::MissingLatency { index })?;
                out.label = Some(if latency > threshold {
                    ConflictLabel::Conflict
                } else {
                    ConflictLabel::NoConflict
                });
            }
            Ok(out)
        })
        .collect()
}

/// Latency histogram as (cycles, count) rows, for external plotting.
pub fn latency_histogram(latencies: &[u64]) -> Vec<(u64, u64)> {
    if latencies.is_empty() {
        return Vec::new();
    }
    let min = *latencies.iter().min().expect("non-empty");
    let max = *latencies.iter().max().expect("non-empty");
    let mut hist = vec![0u64; (max - min + 1) as usize];
    for &l in latencies {
        hist[(l - min) as usize] += 1;
    }
    hist.iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (min + i as u64, c))
        .collect()
}
