//! CSV writers and the trace reader.
//!
//! Floats are written in shortest round-trip form, so a parsed file
//! reproduces the in-memory values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{ConvergenceTrace, ErrorMetric, TerminalReason, TraceRecord};

pub const TRACE_HEADER: &str = "iteration,elapsed_seconds,rel_error";

/// Shortest round-trip text for a float; `NA` for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "NA".to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_trace<W: Write>(trace: &ConvergenceTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(w, "{},{},{}", r.iteration, fmt_f64(r.elapsed_seconds), fmt_f64(r.rel_error))?;
    }
    writeln!(w, "# terminal_reason={}", trace.terminal_reason)?;
    for (k, v) in &trace.metadata {
        writeln!(w, "# {k}={v}")?;
    }
    w.flush()
}

pub fn emit_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    let file = create_file(path)?;
    write_trace(trace, file).map_err(|e| Error::io(path, e))
}

/// Reads a trace written by [`write_trace`].
pub fn parse_trace<R: Read>(reader: R, source_name: &str) -> Result<ConvergenceTrace> {
    let err = |line: usize, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line: line as u64,
        reason,
    };
    let mut records = Vec::new();
    let mut reason = None;
    let mut metadata = Vec::new();
    let mut saw_header = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| err(lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let (k, v) = comment
                .trim()
                .split_once('=')
                .ok_or_else(|| err(lineno, format!("malformed comment `{line}`")))?;
            if k == "terminal_reason" {
                reason = Some(v.parse().map_err(|e: Error| err(lineno, e.to_string()))?);
            } else {
                metadata.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(err(lineno, format!("expected header `{TRACE_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| err(lineno, format!("`{s}` is not a number")))
        };
        records.push(TraceRecord {
            iteration: fields[0]
                .parse()
                .map_err(|_| err(lineno, format!("`{}` is not an iteration", fields[0])))?,
            elapsed_seconds: num(fields[1])?,
            rel_error: num(fields[2])?,
        });
    }
    if !saw_header {
        return Err(err(1, "missing header".into()));
    }
    let terminal_reason: TerminalReason = reason.ok_or_else(|| err(0, "missing terminal_reason".into()))?;
    let metric = metadata
        .iter()
        .find(|(k, _)| k == "metric")
        .map(|(_, v)| v.parse::<ErrorMetric>())
        .transpose()?
        .unwrap_or(ErrorMetric::RelativeError);
    Ok(ConvergenceTrace {
        records,
        terminal_reason,
        metric,
        metadata,
    })
}

pub fn load_trace(path: &Path) -> Result<ConvergenceTrace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(file, &path.display().to_string())
}

/// Writes a header plus rows of already formatted fields.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create_file(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
