//! The sketch-and-project iteration `x ← x + A_S†(b_S − A_S x)` with
//! stopping rules and convergence traces.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{apply_pinv, axpy, norm_sq, DenseMatrix};
use crate::sketch::{sketched_system, SketchDraw, SketchSampler, SketchSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub rel_error_threshold: f64,
    pub max_iterations: u64,
    pub max_seconds: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            rel_error_threshold: 1e-4,
            max_iterations: 1_000_000,
            max_seconds: 600.0,
        }
    }
}

impl StopRule {
    pub fn new(rel_error_threshold: f64, max_iterations: u64, max_seconds: f64) -> Result<Self> {
        let rule = Self {
            rel_error_threshold,
            max_iterations,
            max_seconds,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_error_threshold > 0.0) || !self.rel_error_threshold.is_finite() {
            return Err(Error::Parameter(format!(
                "error threshold must be positive and finite, got {}",
                self.rel_error_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.max_seconds > 0.0) {
            return Err(Error::Parameter(format!(
                "max_seconds must be positive, got {}",
                self.max_seconds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalReason {
    Threshold,
    MaxIterations,
    MaxSeconds,
}

impl TerminalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalReason::Threshold => "threshold",
            TerminalReason::MaxIterations => "max_iterations",
            TerminalReason::MaxSeconds => "max_seconds",
        }
    }
}

impl fmt::Display for TerminalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminalReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(TerminalReason::Threshold),
            "max_iterations" => Ok(TerminalReason::MaxIterations),
            "max_seconds" => Ok(TerminalReason::MaxSeconds),
            other => Err(Error::Input(format!("unknown terminal reason `{other}`"))),
        }
    }
}

/// What the `rel_error` column of a trace measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `‖x_k − x*‖² / ‖x*‖²`
    RelativeError,
    /// `‖A x_k − b‖² / ‖b‖²`, used when `x*` is unknown.
    ResidualSurrogate,
}

impl ErrorMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMetric::RelativeError => "relative_error",
            ErrorMetric::ResidualSurrogate => "residual_surrogate",
        }
    }
}

impl FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative_error" => Ok(ErrorMetric::RelativeError),
            "residual_surrogate" => Ok(ErrorMetric::ResidualSurrogate),
            other => Err(Error::Input(format!("unknown error metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockSource {
    ThreadCpuTime,
    Monotonic,
}

impl ClockSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockSource::ThreadCpuTime => "thread_cputime",
            ClockSource::Monotonic => "monotonic",
        }
    }
}

/// Elapsed-time source: CPU time of the calling thread when available, so
/// concurrent trials do not charge each other, else the monotonic clock.
#[derive(Debug)]
pub struct Stopwatch {
    source: ClockSource,
    start_cpu: f64,
    start_wall: Instant,
    last: f64,
}

fn thread_cpu_seconds() -> Option<f64> {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    (rc == 0).then(|| ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9)
}

impl Stopwatch {
    pub fn start() -> Self {
        let (source, start_cpu) = match thread_cpu_seconds() {
            Some(t) => (ClockSource::ThreadCpuTime, t),
            None => (ClockSource::Monotonic, 0.0),
        };
        Self {
            source,
            start_cpu,
            start_wall: Instant::now(),
            last: 0.0,
        }
    }

    pub fn source(&self) -> ClockSource {
        self.source
    }

    /// Seconds since `start`, never decreasing between calls.
    pub fn elapsed(&mut self) -> f64 {
        let now = match self.source {
            ClockSource::ThreadCpuTime => thread_cpu_seconds()
                .map(|t| t - self.start_cpu)
                .unwrap_or_else(|| self.start_wall.elapsed().as_secs_f64()),
            ClockSource::Monotonic => self.start_wall.elapsed().as_secs_f64(),
        };
        self.last = self.last.max(now);
        self.last
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub elapsed_seconds: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub terminal_reason: TerminalReason,
    pub metric: ErrorMetric,
    /// Free-form key/value pairs (clock source, sketch label, checksums).
    pub metadata: Vec<(String, String)>,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Iteration count at termination.
    pub fn iterations(&self) -> u64 {
        self.last().map_or(0, |r| r.iteration)
    }

    pub fn final_error(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.rel_error)
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Checks record ordering and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Input("trace has no records".into()));
        }
        if self.records[0].iteration != 0 {
            return Err(Error::Input("trace must start at iteration 0".into()));
        }
        for w in self.records.windows(2) {
            if w[1].iteration <= w[0].iteration {
                return Err(Error::Input(format!(
                    "iterations not increasing: {} then {}",
                    w[0].iteration, w[1].iteration
                )));
            }
            if w[1].elapsed_seconds < w[0].elapsed_seconds {
                return Err(Error::Input(format!(
                    "elapsed time decreases at iteration {}",
                    w[1].iteration
                )));
            }
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| !(r.rel_error >= 0.0) || !r.rel_error.is_finite() || !r.elapsed_seconds.is_finite())
        {
            return Err(Error::Input(format!(
                "invalid record at iteration {}: error {}, time {}",
                r.iteration, r.rel_error, r.elapsed_seconds
            )));
        }
        Ok(())
    }
}

/// `‖x − x*‖² / ‖x*‖²`.
pub fn relative_error(x: &[f64], x_star: &[f64]) -> Result<f64> {
    if x.len() != x_star.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", x_star.len()),
            got: format!("length {}", x.len()),
        });
    }
    let denom = norm_sq(x_star);
    if denom == 0.0 {
        return Err(Error::Parameter("relative error is undefined for x* = 0".into()));
    }
    let num: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Applies one projection step in place. Returns `true` when the sketched
/// matrix is zero, in which case `x` is left unchanged.
pub fn step_in_place(x: &mut [f64], a: &DenseMatrix, b: &[f64], draw: &SketchDraw) -> Result<bool> {
    if x.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: format!("iterate of length {}", a.cols()),
            got: format!("length {}", x.len()),
        });
    }
    let (a_s, b_s) = sketched_system(draw, a, b)?;
    if a_s.is_zero() {
        return Ok(true);
    }
    let mut r = a_s.mul_vec(x)?;
    for (ri, bi) in r.iter_mut().zip(&b_s) {
        *ri = bi - *ri;
    }
    let d = apply_pinv(&a_s, &r)?;
    axpy(1.0, &d, x);
    Ok(false)
}

/// One projection step; the flag reports a zero sketched matrix.
pub fn step(x: &[f64], a: &DenseMatrix, b: &[f64], draw: &SketchDraw) -> Result<(Vec<f64>, bool)> {
    let mut next = x.to_vec();
    let degenerate = step_in_place(&mut next, a, b, draw)?;
    Ok((next, degenerate))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<'a> {
    /// Starting point; zero when absent.
    pub x0: Option<&'a [f64]>,
    /// Ground truth; when absent the residual surrogate is tracked.
    pub x_star: Option<&'a [f64]>,
    /// Record every `stride`-th iteration (iteration 0 and the final one are
    /// always recorded).
    pub stride: u64,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        Self {
            x0: None,
            x_star: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub degenerate_steps: u64,
}

/// A failed solve. Numeric failures carry the trace up to the last finite
/// iterate.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: Option<ConvergenceTrace>,
}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        Self { error, trace: None }
    }
}

impl From<SolveFailure> for Error {
    fn from(f: SolveFailure) -> Self {
        f.error
    }
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for SolveFailure {}

struct Tracker<'a> {
    a: &'a DenseMatrix,
    b: &'a [f64],
    x_star: Option<&'a [f64]>,
    b_norm_sq: f64,
}

impl Tracker<'_> {
    fn error(&self, x: &[f64]) -> Result<f64> {
        match self.x_star {
            Some(xs) => relative_error(x, xs),
            None => {
                let r = self.a.mul_vec(x)?;
                let num: f64 = r.iter().zip(self.b).map(|(p, q)| (p - q) * (p - q)).sum();
                Ok(num / self.b_norm_sq)
            }
        }
    }
}

/// Iterates draw-and-project until the stop rule fires.
pub fn solve<R: Rng + ?Sized>(
    a: &DenseMatrix,
    b: &[f64],
    spec: &SketchSpec,
    stop: &StopRule,
    rng: &mut R,
    opts: SolveOptions<'_>,
) -> std::result::Result<SolveOutput, SolveFailure> {
    stop.validate()?;
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("right-hand side of length {m}"),
            got: format!("length {}", b.len()),
        }
        .into());
    }
    if opts.stride == 0 {
        return Err(Error::Parameter("trace stride must be at least 1".into()).into());
    }
    let mut x = match opts.x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: format!("starting point of length {n}"),
                got: format!("length {}", x0.len()),
            }
            .into())
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if let Some(xs) = opts.x_star {
        if xs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("x* of length {n}"),
                got: format!("length {}", xs.len()),
            }
            .into());
        }
        if norm_sq(xs) == 0.0 {
            return Err(Error::Parameter("relative error is undefined for x* = 0".into()).into());
        }
    }
    let tracker = Tracker {
        a,
        b,
        x_star: opts.x_star,
        b_norm_sq: norm_sq(b),
    };
    let metric = if opts.x_star.is_some() {
        ErrorMetric::RelativeError
    } else {
        if tracker.b_norm_sq == 0.0 {
            return Err(Error::Parameter(
                "residual surrogate is undefined for b = 0 without x*".into(),
            )
            .into());
        }
        ErrorMetric::ResidualSurrogate
    };

    let sampler = SketchSampler::new(spec, a)?;
    let mut clock = Stopwatch::start();
    let mut records = Vec::new();
    let mut degenerate_steps = 0u64;
    let mut k = 0u64;
    let mut err = tracker.error(&x)?;
    records.push(TraceRecord {
        iteration: 0,
        elapsed_seconds: clock.elapsed(),
        rel_error: err,
    });

    let finish = |records: Vec<TraceRecord>, reason: TerminalReason, degenerate: u64, clock: &Stopwatch| {
        ConvergenceTrace {
            records,
            terminal_reason: reason,
            metric,
            metadata: vec![
                ("sketch".into(), spec.label()),
                ("clock".into(), clock.source().as_str().into()),
                ("metric".into(), metric.as_str().into()),
                ("degenerate_steps".into(), degenerate.to_string()),
            ],
        }
    };

    let reason = loop {
        if err <= stop.rel_error_threshold {
            break TerminalReason::Threshold;
        }
        if k >= stop.max_iterations {
            break TerminalReason::MaxIterations;
        }
        if clock.elapsed() >= stop.max_seconds {
            break TerminalReason::MaxSeconds;
        }
        let draw = sampler.draw(rng)?;
        if step_in_place(&mut x, a, b, &draw)? {
            degenerate_steps += 1;
        }
        k += 1;
        let next_err = if x.iter().all(|v| v.is_finite()) {
            tracker.error(&x)?
        } else {
            f64::NAN
        };
        if !next_err.is_finite() {
            let last_err = err;
            if records.last().is_some_and(|r| r.iteration != k - 1) {
                records.push(TraceRecord {
                    iteration: k - 1,
                    elapsed_seconds: clock.elapsed(),
                    rel_error: last_err,
                });
            }
            let mut trace = finish(records, TerminalReason::MaxIterations, degenerate_steps, &clock);
            trace.metadata.push(("failure".into(), "non_finite".into()));
            return Err(SolveFailure {
                error: Error::NumericFailure {
                    iteration: k,
                    reason: "iterate or error became non-finite".into(),
                },
                trace: Some(trace),
            });
        }
        err = next_err;
        if k % opts.stride == 0 {
            records.push(TraceRecord {
                iteration: k,
                elapsed_seconds: clock.elapsed(),
                rel_error: err,
            });
        }
    };
    if records.last().is_some_and(|r| r.iteration != k) {
        records.push(TraceRecord {
            iteration: k,
            elapsed_seconds: clock.elapsed(),
            rel_error: err,
        });
    }
    let trace = finish(records, reason, degenerate_steps, &clock);
    Ok(SolveOutput {
        x,
        trace,
        degenerate_steps,
    })
}
