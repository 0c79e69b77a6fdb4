//! Multi-trial experiments: paired problem instances, per-method runs,
//! aggregation and file output.

use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ModelSpec};
use super::output::{emit_trace, fmt_f64, fmt_opt, write_table};
use crate::bounds::{horizon_thm4, horizon_thm5, rate_thm1, rate_thm2, rate_thm3};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, spectral_summary, DenseMatrix, SpectralSummary};
use crate::models::{load_csv_matrix, make_problem, MatrixModel, ProblemInstance};
use crate::rng::{derive_seed, label_hash, stream_rng};
use crate::sketch::{SketchKind, SketchSpec};
use crate::solver::{solve, ConvergenceTrace, SolveOptions, TerminalReason, TraceRecord};

const PROBLEM_TAG: u64 = 0x7072_6f62_6c65_6d00;
const COLLECTION_TAG: u64 = 0x636f_6c6c_6563_7400;

/// Seed of the problem instance shared by all methods in trial `trial`.
pub fn problem_seed(master: u64, trial: u64) -> u64 {
    derive_seed(&[master, trial, PROBLEM_TAG])
}

/// Seed of one (trial, method) cell. It depends on the method's label, not
/// its position in the method list.
pub fn method_seed(master: u64, trial: u64, label: &str) -> u64 {
    derive_seed(&[master, trial, label_hash(label)])
}

/// Filesystem-safe form of a method label.
pub fn file_label(label: &str) -> String {
    label.replace(':', "_")
}

enum MatrixSource {
    Generated(MatrixModel),
    Loaded(DenseMatrix),
}

impl MatrixSource {
    fn load(config: &ExperimentConfig) -> Result<Self> {
        match &config.model {
            ModelSpec::Builtin(model) => Ok(MatrixSource::Generated(*model)),
            ModelSpec::Csv(path) => Ok(MatrixSource::Loaded(load_csv_matrix(path, config.normalize_rows)?)),
        }
    }

    fn shape(&self, config: &ExperimentConfig) -> (usize, usize) {
        match self {
            MatrixSource::Generated(_) => (config.m, config.n),
            MatrixSource::Loaded(a) => a.shape(),
        }
    }

    fn instance(&self, config: &ExperimentConfig, trial: u64) -> Result<ProblemInstance> {
        let seed = problem_seed(config.master_seed, trial);
        let a = match self {
            MatrixSource::Generated(model) => model.generate(config.m, config.n, seed)?,
            MatrixSource::Loaded(a) => a.clone(),
        };
        make_problem(a, &config.noise, seed, &config.model.tag())
    }
}

/// Builds the problem instance of trial `trial`, exactly as
/// [`run_experiment`] does.
pub fn trial_instance(config: &ExperimentConfig, trial: u64) -> Result<ProblemInstance> {
    MatrixSource::load(config)?.instance(config, trial)
}

/// Result of one method on one trial.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: SketchSpec,
    pub label: String,
    pub trial: u64,
    pub trace: ConvergenceTrace,
    pub reached_threshold: bool,
    pub iterations: u64,
    pub seconds: f64,
    pub final_error: f64,
    pub x_star_norm_sq: f64,
    pub instance_checksum: u64,
}

fn run_cell(config: &ExperimentConfig, inst: &ProblemInstance, spec: &SketchSpec, trial: u64) -> Result<CellResult> {
    let label = spec.label();
    let seed = method_seed(config.master_seed, trial, &label);
    let spec = spec.with_seed(derive_seed(&[seed, COLLECTION_TAG]));
    let out = solve(
        &inst.a,
        &inst.b,
        &spec,
        &config.stop,
        &mut stream_rng(seed, 0),
        SolveOptions {
            x0: None,
            x_star: Some(&inst.x_star),
            stride: config.stride,
        },
    )?;
    let mut trace = out.trace;
    let checksum = inst.checksum();
    trace.metadata.extend([
        ("model".to_string(), inst.model_tag.clone()),
        ("trial".to_string(), trial.to_string()),
        ("problem_seed".to_string(), inst.seed.to_string()),
        ("method_seed".to_string(), seed.to_string()),
        ("instance_checksum".to_string(), checksum.to_string()),
    ]);
    let last = *trace.last().expect("solve records iteration 0");
    Ok(CellResult {
        spec,
        label,
        trial,
        reached_threshold: trace.terminal_reason == TerminalReason::Threshold,
        iterations: last.iteration,
        seconds: last.elapsed_seconds,
        final_error: last.rel_error,
        x_star_norm_sq: norm_sq(&inst.x_star),
        instance_checksum: checksum,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            mean: mean.clamp(min, max),
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub iteration: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-iteration mean/min/max over traces. The grid is the union of the
/// recorded iterations; a trace contributes its latest record at or before
/// each grid point, so shorter traces are padded with their final value.
pub fn error_band(traces: &[&ConvergenceTrace]) -> Vec<BandPoint> {
    let mut grid: Vec<u64> = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.iteration))
        .collect();
    grid.sort_unstable();
    grid.dedup();
    let mut cursors = vec![0usize; traces.len()];
    let mut values = vec![0.0; traces.len()];
    grid.into_iter()
        .map(|it| {
            for (k, t) in traces.iter().enumerate() {
                while cursors[k] + 1 < t.records.len() && t.records[cursors[k] + 1].iteration <= it {
                    cursors[k] += 1;
                }
                values[k] = t.records[cursors[k]].rel_error;
            }
            let s = Stats::of(&values);
            BandPoint {
                iteration: it,
                mean: s.mean,
                min: s.min,
                max: s.max,
            }
        })
        .collect()
}

/// Largest `max − min` spread of an error band.
pub fn max_band_width(band: &[BandPoint]) -> f64 {
    band.iter().map(|p| p.max - p.min).fold(0.0, f64::max)
}

/// Theoretical values reported next to each method; `None` where the bound
/// does not cover the sketch kind or its hypotheses fail.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MethodBounds {
    pub beta_thm1: Option<f64>,
    pub beta_thm2: Option<f64>,
    pub beta_thm3: Option<f64>,
    pub horizon: Option<f64>,
}

fn applicable(b: Result<crate::bounds::RateBound>) -> Option<crate::bounds::RateBound> {
    b.ok().filter(|b| b.applicable)
}

pub fn method_bounds(
    summary: &SpectralSummary,
    inst: &ProblemInstance,
    spec: &SketchSpec,
    alpha: f64,
) -> MethodBounds {
    let (m, n) = inst.a.shape();
    let s = spec.block_size;
    let e_norm = inst.e_norm();
    let consistent = inst.is_consistent();
    match spec.kind {
        SketchKind::GaussianVector | SketchKind::GaussianBlock => MethodBounds {
            beta_thm1: applicable(rate_thm1(summary, m, s)).map(|b| b.beta),
            beta_thm2: applicable(rate_thm2(summary, s)).map(|b| b.beta),
            beta_thm3: None,
            horizon: if consistent {
                Some(0.0)
            } else {
                applicable(horizon_thm5(summary, n, s, e_norm, alpha)).map(|b| b.horizon)
            },
        },
        SketchKind::FiniteGaussianCollection => MethodBounds {
            beta_thm1: None,
            beta_thm2: None,
            beta_thm3: applicable(rate_thm3(summary, m, s)).map(|b| b.beta),
            horizon: if consistent {
                Some(0.0)
            } else {
                applicable(horizon_thm4(summary, m, n, s, e_norm)).map(|b| b.horizon)
            },
        },
        SketchKind::SingleRowWeighted | SketchKind::BlockPartition => MethodBounds::default(),
    }
}

#[derive(Debug, Clone)]
pub struct MethodAggregate {
    pub spec: SketchSpec,
    pub label: String,
    pub trials: u64,
    /// Trials that reached the error threshold.
    pub reached: u64,
    /// Iteration count at termination.
    pub iterations: Stats,
    pub seconds: Stats,
    pub final_error: Stats,
    pub band: Vec<BandPoint>,
    /// Bounds evaluated on the trial-0 instance.
    pub bounds: MethodBounds,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub m: usize,
    pub n: usize,
    pub methods: Vec<MethodAggregate>,
    /// `cells[j]` holds method `j`'s results in trial order.
    pub cells: Vec<Vec<CellResult>>,
}

impl ExperimentResult {
    pub fn method(&self, label: &str) -> Option<&MethodAggregate> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn cells_for(&self, label: &str) -> Option<&[CellResult]> {
        self.methods
            .iter()
            .position(|m| m.label == label)
            .map(|j| self.cells[j].as_slice())
    }
}

/// Cuts every trace at the elapsed time at which the fastest trace reached
/// the threshold. Traces are returned unchanged when none reached it.
pub fn truncate_at_fastest(traces: &[&ConvergenceTrace]) -> Vec<ConvergenceTrace> {
    let cutoff = traces
        .iter()
        .filter(|t| t.terminal_reason == TerminalReason::Threshold)
        .filter_map(|t| t.last().map(|r| r.elapsed_seconds))
        .fold(f64::INFINITY, f64::min);
    traces
        .iter()
        .map(|t| {
            let mut out = (*t).clone();
            if cutoff.is_finite() {
                let keep: Vec<TraceRecord> = t
                    .records
                    .iter()
                    .enumerate()
                    .filter(|(i, r)| *i == 0 || r.elapsed_seconds <= cutoff)
                    .map(|(_, r)| *r)
                    .collect();
                if keep.len() < t.records.len() {
                    out.metadata.push(("truncated_at_seconds".into(), fmt_f64(cutoff)));
                }
                out.records = keep;
            }
            out
        })
        .collect()
}

/// Runs every method on every trial and aggregates. Files are written when
/// `config.output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let source = MatrixSource::load(config)?;
    let (m, n) = source.shape(config);
    config.validate_for_rows(m)?;
    let methods = config.resolved_methods()?;

    type TrialOut = (Vec<CellResult>, Option<Vec<MethodBounds>>);
    let per_trial: Vec<TrialOut> = (0..config.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialOut> {
            let inst = source.instance(config, t)?;
            let cells = methods
                .par_iter()
                .map(|spec| run_cell(config, &inst, spec, t))
                .collect::<Result<Vec<_>>>()?;
            let bounds = (t == 0).then(|| {
                let summary = spectral_summary(&inst.a);
                methods
                    .iter()
                    .map(|spec| method_bounds(&summary, &inst, spec, config.horizon_alpha))
                    .collect()
            });
            Ok((cells, bounds))
        })
        .collect::<Result<Vec<_>>>()?;

    let bounds = per_trial[0].1.clone().expect("trial 0 computes bounds");
    let mut cells: Vec<Vec<CellResult>> = vec![Vec::with_capacity(per_trial.len()); methods.len()];
    for (trial_cells, _) in per_trial {
        for (j, cell) in trial_cells.into_iter().enumerate() {
            cells[j].push(cell);
        }
    }

    let aggregates = methods
        .iter()
        .zip(&cells)
        .zip(bounds)
        .map(|((spec, cs), bounds)| {
            let col = |f: fn(&CellResult) -> f64| cs.iter().map(f).collect::<Vec<f64>>();
            let traces: Vec<&ConvergenceTrace> = cs.iter().map(|c| &c.trace).collect();
            MethodAggregate {
                spec: *spec,
                label: spec.label(),
                trials: cs.len() as u64,
                reached: cs.iter().filter(|c| c.reached_threshold).count() as u64,
                iterations: Stats::of(&col(|c| c.iterations as f64)),
                seconds: Stats::of(&col(|c| c.seconds)),
                final_error: Stats::of(&col(|c| c.final_error)),
                band: error_band(&traces),
                bounds,
            }
        })
        .collect();

    let result = ExperimentResult {
        config: config.clone(),
        m,
        n,
        methods: aggregates,
        cells,
    };
    if let Some(dir) = &config.output_dir {
        write_experiment(&result, dir)?;
    }
    Ok(result)
}

pub const SUMMARY_HEADER: &[&str] = &[
    "method",
    "s",
    "trials",
    "mean_iters",
    "min_iters",
    "max_iters",
    "mean_seconds",
    "final_rel_error_mean",
    "beta_thm1",
    "beta_thm2",
    "beta_thm3",
    "horizon",
];

pub fn summary_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    result
        .methods
        .iter()
        .map(|a| {
            vec![
                a.label.clone(),
                a.spec.block_size.to_string(),
                a.trials.to_string(),
                fmt_f64(a.iterations.mean),
                fmt_f64(a.iterations.min),
                fmt_f64(a.iterations.max),
                fmt_f64(a.seconds.mean),
                fmt_f64(a.final_error.mean),
                fmt_opt(a.bounds.beta_thm1),
                fmt_opt(a.bounds.beta_thm2),
                fmt_opt(a.bounds.beta_thm3),
                fmt_opt(a.bounds.horizon),
            ]
        })
        .collect()
}

/// Writes traces, aggregates, truncated traces, the summary and the config.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join("config.txt");
    std::fs::write(&config_path, result.config.to_text()).map_err(|e| Error::io(&config_path, e))?;
    for (agg, cs) in result.methods.iter().zip(&result.cells) {
        let fl = file_label(&agg.label);
        for c in cs {
            emit_trace(&c.trace, &dir.join("traces").join(format!("{fl}_trial{}.csv", c.trial)))?;
        }
        let rows: Vec<Vec<String>> = agg
            .band
            .iter()
            .map(|p| vec![p.iteration.to_string(), fmt_f64(p.mean), fmt_f64(p.min), fmt_f64(p.max)])
            .collect();
        write_table(
            &dir.join(format!("aggregate_{fl}.csv")),
            &["iteration", "mean", "min", "max"],
            &rows,
        )?;
    }
    for t in 0..result.config.trials as usize {
        let traces: Vec<&ConvergenceTrace> = result.cells.iter().map(|cs| &cs[t].trace).collect();
        for (agg, tr) in result.methods.iter().zip(truncate_at_fastest(&traces)) {
            let path = dir
                .join("truncated")
                .join(format!("{}_trial{t}.csv", file_label(&agg.label)));
            emit_trace(&tr, &path)?;
        }
    }
    write_table(&dir.join("summary.csv"), SUMMARY_HEADER, &summary_rows(result))
}

/// Runs the experiment once per block size, overriding every method's
/// block size; each run goes to `output_dir/s<size>`.
pub fn block_size_sweep(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<(usize, ExperimentResult)>> {
    if sizes.is_empty() {
        return Err(Error::config("sizes", "at least one size is required"));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let mut cfg = config.clone();
        cfg.block_size = Some(s);
        cfg.output_dir = config.output_dir.as_ref().map(|d| d.join(format!("s{s}")));
        out.push((s, run_experiment(&cfg)?));
    }
    if let Some(dir) = &config.output_dir {
        let rows: Vec<Vec<String>> = out
            .iter()
            .flat_map(|(s, r)| {
                r.methods.iter().map(move |a| {
                    vec![
                        s.to_string(),
                        a.label.clone(),
                        fmt_f64(a.iterations.mean),
                        fmt_f64(a.seconds.mean),
                        a.reached.to_string(),
                        fmt_f64(a.final_error.mean),
                    ]
                })
            })
            .collect();
        write_table(
            &dir.join("sweep.csv"),
            &["s", "method", "mean_iters", "mean_seconds", "reached", "final_rel_error_mean"],
            &rows,
        )?;
    }
    Ok(out)
}

/// Compares fresh Gaussian sketches against finite collections of each
/// size, all on the same instances. The block size is `config.block_size`
/// or else that of the first configured method.
pub fn finite_collection_study(config: &ExperimentConfig, collection_sizes: &[u64]) -> Result<ExperimentResult> {
    if collection_sizes.is_empty() {
        return Err(Error::config("sizes", "at least one collection size is required"));
    }
    let s = match config.block_size {
        Some(s) => s,
        None => config
            .methods
            .first()
            .map(|m| m.block_size)
            .ok_or_else(|| Error::config("methods", "cannot infer a block size"))?,
    };
    let mut methods = vec![SketchSpec::gaussian_block(s).map_err(|e| Error::config("s", e.to_string()))?];
    for &n in collection_sizes {
        methods.push(SketchSpec::finite_collection(s, n, 0).map_err(|e| Error::config("sizes", e.to_string()))?);
    }
    let cfg = ExperimentConfig {
        methods,
        block_size: None,
        ..config.clone()
    };
    let result = run_experiment(&cfg)?;
    if let Some(dir) = &config.output_dir {
        let rows: Vec<Vec<String>> = result
            .methods
            .iter()
            .map(|a| {
                let n = if a.spec.kind == SketchKind::FiniteGaussianCollection {
                    a.spec.collection_size.to_string()
                } else {
                    "fresh".to_string()
                };
                vec![
                    a.label.clone(),
                    n,
                    fmt_f64(a.iterations.mean),
                    a.reached.to_string(),
                    fmt_f64(a.final_error.mean),
                ]
            })
            .collect();
        write_table(
            &dir.join("collection.csv"),
            &["method", "N", "mean_iters", "reached", "final_rel_error_mean"],
            &rows,
        )?;
    }
    Ok(result)
}
