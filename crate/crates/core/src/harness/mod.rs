//! Experiment runner: configuration, multi-trial runs, sweeps, collection
//! studies, the Monte Carlo verification suite, and CSV output.

pub mod config;
pub mod experiment;
pub mod output;

use std::path::Path;

pub use config::{ExperimentConfig, ModelSpec};
pub use experiment::{
    block_size_sweep, error_band, finite_collection_study, max_band_width, method_seed, problem_seed,
    run_experiment, trial_instance, BandPoint, CellResult, ExperimentResult, MethodAggregate, MethodBounds,
    Stats,
};
pub use output::{emit_trace, load_trace, parse_trace, write_trace};

use crate::error::{Error, Result};
use crate::models::{gen_gaussian, make_problem, NoiseSpec};
use crate::sketch::SketchSpec;
use crate::verify::{
    check_independence, check_inv_smin_moment, check_noise_event, check_one_step_contraction,
    check_opnorm_tail, check_second_moment, check_small_ball, MCReport,
};

/// Names accepted by [`run_check`], in suite order.
pub const VERIFY_CHECKS: &[&str] = &[
    "opnorm_tail",
    "small_ball",
    "second_moment",
    "inv_smin_moment",
    "independence",
    "noise_event",
    "one_step_contraction",
];

fn scaled(trials: u64, scale: f64) -> u64 {
    ((trials as f64 * scale).round() as u64).max(2)
}

/// Runs one named check with its standard parameters; `scale` multiplies
/// the trial count.
pub fn run_check(name: &str, seed: u64, scale: f64) -> Result<MCReport> {
    let noisy = || {
        make_problem(
            gen_gaussian(1000, 100, seed)?,
            &NoiseSpec::gaussian_relative(0.2),
            seed,
            "gaussian",
        )
    };
    match name {
        "opnorm_tail" => check_opnorm_tail(25, 25, 0.5, scaled(10_000, scale), seed),
        "small_ball" => {
            let v = gen_gaussian(50, 1, seed)?.into_vec();
            check_small_ball(&v, 1, scaled(100_000, scale), seed)
        }
        "second_moment" => check_second_moment(&gen_gaussian(200, 20, seed)?, 5, scaled(10_000, scale), seed),
        "inv_smin_moment" => check_inv_smin_moment(200, 100, scaled(2000, scale), seed),
        "independence" => check_independence(&noisy()?, 50, scaled(5000, scale), seed),
        "noise_event" => check_noise_event(&noisy()?, 50, scaled(2000, scale), seed),
        "one_step_contraction" => {
            let p = make_problem(gen_gaussian(400, 40, seed)?, &NoiseSpec::None, seed, "gaussian")?;
            check_one_step_contraction(&p, &SketchSpec::gaussian_block(8)?, None, scaled(500, scale), seed)
        }
        other => Err(Error::config("checks", format!("unknown check `{other}`"))),
    }
}

/// Runs the named checks (all of them for `["all"]`).
pub fn run_verify_suite(names: &[String], seed: u64, scale: f64) -> Result<Vec<MCReport>> {
    if !(scale > 0.0) {
        return Err(Error::config("trials_scale", "must be positive"));
    }
    let selected: Vec<&str> = if names.iter().any(|n| n == "all") {
        VERIFY_CHECKS.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    selected.into_iter().map(|n| run_check(n, seed, scale)).collect()
}

pub fn write_verify_csv(reports: &[MCReport], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.check_name.clone(),
                r.trials.to_string(),
                output::fmt_f64(r.empirical),
                output::fmt_f64(r.bound_or_target),
                r.pass.to_string(),
                output::fmt_f64(r.margin),
            ]
        })
        .collect();
    output::write_table(
        path,
        &["check_name", "trials", "empirical", "bound", "pass", "margin"],
        &rows,
    )
}
