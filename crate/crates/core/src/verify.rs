//! Monte Carlo checks of the probabilistic facts behind the Gaussian
//! sketch-and-project rates.
//!
//! Trial `t` of a check draws from `stream_rng(seed, t)`, so reports depend
//! only on `(seed, trials)` and not on the number of worker threads.

use std::fmt;

use rayon::prelude::*;

use crate::bounds::{rate_prop1, rate_thm2};
use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sq, op_norm, spectral_summary, symmetric_eigen_extremes, DenseMatrix};
use crate::models::{max_column_cosine, ProblemInstance};
use crate::rng::stream_rng;
use crate::sketch::{gaussian_matrix, SketchSampler, SketchSpec};
use crate::solver::step;

/// Cosine above which noise is considered not orthogonal to `range(A)`.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckDirection {
    /// Pass when `empirical <= bound + margin`.
    AtMost,
    /// Pass when `empirical >= bound − margin`.
    AtLeast,
    /// Pass when `|empirical − bound| <= margin`.
    Within,
}

impl CheckDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckDirection::AtMost => "at_most",
            CheckDirection::AtLeast => "at_least",
            CheckDirection::Within => "within",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCReport {
    pub check_name: String,
    pub trials: u64,
    pub empirical: f64,
    pub bound_or_target: f64,
    pub pass: bool,
    pub margin: f64,
    pub direction: CheckDirection,
}

impl MCReport {
    pub fn new(
        check_name: &str,
        trials: u64,
        empirical: f64,
        bound_or_target: f64,
        margin: f64,
        direction: CheckDirection,
    ) -> Self {
        let mut r = Self {
            check_name: check_name.to_string(),
            trials,
            empirical,
            bound_or_target,
            pass: false,
            margin,
            direction,
        };
        r.pass = r.recompute_pass();
        r
    }

    /// The pass flag implied by the other fields.
    pub fn recompute_pass(&self) -> bool {
        match self.direction {
            CheckDirection::AtMost => self.empirical <= self.bound_or_target + self.margin,
            CheckDirection::AtLeast => self.empirical >= self.bound_or_target - self.margin,
            CheckDirection::Within => (self.empirical - self.bound_or_target).abs() <= self.margin,
        }
    }
}

impl fmt::Display for MCReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] trials={} empirical={:.6} bound={:.6} margin={:.6} {}",
            self.check_name,
            self.direction.as_str(),
            self.trials,
            self.empirical,
            self.bound_or_target,
            self.margin,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    Ok(())
}

/// Runs `f(t, rng_t)` for every trial, in parallel, returning results in
/// trial order.
fn run_trials<T, F>(seed: u64, trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut crate::rng::StreamRng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, &mut stream_rng(seed, t)))
        .collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample Pearson correlation; `None` when either sample is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Fraction of `m x cols` Gaussian draws with `σ_max > (2 + t)√m`, against
/// the tail bound `e^{−t² m / 2}`.
pub fn check_opnorm_tail(m: usize, cols: usize, t: f64, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    if cols == 0 || m < cols {
        return Err(Error::Parameter(format!("need m >= cols >= 1, got m={m}, cols={cols}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Parameter(format!("t must be non-negative, got {t}")));
    }
    let level = (2.0 + t) * (m as f64).sqrt();
    let hits = run_trials(seed, trials, |_, rng| {
        Ok(op_norm(&gaussian_matrix(m, cols, rng)?) > level)
    })?;
    let empirical = hits.iter().filter(|&&h| h).count() as f64 / trials as f64;
    let bound = (-t * t * m as f64 / 2.0).exp();
    let margin = 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt() + 1.0 / trials as f64;
    Ok(MCReport::new("opnorm_tail", trials, empirical, bound, margin, CheckDirection::AtMost))
}

/// Fraction of `m x s` Gaussian draws with `‖Sᵀv‖² > s‖v‖²/10`, against the
/// lower bound 1/2.
pub fn check_small_ball(v: &[f64], s: usize, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    if s == 0 {
        return Err(Error::Parameter("s must be at least 1".into()));
    }
    let v2 = norm_sq(v);
    if v2 == 0.0 || !v2.is_finite() {
        return Err(Error::Degenerate("small-ball check needs a nonzero finite v".into()));
    }
    let m = v.len();
    let level = s as f64 * v2 / 10.0;
    let hits = run_trials(seed, trials, |_, rng| {
        let sk = gaussian_matrix(m, s, rng)?;
        Ok(norm_sq(&sk.tr_mul_vec(v)?) > level)
    })?;
    let empirical = hits.iter().filter(|&&h| h).count() as f64 / trials as f64;
    let margin = 3.0 * (0.25 / trials as f64).sqrt();
    Ok(MCReport::new("small_ball", trials, empirical, 0.5, margin, CheckDirection::AtLeast))
}

/// Mean of `‖SᵀAu‖² / (s‖Au‖²)` for a fixed random unit `u`, against 1 with
/// tolerance 0.05.
pub fn check_second_moment(a: &DenseMatrix, s: usize, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    if s == 0 {
        return Err(Error::Parameter("s must be at least 1".into()));
    }
    let mut urng = stream_rng(seed, u64::MAX);
    let u = gaussian_matrix(a.cols(), 1, &mut urng)?.into_vec();
    let un = norm(&u);
    let u: Vec<f64> = u.iter().map(|x| x / un).collect();
    let au = a.mul_vec(&u)?;
    let au2 = norm_sq(&au);
    if au2 == 0.0 {
        return Err(Error::Degenerate("A u = 0; the ratio is undefined".into()));
    }
    let ratios = run_trials(seed, trials, |_, rng| {
        let sk = gaussian_matrix(a.rows(), s, rng)?;
        Ok(norm_sq(&sk.tr_mul_vec(&au)?) / (s as f64 * au2))
    })?;
    let (mean, _) = mean_and_stderr(&ratios);
    Ok(MCReport::new("second_moment", trials, mean, 1.0, 0.05, CheckDirection::Within))
}

fn check_sketch_regime(n: usize, s: usize) -> Result<()> {
    if s == 0 || 2 * s > n {
        return Err(Error::Inapplicable(format!(
            "needs 1 <= s <= n/2, got n={n}, s={s}"
        )));
    }
    Ok(())
}

/// Mean of `σ_min(X)^{-2}` over `n x s` Gaussian `X`, against
/// `20/(√n − √s)²`.
pub fn check_inv_smin_moment(n: usize, s: usize, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    check_sketch_regime(n, s)?;
    let vals = run_trials(seed, trials, |_, rng| {
        let x = gaussian_matrix(n, s, rng)?;
        let (lmin, _) = symmetric_eigen_extremes(&x.gram());
        Ok(1.0 / lmin)
    })?;
    let (mean, se) = mean_and_stderr(&vals);
    let gap = (n as f64).sqrt() - (s as f64).sqrt();
    let bound = 20.0 / (gap * gap);
    Ok(MCReport::new("inv_smin_moment", trials, mean, bound, 3.0 * se, CheckDirection::AtMost))
}

fn require_orthogonal_noise(problem: &ProblemInstance) -> Result<()> {
    let cos = max_column_cosine(&problem.a, &problem.e);
    if cos > ORTHOGONALITY_TOL {
        return Err(Error::Precondition(format!(
            "noise is not orthogonal to the column space of A (max cosine {cos:e})"
        )));
    }
    Ok(())
}

/// `|corr(‖A_S†‖, ‖Sᵀe‖)|` over fresh Gaussian sketches, against
/// `3/√trials + 0.02`. A near-zero correlation is a necessary consequence of
/// the independence of the two quantities, not a proof of it.
pub fn check_independence(problem: &ProblemInstance, s: usize, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    if s == 0 {
        return Err(Error::Parameter("s must be at least 1".into()));
    }
    if trials < 2 {
        return Err(Error::Parameter("correlation needs at least two trials".into()));
    }
    if problem.e.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("e = 0; the correlation is undefined".into()));
    }
    require_orthogonal_noise(problem)?;
    let pairs = run_trials(seed, trials, |_, rng| {
        let sk = gaussian_matrix(problem.a.rows(), s, rng)?;
        let a_s = sk.transpose_mul(&problem.a)?;
        let (lmin, _) = symmetric_eigen_extremes(&a_s.transpose().gram());
        let pinv_norm = if lmin > 0.0 { lmin.sqrt().recip() } else { f64::INFINITY };
        Ok((pinv_norm, norm(&sk.tr_mul_vec(&problem.e)?)))
    })?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("a sketched matrix was rank deficient".into()));
    }
    let corr = pearson(&xs, &ys).ok_or_else(|| Error::Degenerate("constant sample".into()))?;
    let tol = 3.0 / (trials as f64).sqrt() + 0.02;
    Ok(MCReport::new("independence", trials, corr.abs(), 0.0, tol, CheckDirection::AtMost))
}

/// Fraction of fresh Gaussian sketches with
/// `‖A_S† Sᵀe‖² <= 8 s ‖e‖² / ((√n − √s)² σ_min²)`, against 0.95.
pub fn check_noise_event(problem: &ProblemInstance, s: usize, trials: u64, seed: u64) -> Result<MCReport> {
    check_trials(trials)?;
    let (m, n) = problem.a.shape();
    check_sketch_regime(n, s)?;
    let e2 = norm_sq(&problem.e);
    if e2 > 0.0 {
        require_orthogonal_noise(problem)?;
    }
    let summary = spectral_summary(&problem.a);
    if !(summary.sigma_min > 0.0) {
        return Err(Error::Degenerate("A is rank deficient".into()));
    }
    let gap = (n as f64).sqrt() - (s as f64).sqrt();
    let level = 8.0 * s as f64 * e2 / (gap * gap * summary.sigma_min * summary.sigma_min);
    let hits = run_trials(seed, trials, |_, rng| {
        let sk = gaussian_matrix(m, s, rng)?;
        let a_s = sk.transpose_mul(&problem.a)?;
        let se = sk.tr_mul_vec(&problem.e)?;
        let d = crate::linalg::apply_pinv(&a_s, &se)?;
        Ok(norm_sq(&d) <= level)
    })?;
    let empirical = hits.iter().filter(|&&h| h).count() as f64 / trials as f64;
    Ok(MCReport::new("noise_event", trials, empirical, 0.95, 0.0, CheckDirection::AtLeast))
}

/// Mean one-step ratio `‖step(x) − x*‖² / ‖x − x*‖²`, against the smaller of
/// the one-step and `κ`-free Gaussian rates. Without `x`, the start point is
/// `x*` plus a random unit direction.
pub fn check_one_step_contraction(
    problem: &ProblemInstance,
    spec: &SketchSpec,
    x: Option<&[f64]>,
    trials: u64,
    seed: u64,
) -> Result<MCReport> {
    check_trials(trials)?;
    if !problem.is_consistent() {
        return Err(Error::Precondition("one-step contraction needs a consistent system".into()));
    }
    let (m, n) = problem.a.shape();
    let x0 = match x {
        Some(x) => x.to_vec(),
        None => {
            let dir = gaussian_matrix(n, 1, &mut stream_rng(seed, u64::MAX))?.into_vec();
            let dn = norm(&dir);
            problem.x_star.iter().zip(&dir).map(|(p, d)| p + d / dn).collect()
        }
    };
    let d0 = crate::solver::relative_error(&x0, &problem.x_star)? * norm_sq(&problem.x_star);
    if d0 == 0.0 {
        return Err(Error::Degenerate("x = x*; the contraction ratio is undefined".into()));
    }
    let summary = spectral_summary(&problem.a);
    let comparator = rate_prop1(&summary, m, spec.block_size)?
        .beta
        .min(rate_thm2(&summary, spec.block_size)?.beta);
    let sampler = SketchSampler::new(spec, &problem.a)?;
    let ratios = run_trials(seed, trials, |_, rng| {
        let draw = sampler.draw(rng)?;
        let (x1, _) = step(&x0, &problem.a, &problem.b, &draw)?;
        let d1: f64 = x1.iter().zip(&problem.x_star).map(|(p, q)| (p - q) * (p - q)).sum();
        Ok(d1 / d0)
    })?;
    let (mean, se) = mean_and_stderr(&ratios);
    Ok(MCReport::new(
        "one_step_contraction",
        trials,
        mean,
        comparator,
        3.0 * se,
        CheckDirection::AtMost,
    ))
}
