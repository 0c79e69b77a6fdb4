//! Closed-form contraction factors and noise horizons for Gaussian
//! sketch-and-project, to compare against measured traces.
//!
//! Inapplicable bounds are returned as values with `applicable == false` and
//! a reason; only malformed inputs are errors.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::SpectralSummary;
use crate::sketch::collection_cardinality_bounds;

/// Constant `c` used for the collection-size feasibility flag.
pub const DEFAULT_COLLECTION_C: f64 = 4.0;
/// Horizon constant for finite collections.
pub const FINITE_HORIZON_C: f64 = 300.0;
/// Horizon constant for fresh Gaussian draws.
pub const FRESH_HORIZON_C: f64 = 1600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundSource {
    /// Fresh Gaussian sketches, condition-number rate `1 − s/(15 m κ²)`.
    Thm1,
    /// Fresh Gaussian sketches, rate without a condition-number assumption.
    Thm2,
    /// Finite collection, rate `1 − s/(36 m κ²)`.
    Thm3,
    /// Finite collection with noise.
    Thm4,
    /// Fresh Gaussian sketches with noise.
    Thm5,
    /// One-step expected contraction for fresh Gaussian sketches.
    Prop1,
}

impl BoundSource {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundSource::Thm1 => "thm1",
            BoundSource::Thm2 => "thm2",
            BoundSource::Thm3 => "thm3",
            BoundSource::Thm4 => "thm4",
            BoundSource::Thm5 => "thm5",
            BoundSource::Prop1 => "prop1",
        }
    }
}

impl fmt::Display for BoundSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBound {
    /// Per-iteration contraction factor.
    pub beta: f64,
    /// Noise floor; 0 for the consistent-case bounds, infinite when a noise
    /// bound is inapplicable.
    pub horizon: f64,
    pub source: BoundSource,
    pub applicable: bool,
    pub reason: Option<String>,
    /// Bound on the expected one-step noise term `‖A_S† Sᵀe‖²`.
    pub per_step_noise: Option<f64>,
    /// Whether an admissible collection size exists for this `m`.
    pub collection_feasible: Option<bool>,
}

impl RateBound {
    fn consistent(source: BoundSource, beta: f64) -> Self {
        let mut bound = Self {
            beta,
            horizon: 0.0,
            source,
            applicable: true,
            reason: None,
            per_step_noise: None,
            collection_feasible: None,
        };
        if !(beta > 0.0 && beta <= 1.0) {
            bound.mark_inapplicable(format!("beta = {beta} is outside (0, 1]"));
        }
        bound
    }

    fn mark_inapplicable(&mut self, reason: String) {
        self.applicable = false;
        if self.reason.is_none() {
            self.reason = Some(reason);
        }
    }

    /// Iterations the bound needs to shrink the error from `initial` to
    /// `target`; `None` when the bound guarantees no progress.
    pub fn predicted_iterations(&self, initial: f64, target: f64) -> Option<u64> {
        predicted_iterations(self.beta, initial, target)
    }
}

/// `⌈log(target/initial) / log(beta)⌉`, or 0 when already below target.
pub fn predicted_iterations(beta: f64, initial: f64, target: f64) -> Option<u64> {
    if target >= initial {
        return Some(0);
    }
    if !(beta > 0.0 && beta < 1.0) || !(target > 0.0) {
        return None;
    }
    Some(((target / initial).ln() / beta.ln()).ceil() as u64)
}

fn check_summary(summary: &SpectralSummary) -> Result<()> {
    if !(summary.sigma_min > 0.0) || !summary.kappa2.is_finite() {
        return Err(Error::Degenerate(format!(
            "bounds need sigma_min > 0, got {}",
            summary.sigma_min
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: usize) -> Result<f64> {
    if v == 0 {
        return Err(Error::Parameter(format!("{name} must be at least 1")));
    }
    Ok(v as f64)
}

fn check_noise(e_norm: f64) -> Result<()> {
    if !(e_norm >= 0.0) || !e_norm.is_finite() {
        return Err(Error::Parameter(format!(
            "noise norm must be finite and non-negative, got {e_norm}"
        )));
    }
    Ok(())
}

/// `1 − s/(15 m κ²)`, applicable when `κ² ≤ e^{m/4}/3`.
pub fn rate_thm1(summary: &SpectralSummary, m: usize, s: usize) -> Result<RateBound> {
    check_summary(summary)?;
    let mf = check_positive("m", m)?;
    let sf = check_positive("s", s)?;
    let mut bound = RateBound::consistent(BoundSource::Thm1, 1.0 - sf / (15.0 * mf * summary.kappa2));
    let limit = (mf / 4.0).exp() / 3.0;
    if summary.kappa2 > limit {
        bound.mark_inapplicable(format!(
            "kappa^2 = {} exceeds e^(m/4)/3 = {limit}",
            summary.kappa2
        ));
    }
    Ok(bound)
}

/// `1 − (1/80) [√s σ_min / (√s ‖A‖ + ‖A‖_F)]²`.
pub fn rate_thm2(summary: &SpectralSummary, s: usize) -> Result<RateBound> {
    check_summary(summary)?;
    let sf = check_positive("s", s)?.sqrt();
    let ratio = sf * summary.sigma_min / (sf * summary.sigma_max + summary.frob);
    Ok(RateBound::consistent(BoundSource::Thm2, 1.0 - ratio * ratio / 80.0))
}

/// `1 − s/(36 m κ²)` with the collection feasibility flag for `c = 4`.
pub fn rate_thm3(summary: &SpectralSummary, m: usize, s: usize) -> Result<RateBound> {
    rate_thm3_with_c(summary, m, s, DEFAULT_COLLECTION_C)
}

pub fn rate_thm3_with_c(summary: &SpectralSummary, m: usize, s: usize, c: f64) -> Result<RateBound> {
    check_summary(summary)?;
    let mf = check_positive("m", m)?;
    let sf = check_positive("s", s)?;
    let mut bound = RateBound::consistent(BoundSource::Thm3, 1.0 - sf / (36.0 * mf * summary.kappa2));
    bound.collection_feasible = if m >= 2 {
        Some(collection_cardinality_bounds(m as u64, c)?.feasible)
    } else {
        Some(false)
    };
    Ok(bound)
}

/// `1 − s/(10 m κ²) − e^{−m/4}/(10 m)`.
pub fn rate_prop1(summary: &SpectralSummary, m: usize, s: usize) -> Result<RateBound> {
    check_summary(summary)?;
    let mf = check_positive("m", m)?;
    let sf = check_positive("s", s)?;
    let beta = 1.0 - sf / (10.0 * mf * summary.kappa2) - (-mf / 4.0).exp() / (10.0 * mf);
    Ok(RateBound::consistent(BoundSource::Prop1, beta))
}

fn gap_sq(n: f64, s: f64) -> f64 {
    let g = n.sqrt() - s.sqrt();
    g * g
}

/// Finite-collection rate with noise: `beta` from [`rate_thm3`] and horizon
/// `300 m κ² ‖e‖² / (σ_min² (√n − √s)²)`. Inapplicable for `s ≥ n`.
pub fn horizon_thm4(summary: &SpectralSummary, m: usize, n: usize, s: usize, e_norm: f64) -> Result<RateBound> {
    check_noise(e_norm)?;
    let nf = check_positive("n", n)?;
    let base = rate_thm3(summary, m, s)?;
    let mut bound = RateBound {
        source: BoundSource::Thm4,
        ..base
    };
    if s >= n {
        bound.horizon = f64::INFINITY;
        bound.mark_inapplicable(format!("sketch size {s} is not below n = {n}"));
        return Ok(bound);
    }
    let e2 = e_norm * e_norm;
    let smin2 = summary.sigma_min * summary.sigma_min;
    let gap = gap_sq(nf, s as f64);
    bound.horizon = FINITE_HORIZON_C * m as f64 * summary.kappa2 * e2 / (smin2 * gap);
    bound.per_step_noise = Some(8.0 * s as f64 * e2 / (gap * smin2));
    Ok(bound)
}

/// Fresh-Gaussian rate with noise: `beta` from [`rate_thm2`] and horizon
/// `1600 (√s ‖A‖ + ‖A‖_F)² ‖e‖² / (σ_min⁴ (√n − √s)²)`. Inapplicable for
/// `s > alpha n`.
pub fn horizon_thm5(summary: &SpectralSummary, n: usize, s: usize, e_norm: f64, alpha: f64) -> Result<RateBound> {
    check_noise(e_norm)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let nf = check_positive("n", n)?;
    let base = rate_thm2(summary, s)?;
    let mut bound = RateBound {
        source: BoundSource::Thm5,
        ..base
    };
    let sf = s as f64;
    if sf > alpha * nf {
        bound.horizon = f64::INFINITY;
        bound.mark_inapplicable(format!("sketch size {s} exceeds alpha * n = {}", alpha * nf));
        return Ok(bound);
    }
    let e2 = e_norm * e_norm;
    let smin2 = summary.sigma_min * summary.sigma_min;
    let gap = gap_sq(nf, sf);
    let lead = sf.sqrt() * summary.sigma_max + summary.frob;
    bound.horizon = FRESH_HORIZON_C * lead * lead * e2 / (smin2 * smin2 * gap);
    bound.per_step_noise = Some(20.0 * sf * e2 / (gap * smin2));
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary_with(kappa2: f64) -> SpectralSummary {
        SpectralSummary::from_parts(1.0, kappa2.sqrt(), 10.0)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn thm1_examples() {
        let b = rate_thm1(&summary_with(2.0), 100, 10).unwrap();
        assert!(close(b.beta, 1.0 - 10.0 / 3000.0));
        assert!(b.applicable);
        assert_eq!(b.horizon, 0.0);
        let b = rate_thm1(&summary_with(1.0), 100, 1).unwrap();
        assert!(close(b.beta, 1.0 - 1.0 / 1500.0));
        let m = 20;
        let b = rate_thm1(&summary_with((m as f64 / 4.0).exp()), m, 1).unwrap();
        assert!(!b.applicable);
        assert!(b.reason.is_some());
    }

    #[test]
    fn thm2_examples() {
        let s = SpectralSummary::from_parts(1.0, 1.0, 1.0);
        assert!(close(rate_thm2(&s, 1).unwrap().beta, 1.0 - 1.0 / 320.0));
        let wide = SpectralSummary::from_parts(1.0, 1.0, 1e12);
        assert!(rate_thm2(&wide, 1).unwrap().beta > 1.0 - 1e-12);
    }

    #[test]
    fn thm3_examples() {
        let b = rate_thm3(&summary_with(2.0), 100, 10).unwrap();
        assert!(close(b.beta, 1.0 - 10.0 / 7200.0));
        assert_eq!(b.collection_feasible, Some(true));
        assert_eq!(rate_thm3(&summary_with(1.0), 20, 2).unwrap().collection_feasible, Some(false));
        assert!(close(rate_thm3(&summary_with(1.0), 50, 50).unwrap().beta, 1.0 - 1.0 / 36.0));
        let feasible = rate_thm3(&summary_with(1.0), 200, 10).unwrap();
        assert_eq!(feasible.collection_feasible, Some(true));
    }

    #[test]
    fn prop1_example() {
        let b = rate_prop1(&summary_with(1.0), 40, 4).unwrap();
        let want = 1.0 - 4.0 / 400.0 - (-10.0f64).exp() / 400.0;
        assert!(close(b.beta, want));
        assert!((b.beta - 0.99).abs() < 1e-6);
    }

    #[test]
    fn ordering_between_rates() {
        for kappa2 in [1.0, 3.0, 40.0] {
            for (m, s) in [(40, 1), (100, 10), (400, 8)] {
                let sm = summary_with(kappa2);
                let t1 = rate_thm1(&sm, m, s).unwrap();
                let t3 = rate_thm3(&sm, m, s).unwrap();
                let p1 = rate_prop1(&sm, m, s).unwrap();
                assert!(t3.beta >= t1.beta);
                if t1.applicable {
                    assert!(p1.beta <= t1.beta);
                }
            }
        }
    }

    #[test]
    fn thm4_examples() {
        let sm = SpectralSummary::from_parts(1.0, 1.0, 5.0);
        let b = horizon_thm4(&sm, 100, 25, 4, 1.0).unwrap();
        assert!(close(b.horizon, 300.0 * 100.0 / 9.0));
        assert!(close(b.per_step_noise.unwrap(), 8.0 * 4.0 / 9.0));
        assert_eq!(b.source, BoundSource::Thm4);
        let zero = horizon_thm4(&sm, 100, 25, 4, 0.0).unwrap();
        assert_eq!(zero.horizon, 0.0);
        assert_eq!(zero.beta, rate_thm3(&sm, 100, 4).unwrap().beta);
        let near = horizon_thm4(&sm, 100, 100, 99, 1.0).unwrap();
        let quarter = horizon_thm4(&sm, 100, 100, 25, 1.0).unwrap();
        assert!(near.horizon > quarter.horizon);
        let full = horizon_thm4(&sm, 100, 25, 25, 1.0).unwrap();
        assert!(!full.applicable);
    }

    #[test]
    fn thm5_examples() {
        let n = 100usize;
        let sm = SpectralSummary::from_parts(1.0, 1.0, (n as f64).sqrt());
        let e = 0.3;
        let b = horizon_thm5(&sm, n, n / 4, e, 0.5).unwrap();
        assert!((b.horizon - 1600.0 * 9.0 * e * e).abs() < 1e-9);
        assert!(b.applicable);
        assert_eq!(horizon_thm5(&sm, n, n / 4, 0.0, 0.5).unwrap().horizon, 0.0);
        let over = horizon_thm5(&sm, n, 60, e, 0.5).unwrap();
        assert!(!over.applicable);
        assert!(horizon_thm5(&sm, n, 10, e, 1.0).is_err());
    }

    #[test]
    fn degenerate_and_bad_inputs() {
        let sing = SpectralSummary::from_parts(0.0, 1.0, 1.0);
        assert!(matches!(rate_thm1(&sing, 10, 1), Err(Error::Degenerate(_))));
        assert!(rate_thm2(&summary_with(1.0), 0).is_err());
        assert!(horizon_thm4(&summary_with(1.0), 10, 5, 1, -1.0).is_err());
    }

    #[test]
    fn predicted_iteration_count() {
        assert_eq!(predicted_iterations(0.5, 1.0, 0.25), Some(2));
        assert_eq!(predicted_iterations(0.5, 1.0, 2.0), Some(0));
        assert_eq!(predicted_iterations(1.0, 1.0, 0.5), None);
    }
}
