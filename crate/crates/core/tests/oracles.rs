//! Numerical examples checked against independently computed values.

use bgk::bounds::{predicted_iterations, rate_thm2};
use bgk::harness::{block_size_sweep, run_experiment, ExperimentConfig, ModelSpec};
use bgk::linalg::{apply_pinv, norm, norm_sq, spectral_summary, sub, DenseMatrix};
use bgk::models::{gen_coherent, gen_gaussian, gen_mixed, make_problem, MatrixModel, NoiseSpec};
use bgk::rng::stream_rng;
use bgk::sketch::{draw_sketch, sketched_system, SketchDraw, SketchSpec};
use bgk::solver::{solve, SolveOptions, StopRule};
use bgk::verify::{
    check_noise_event, check_one_step_contraction, check_opnorm_tail, check_small_ball, mean_and_stderr,
};

fn assert_rel(got: f64, want: f64, tol: f64) {
    assert!(
        (got - want).abs() <= tol * want.abs().max(1e-300),
        "got {got}, want {want} (rel tol {tol})"
    );
}

/// Eigenvalues of a symmetric 3x3 matrix from its characteristic cubic
/// (trigonometric form), ascending.
fn sym3_eigenvalues(g: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = g[0][1].powi(2) + g[0][2].powi(2) + g[1][2].powi(2);
    let q = (g[0][0] + g[1][1] + g[2][2]) / 3.0;
    let p2 = (g[0][0] - q).powi(2) + (g[1][1] - q).powi(2) + (g[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = g;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    let mut ls = [l1, l2, l3];
    ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ls
}

#[test]
fn spectral_summary_matches_gram_cubic() {
    let m = gen_gaussian(6, 3, 41).unwrap();
    let mut g = [[0.0; 3]; 3];
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..6).map(|k| m.get(k, i) * m.get(k, j)).sum();
        }
    }
    let ev = sym3_eigenvalues(g);
    let sm = spectral_summary(&m);
    assert_rel(sm.sigma_min, ev[0].sqrt(), 1e-10);
    assert_rel(sm.sigma_max, ev[2].sqrt(), 1e-10);
    assert_rel(sm.kappa2, ev[2] / ev[0], 1e-10);
    let frob2: f64 = m.as_slice().iter().map(|v| v * v).sum();
    assert_rel(sm.frob, frob2.sqrt(), 1e-12);
}

#[test]
fn pinv_matches_normal_equations() {
    let m = gen_gaussian(5, 2, 42).unwrap();
    let y = [0.3, -1.2, 2.5, 0.7, -0.4];
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..5 {
        let (p, q) = (m.get(k, 0), m.get(k, 1));
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
        r1 += p * y[k];
        r2 += q * y[k];
    }
    let det = a11 * a22 - a12 * a12;
    let z = [(a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det];
    let got = apply_pinv(&m, &y).unwrap();
    assert_rel(got[0], z[0], 1e-10);
    assert_rel(got[1], z[1], 1e-10);
}

#[test]
fn sketched_system_matches_naive_product() {
    let s = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.75, 1.5]]).unwrap();
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![4.0, -1.0]]).unwrap();
    let b = [1.0, -2.0, 0.5];
    let draw = SketchDraw::Dense { matrix: s.clone(), draw_index: None };
    let (a_s, b_s) = sketched_system(&draw, &a, &b).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let mut want = 0.0;
            for k in 0..3 {
                want += s.get(k, i) * a.get(k, j);
            }
            assert!((a_s.get(i, j) - want).abs() <= 1e-12);
        }
        let want_b: f64 = (0..3).map(|k| s.get(k, i) * b[k]).sum();
        assert!((b_s[i] - want_b).abs() <= 1e-12);
    }
}

#[test]
fn gaussian_block_entries_are_standard_normal() {
    let a = DenseMatrix::identity(1000).unwrap();
    let spec = SketchSpec::gaussian_block(5).unwrap();
    let mut rng = stream_rng(43, 0);
    let mut vals = Vec::with_capacity(1_000_000);
    for _ in 0..200 {
        match draw_sketch(&spec, &a, &mut rng).unwrap() {
            SketchDraw::Dense { matrix, .. } => vals.extend_from_slice(matrix.as_slice()),
            other => panic!("unexpected draw {other:?}"),
        }
    }
    assert_eq!(vals.len(), 1_000_000);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    assert!(mean.abs() <= 0.01, "mean {mean}");
    assert!((var - 1.0).abs() <= 0.02, "variance {var}");
}

#[test]
fn full_size_gaussian_block_solves_large_system_in_one_step() {
    let p = make_problem(gen_gaussian(5000, 500, 44).unwrap(), &NoiseSpec::None, 44, "gaussian").unwrap();
    let out = solve(
        &p.a,
        &p.b,
        &SketchSpec::gaussian_block(500).unwrap(),
        &StopRule::new(1e-4, 10, 600.0).unwrap(),
        &mut stream_rng(44, 1),
        SolveOptions { x_star: Some(&p.x_star), ..Default::default() },
    )
    .unwrap();
    assert_eq!(out.trace.iterations(), 1);
    assert!(out.trace.final_error() <= 1e-20);
}

#[test]
fn every_run_reaches_threshold_on_gaussian_system() {
    let p = make_problem(gen_gaussian(1000, 50, 45).unwrap(), &NoiseSpec::None, 45, "gaussian").unwrap();
    let spec = SketchSpec::gaussian_block(10).unwrap();
    let stop = StopRule::new(1e-4, 100_000, 600.0).unwrap();
    let iters: Vec<f64> = (0..200)
        .map(|r| {
            let out = solve(&p.a, &p.b, &spec, &stop, &mut stream_rng(45, r),
                SolveOptions { x_star: Some(&p.x_star), stride: 1000, ..Default::default() })
            .unwrap();
            assert!(out.trace.final_error() <= 1e-4, "run {r} stopped at {}", out.trace.final_error());
            out.trace.iterations() as f64
        })
        .collect();

    // The rate bound's iteration count must not undercut the observed mean.
    let beta = rate_thm2(&spectral_summary(&p.a), 10).unwrap().beta;
    let predicted = predicted_iterations(beta, 1.0, 1e-4).unwrap() as f64;
    let (mean, se) = mean_and_stderr(&iters);
    assert!(mean - 3.0 * se <= predicted, "mean {mean} vs predicted {predicted}");
}

#[test]
fn gaussian_model_moments_and_conditioning() {
    let a = gen_gaussian(2000, 100, 46).unwrap();
    let vals = a.as_slice();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    assert!(mean.abs() <= 0.01 && (var - 1.0).abs() <= 0.02);
    let good = (0..10)
        .filter(|&seed| spectral_summary(&gen_gaussian(2000, 100, seed).unwrap()).kappa2.sqrt() <= 100.0)
        .count();
    assert!(good >= 9);
}

#[test]
fn coherent_model_rows_are_nearly_parallel() {
    let good = (0..10)
        .filter(|&seed| {
            let a = gen_coherent(60, 500, seed).unwrap();
            let mut min_cos = 1.0f64;
            for i in 0..60 {
                for j in i + 1..60 {
                    let (ri, rj) = (a.row(i), a.row(j));
                    let c = ri.iter().zip(rj).map(|(p, q)| p * q).sum::<f64>() / (norm(ri) * norm(rj));
                    min_cos = min_cos.min(c);
                }
            }
            min_cos >= 0.98
        })
        .count();
    assert!(good >= 9);

    let big = gen_coherent(2000, 500, 47).unwrap();
    assert!(big.as_slice().iter().all(|&v| (0.8..=1.0).contains(&v)));
    let mean = big.as_slice().iter().sum::<f64>() / 1e6;
    assert!((mean - 0.9).abs() <= 0.005, "mean {mean}");
}

#[test]
fn mixed_model_has_full_column_rank() {
    let a = gen_mixed(50, 10, 48).unwrap();
    let sv = bgk::linalg::singular_values(&a);
    assert_eq!(sv.len(), 10);
    assert!(sv.iter().all(|&s| s > 1e-8 * sv[0]));
}

#[test]
fn orthogonal_noise_keeps_ground_truth_optimal() {
    let p = make_problem(gen_gaussian(300, 20, 49).unwrap(), &NoiseSpec::gaussian_relative(0.2), 49, "gaussian")
        .unwrap();
    let ax = p.a.mul_vec(&p.x_star).unwrap();
    assert!((norm(&p.e) / norm(&ax) - 0.2).abs() <= 1e-12);
    let best = norm(&sub(&ax, &p.b));
    let mut rng = stream_rng(49, 7);
    for _ in 0..100 {
        let d = bgk::sketch::gaussian_matrix(20, 1, &mut rng).unwrap().into_vec();
        let y: Vec<f64> = p.x_star.iter().zip(&d).map(|(x, d)| x + 0.01 * d).collect();
        assert!(best <= norm(&sub(&p.a.mul_vec(&y).unwrap(), &p.b)));
    }
}

#[test]
fn opnorm_tail_examples() {
    let rare = check_opnorm_tail(100, 20, 1.0, 10_000, 50).unwrap();
    assert_eq!(rare.empirical, 0.0);
    assert!(rare.pass);
    let r = check_opnorm_tail(25, 25, 0.5, 10_000, 51).unwrap();
    assert_rel(r.bound_or_target, (-3.125f64).exp(), 1e-12);
    assert!(r.pass, "{r}");
}

/// `P(χ²_k > x)` for even `k` from the closed-form Poisson sum.
fn chi2_even_tail(k: u32, x: f64) -> f64 {
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k / 2 {
        term *= h / j as f64;
        sum += term;
    }
    (-h).exp() * sum
}

#[test]
fn small_ball_with_ten_columns() {
    let oracle = chi2_even_tail(10, 1.0);
    assert!((oracle - 0.999_828).abs() < 1e-6);
    let v = gen_gaussian(40, 1, 52).unwrap().into_vec();
    let r = check_small_ball(&v, 10, 100_000, 53).unwrap();
    let se = (oracle * (1.0 - oracle) / 1e5).sqrt();
    assert!((r.empirical - oracle).abs() <= 4.0 * se + 1e-5, "{r}");
    assert!(r.pass);
}

#[test]
fn noise_event_holds_with_high_probability() {
    let p = make_problem(gen_gaussian(1000, 100, 54).unwrap(), &NoiseSpec::gaussian_relative(0.2), 54, "gaussian")
        .unwrap();
    let r = check_noise_event(&p, 50, 2000, 55).unwrap();
    assert!(r.empirical >= 0.95 && r.pass, "{r}");
}

#[test]
fn single_row_blocks_barely_contract_on_coherent_rows() {
    let p = make_problem(gen_coherent(400, 40, 56).unwrap(), &NoiseSpec::None, 56, "coherent").unwrap();
    let r = check_one_step_contraction(&p, &SketchSpec::block_partition(1).unwrap(), None, 500, 57).unwrap();
    assert!(r.empirical >= 0.9 && r.empirical <= 1.0 + 1e-12, "{r}");
}

fn harness_config(model: MatrixModel, m: usize, n: usize, methods: Vec<SketchSpec>, trials: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::Builtin(model),
        m,
        n,
        methods,
        trials,
        master_seed: 58,
        ..ExperimentConfig::default()
    }
}

#[test]
fn block_and_gaussian_sketches_progress_alike_per_iteration() {
    let methods = vec![SketchSpec::block_partition(50).unwrap(), SketchSpec::gaussian_block(50).unwrap()];
    let result = run_experiment(&harness_config(MatrixModel::Gaussian, 2000, 100, methods, 10)).unwrap();
    let first_stop = result
        .cells
        .iter()
        .flatten()
        .map(|c| c.iterations)
        .min()
        .unwrap();
    let (block, gauss) = (&result.methods[0].band, &result.methods[1].band);
    for (p, q) in block.iter().zip(gauss) {
        assert_eq!(p.iteration, q.iteration);
        if p.iteration > first_stop {
            break;
        }
        let ratio = p.mean / q.mean;
        assert!((0.5..=2.0).contains(&ratio), "iteration {}: ratio {ratio}", p.iteration);
    }

    let again = run_experiment(&harness_config(
        MatrixModel::Gaussian,
        2000,
        100,
        vec![SketchSpec::block_partition(50).unwrap(), SketchSpec::gaussian_block(50).unwrap()],
        10,
    ))
    .unwrap();
    for (a, b) in result.cells.iter().flatten().zip(again.cells.iter().flatten()) {
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.final_error.to_bits(), b.final_error.to_bits());
    }
}

#[test]
fn sweep_including_full_size_reports_one_iteration() {
    let cfg = harness_config(MatrixModel::Gaussian, 400, 40, vec![SketchSpec::gaussian_block(5).unwrap()], 3);
    let runs = block_size_sweep(&cfg, &[5, 40]).unwrap();
    assert_eq!(runs[1].0, 40);
    assert_eq!(runs[1].1.methods[0].iterations.max, 1.0);
    assert!(runs[0].1.methods[0].iterations.mean > 1.0);
}

#[test]
fn gaussian_vector_beats_row_sampling_on_coherent_rows() {
    let mut cfg = harness_config(
        MatrixModel::Coherent,
        300,
        20,
        vec![SketchSpec::single_row(), SketchSpec::gaussian_vector()],
        3,
    );
    cfg.stop = StopRule::new(1e-2, 200_000, 600.0).unwrap();
    cfg.stride = 100;
    let result = run_experiment(&cfg).unwrap();
    let (row, gauss) = (&result.methods[0], &result.methods[1]);
    assert_eq!(gauss.reached, 3);
    assert!(gauss.iterations.mean < row.iterations.mean);
}

#[test]
fn residual_of_orthogonal_noise_is_the_noise() {
    let p = make_problem(gen_gaussian(200, 10, 59).unwrap(), &NoiseSpec::gaussian_relative(0.05), 59, "gaussian")
        .unwrap();
    let r = sub(&p.a.mul_vec(&p.x_star).unwrap(), &p.b);
    assert!(norm_sq(&sub(&r, &p.e)).sqrt() <= 1e-12 * norm(&p.e));
}
