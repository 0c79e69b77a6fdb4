//! Dense row-major matrices, singular-value summaries and the action of the
//! Moore-Penrose pseudoinverse on vectors.
//!
//! Storage is row-major: `data[i * cols + j]` holds entry `(i, j)`. Heavy
//! kernels (products, QR, SVD) go through nalgebra strided views so that no
//! transposed copies are needed for the row-major buffers.

use nalgebra::{DMatrix, DVector, Dyn, MatrixView, MatrixViewMut, SymmetricEigen, SVD};

type StridedView<'a> = MatrixView<'a, f64, Dyn, Dyn, Dyn, Dyn>;
type StridedViewMut<'a> = MatrixViewMut<'a, f64, Dyn, Dyn, Dyn, Dyn>;

fn strided(data: &[f64], r: usize, c: usize, rs: usize, cs: usize) -> StridedView<'_> {
    StridedView::from_slice_with_strides_generic(data, Dyn(r), Dyn(c), Dyn(rs), Dyn(cs))
}

fn strided_mut(data: &mut [f64], r: usize, c: usize, rs: usize, cs: usize) -> StridedViewMut<'_> {
    StridedViewMut::from_slice_with_strides_generic(data, Dyn(r), Dyn(c), Dyn(rs), Dyn(cs))
}

use crate::error::{Error, Result};

/// Relative diagonal threshold below which the QR route hands over to the SVD.
const QR_RANK_GUARD: f64 = 1e-8;

/// A dense real matrix with finite entries and at least one row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!(
                "matrix must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries ({rows}x{cols})", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: format!("{cols} columns"),
                got: format!("{} columns in row {i}", r.len()),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Input(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("vector", self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ * y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("vector", self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other`; this is how a sketch `S` is applied to `A`.
    pub fn transpose_mul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.rows),
                got: format!("{} rows", other.rows),
            });
        }
        let (m, s, n) = (self.rows, self.cols, other.cols);
        let lhs = strided(&self.data, s, m, 1, s);
        let rhs = other.na_view();
        let mut out = vec![0.0; s * n];
        {
            let mut view = strided_mut(&mut out, s, n, n, 1);
            view.gemm(1.0, &lhs, &rhs, 0.0);
        }
        DenseMatrix::new(s, n, out)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        {
            let mut view = strided_mut(&mut out, self.rows, other.cols, other.cols, 1);
            view.gemm(1.0, &self.na_view(), &other.na_view(), 0.0);
        }
        DenseMatrix::new(self.rows, other.cols, out)
    }

    /// Gram matrix `selfᵀ * self`.
    pub fn gram(&self) -> DenseMatrix {
        self.transpose_mul(self)
            .expect("gram of a finite matrix is well formed")
    }

    pub(crate) fn na_view(&self) -> StridedView<'_> {
        strided(&self.data, self.rows, self.cols, self.cols, 1)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Extreme singular values and norms of a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub frob: f64,
    /// `sigma_max² / sigma_min²`, infinite when `sigma_min == 0`.
    pub kappa2: f64,
}

impl SpectralSummary {
    pub fn from_parts(sigma_min: f64, sigma_max: f64, frob: f64) -> Self {
        let kappa2 = if sigma_min > 0.0 {
            (sigma_max / sigma_min).powi(2)
        } else {
            f64::INFINITY
        };
        Self {
            sigma_min,
            sigma_max,
            frob,
            kappa2,
        }
    }

    /// Operator norm, i.e. `sigma_max`.
    pub fn op_norm(&self) -> f64 {
        self.sigma_max
    }
}

/// Singular values of `m` in descending order (`min(rows, cols)` of them).
///
/// Tall and wide inputs are first reduced to their square triangular factor.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let reduced = if m.rows > m.cols {
        m.to_nalgebra().qr().unpack_r()
    } else if m.rows < m.cols {
        DMatrix::from_vec(m.cols, m.rows, m.data.clone()).qr().unpack_r()
    } else {
        m.to_nalgebra()
    };
    let mut sv: Vec<f64> = SVD::new(reduced, false, false)
        .singular_values
        .iter()
        .map(|v| v.abs())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn spectral_summary(m: &DenseMatrix) -> SpectralSummary {
    let sv = singular_values(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let sigma_min = sv.last().copied().unwrap_or(0.0);
    SpectralSummary::from_parts(sigma_min, sigma_max, m.frobenius_norm())
}

/// Default relative rank cutoff for an `rows x cols` matrix.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols) as f64
}

/// Minimum-norm least-squares solution `m† y`, with the default rank cutoff.
pub fn apply_pinv(m: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    apply_pinv_with_tol(m, y, default_rank_tol(m.rows, m.cols))
}

/// Minimum-norm least-squares solution `m† y`. Singular values at or below
/// `rel_tol * sigma_max` are treated as zero.
pub fn apply_pinv_with_tol(m: &DenseMatrix, y: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    check_len("right-hand side", m.rows, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite right-hand side".into()));
    }
    if m.rows == 1 {
        // single equation: projection along the row
        let a = m.row(0);
        let nrm2 = dot(a, a);
        if nrm2 == 0.0 {
            return Ok(vec![0.0; m.cols]);
        }
        return Ok(a.iter().map(|v| v * y[0] / nrm2).collect());
    }
    if let Some(z) = qr_pinv(m, y) {
        return Ok(z);
    }
    Ok(svd_pinv(m, y, rel_tol))
}

fn qr_pinv(m: &DenseMatrix, y: &[f64]) -> Option<Vec<f64>> {
    let yv = DVector::from_column_slice(y);
    if m.rows <= m.cols {
        // the row-major buffer of a wide matrix is its transpose in column-major order
        let qr = DMatrix::from_vec(m.cols, m.rows, m.data.clone()).qr();
        let r = qr.r();
        if !well_conditioned_diag(&r) {
            return None;
        }
        let w = r.tr_solve_upper_triangular(&yv)?;
        let z = qr.q() * w;
        Some(z.iter().copied().collect())
    } else {
        let qr = m.to_nalgebra().qr();
        let r = qr.r();
        if !well_conditioned_diag(&r) {
            return None;
        }
        let mut qty = yv;
        qr.q_tr_mul(&mut qty);
        let head = qty.rows(0, m.cols).into_owned();
        let z = r.solve_upper_triangular(&head)?;
        Some(z.iter().copied().collect())
    }
}

fn well_conditioned_diag(r: &DMatrix<f64>) -> bool {
    let diag = r.diagonal();
    let max = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    max > 0.0 && min > QR_RANK_GUARD * max
}

fn svd_pinv(m: &DenseMatrix, y: &[f64], rel_tol: f64) -> Vec<f64> {
    let svd = SVD::new(m.to_nalgebra(), true, true);
    let (u, vt) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(vt)) => (u, vt),
        _ => unreachable!("SVD was asked for both factors"),
    };
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut z = vec![0.0; m.cols];
    if sigma_max == 0.0 {
        return z;
    }
    let cutoff = rel_tol * sigma_max;
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff {
            continue;
        }
        let coeff = (0..m.rows).map(|i| u[(i, k)] * y[i]).sum::<f64>() / sigma;
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += coeff * vt[(k, j)];
        }
    }
    z
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn symmetric_eigen_extremes(g: &DenseMatrix) -> (f64, f64) {
    match g.rows {
        1 => (g.get(0, 0), g.get(0, 0)),
        2 => {
            let (a, b, d) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean - rad, mean + rad)
        }
        _ => {
            let eig = SymmetricEigen::new(g.to_nalgebra());
            eig.eigenvalues
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        }
    }
}

/// Largest singular value through the smaller Gram matrix.
pub fn op_norm(m: &DenseMatrix) -> f64 {
    let g = if m.rows >= m.cols { m.gram() } else { m.transpose().gram() };
    symmetric_eigen_extremes(&g).1.max(0.0).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{what} of length {expected}"),
            got: format!("length {got}"),
        })
    }
}
