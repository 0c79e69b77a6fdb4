//! Test-problem generators (Gaussian, coherent and mixed matrices), noise
//! models, and a CSV matrix loader.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, DenseMatrix};
use crate::rng::{checksum_f64, stream_rng};

const MATRIX_STREAM: u64 = 0;
const SOLUTION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

fn check_shape(m: usize, n: usize, need_tall: bool) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("matrix shape {m}x{n} must be at least 1x1")));
    }
    if need_tall && m < n {
        return Err(Error::Parameter(format!("expected m >= n, got {m}x{n}")));
    }
    Ok(())
}

/// i.i.d. standard normal entries.
pub fn gen_gaussian(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    check_shape(m, n, true)?;
    let mut rng = stream_rng(seed, MATRIX_STREAM);
    let data = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::new(m, n, data)
}

/// i.i.d. entries uniform on `[0.8, 1]`; rows are nearly parallel.
pub fn gen_coherent(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    check_shape(m, n, false)?;
    let mut rng = stream_rng(seed, MATRIX_STREAM);
    let dist = Uniform::new_inclusive(0.8, 1.0).expect("valid range");
    let data = (0..m * n).map(|_| rng.sample(dist)).collect();
    DenseMatrix::new(m, n, data)
}

/// `n` independent Gaussian rows followed by `m − n` copies of row 0.
pub fn gen_mixed(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    check_shape(m, n, true)?;
    let mut rng = stream_rng(seed, MATRIX_STREAM);
    let mut data: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let first = data[..n].to_vec();
    data.reserve((m - n) * n);
    for _ in n..m {
        data.extend_from_slice(&first);
    }
    DenseMatrix::new(m, n, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixModel {
    Gaussian,
    Coherent,
    Mixed,
}

impl MatrixModel {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixModel::Gaussian => "gaussian",
            MatrixModel::Coherent => "coherent",
            MatrixModel::Mixed => "mixed",
        }
    }

    pub fn generate(self, m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
        match self {
            MatrixModel::Gaussian => gen_gaussian(m, n, seed),
            MatrixModel::Coherent => gen_coherent(m, n, seed),
            MatrixModel::Mixed => gen_mixed(m, n, seed),
        }
    }
}

impl fmt::Display for MatrixModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatrixModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(MatrixModel::Gaussian),
            "coherent" => Ok(MatrixModel::Coherent),
            "mixed" => Ok(MatrixModel::Mixed),
            other => Err(Error::Parameter(format!("unknown matrix model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    None,
    /// Gaussian noise scaled to `level · ‖A x*‖`, by default projected onto
    /// the orthogonal complement of the column space of `A`.
    GaussianRelative { level: f64, orthogonalize: bool },
    /// `count` distinct coordinates set to `magnitude`.
    Spiky {
        count: usize,
        magnitude: f64,
        orthogonalize: bool,
    },
}

impl NoiseSpec {
    pub fn gaussian_relative(level: f64) -> Self {
        NoiseSpec::GaussianRelative {
            level,
            orthogonalize: true,
        }
    }

    pub fn spiky(count: usize, magnitude: f64) -> Self {
        NoiseSpec::Spiky {
            count,
            magnitude,
            orthogonalize: false,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseSpec::None)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::GaussianRelative { level, .. } => {
                if !(level >= 0.0) || !level.is_finite() {
                    return Err(Error::Parameter(format!("noise level must be >= 0, got {level}")));
                }
                Ok(())
            }
            NoiseSpec::Spiky { count, magnitude, .. } => {
                if count > m {
                    return Err(Error::Parameter(format!("{count} spikes exceed the {m} rows")));
                }
                if !(magnitude >= 0.0) || !magnitude.is_finite() {
                    return Err(Error::Parameter(format!(
                        "spike magnitude must be >= 0, got {magnitude}"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for NoiseSpec {
    /// `none`, `gaussian:LEVEL[:raw]` or `spiky:COUNT:MAGNITUDE[:orth]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::None => f.write_str("none"),
            NoiseSpec::GaussianRelative { level, orthogonalize } => {
                write!(f, "gaussian:{level:?}")?;
                if !orthogonalize {
                    f.write_str(":raw")?;
                }
                Ok(())
            }
            NoiseSpec::Spiky {
                count,
                magnitude,
                orthogonalize,
            } => {
                write!(f, "spiky:{count}:{magnitude:?}")?;
                if orthogonalize {
                    f.write_str(":orth")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parameter(format!("noise `{text}` is missing a field")))?
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad number in noise `{text}`")))
        };
        let flag = |i: usize, word: &str| -> Result<bool> {
            match parts.get(i) {
                None => Ok(false),
                Some(w) if *w == word => Ok(true),
                Some(w) => Err(Error::Parameter(format!("unexpected `{w}` in noise `{text}`"))),
            }
        };
        match parts[0] {
            "none" if parts.len() == 1 => Ok(NoiseSpec::None),
            "gaussian" if parts.len() <= 3 => Ok(NoiseSpec::GaussianRelative {
                level: num(1)?,
                orthogonalize: !flag(2, "raw")?,
            }),
            "spiky" if parts.len() <= 4 => {
                let count = parts
                    .get(1)
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parameter(format!("bad spike count in `{text}`")))?;
                Ok(NoiseSpec::Spiky {
                    count,
                    magnitude: num(2)?,
                    orthogonalize: flag(3, "orth")?,
                })
            }
            _ => Err(Error::Parameter(format!("unknown noise spec `{text}`"))),
        }
    }
}

/// A linear system with known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub x_star: Vec<f64>,
    /// `A x* − b`; all zero for consistent systems.
    pub e: Vec<f64>,
    pub model_tag: String,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn e_norm(&self) -> f64 {
        norm(&self.e)
    }

    pub fn is_consistent(&self) -> bool {
        self.e.iter().all(|&v| v == 0.0)
    }

    /// Hash of the bit patterns of `A` and `b`.
    pub fn checksum(&self) -> u64 {
        checksum_f64([self.a.as_slice(), self.b.as_slice()])
    }
}

/// Projects `v` onto the orthogonal complement of the column space of `a`
/// (two passes of classical Gram-Schmidt against a thin QR basis).
pub fn project_out_columns(a: &DenseMatrix, v: &mut [f64]) -> Result<()> {
    if v.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", a.rows()),
            got: format!("length {}", v.len()),
        });
    }
    let q = a.to_nalgebra().qr().q();
    for _ in 0..2 {
        let coeffs = q.tr_mul(&nalgebra::DVector::from_column_slice(v));
        let proj = &q * coeffs;
        for (vi, pi) in v.iter_mut().zip(proj.iter()) {
            *vi -= pi;
        }
    }
    Ok(())
}

/// Draws `x*` and the noise for `a`, and forms `b = A x* − e`.
pub fn make_problem(a: DenseMatrix, noise: &NoiseSpec, seed: u64, model_tag: &str) -> Result<ProblemInstance> {
    let (m, n) = a.shape();
    noise.validate(m)?;
    let mut rng = stream_rng(seed, SOLUTION_STREAM);
    let x_star: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ax = a.mul_vec(&x_star)?;
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let e = match *noise {
        NoiseSpec::None => vec![0.0; m],
        NoiseSpec::GaussianRelative { level, orthogonalize } => {
            let mut g: Vec<f64> = (0..m).map(|_| noise_rng.sample(StandardNormal)).collect();
            if level == 0.0 {
                vec![0.0; m]
            } else {
                if orthogonalize {
                    project_out_columns(&a, &mut g)?;
                }
                let target = level * norm(&ax);
                let g_norm = norm(&g);
                if target == 0.0 || g_norm == 0.0 {
                    return Err(Error::Degenerate(format!(
                        "cannot scale noise to level {level}: ‖A x*‖ = {}, raw noise norm = {g_norm}",
                        norm(&ax)
                    )));
                }
                let scale = target / g_norm;
                g.iter_mut().for_each(|v| *v *= scale);
                g
            }
        }
        NoiseSpec::Spiky {
            count,
            magnitude,
            orthogonalize,
        } => {
            let mut e = vec![0.0; m];
            for i in rand::seq::index::sample(&mut noise_rng, m, count) {
                e[i] = magnitude;
            }
            if orthogonalize {
                project_out_columns(&a, &mut e)?;
            }
            e
        }
    };
    let b = ax.iter().zip(&e).map(|(p, q)| p - q).collect();
    Ok(ProblemInstance {
        a,
        b,
        x_star,
        e,
        model_tag: model_tag.to_string(),
        seed,
    })
}

/// Reads a headerless comma-separated numeric matrix, optionally scaling
/// each row to unit length.
pub fn load_csv_matrix(path: &Path, normalize_rows: bool) -> Result<DenseMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(file, &path.display().to_string(), normalize_rows)
}

pub fn parse_csv_matrix<R: Read>(reader: R, source_name: &str, normalize_rows: bool) -> Result<DenseMatrix> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(line, format!("expected {c} fields, found {}", record.len())))
            }
            _ => {}
        }
        let start = data.len();
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("`{field}` is not finite")));
            }
            data.push(v);
        }
        if normalize_rows {
            let row = &mut data[start..];
            let nr = norm(row);
            if nr == 0.0 {
                return Err(parse_err(line, "cannot normalize an all-zero row".into()));
            }
            row.iter_mut().for_each(|v| *v /= nr);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(1, "file contains no data".into()))?;
    DenseMatrix::new(rows, cols, data)
}

/// Largest `|⟨v, A_j⟩| / (‖v‖ ‖A_j‖)` over the columns of `a`.
pub fn max_column_cosine(a: &DenseMatrix, v: &[f64]) -> f64 {
    let nv = norm(v);
    (0..a.cols())
        .map(|j| {
            let col = a.column(j);
            dot(&col, v).abs() / (norm(&col) * nv)
        })
        .fold(0.0, f64::max)
}
