//! Sketch generators for the sketch-and-project iteration.
//!
//! Row and block sketches are represented by the selected row indices (the
//! equivalent 0/1 sketch matrix is never formed); Gaussian sketches carry an
//! explicit `m x s` matrix. Members of a finite Gaussian collection are
//! regenerated from `(seed, k)` on every draw.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{op_norm, DenseMatrix};
use crate::rng::stream_rng;

/// Default cap on the memory of the good-collection accumulators (1 GiB).
pub const DEFAULT_ACCUMULATOR_CAP: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchKind {
    /// One row, sampled with probability `‖A_i‖² / ‖A‖_F²`.
    SingleRowWeighted,
    /// A contiguous block of `s` rows, block chosen uniformly.
    BlockPartition,
    /// One Gaussian vector.
    GaussianVector,
    /// A fresh `m x s` Gaussian matrix per draw.
    GaussianBlock,
    /// A uniform draw (with replacement) from `N` fixed Gaussian matrices.
    FiniteGaussianCollection,
}

impl SketchKind {
    pub fn name(self) -> &'static str {
        match self {
            SketchKind::SingleRowWeighted => "row",
            SketchKind::BlockPartition => "block",
            SketchKind::GaussianVector => "gaussian_vector",
            SketchKind::GaussianBlock => "gaussian_block",
            SketchKind::FiniteGaussianCollection => "finite",
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(
            self,
            SketchKind::GaussianVector | SketchKind::GaussianBlock | SketchKind::FiniteGaussianCollection
        )
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "row" | "single_row" | "single_row_weighted" => Ok(SketchKind::SingleRowWeighted),
            "block" | "block_partition" => Ok(SketchKind::BlockPartition),
            "gaussian_vector" | "gaussian" => Ok(SketchKind::GaussianVector),
            "gaussian_block" | "bgk" => Ok(SketchKind::GaussianBlock),
            "finite" | "finite_collection" | "finite_gaussian_collection" => {
                Ok(SketchKind::FiniteGaussianCollection)
            }
            other => Err(Error::Parameter(format!("unknown sketch kind `{other}`"))),
        }
    }
}

/// Which sketch to draw, with its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub block_size: usize,
    /// Collection size `N`; only meaningful for `FiniteGaussianCollection`.
    pub collection_size: u64,
    /// Seed of the finite collection.
    pub seed: u64,
}

impl SketchSpec {
    /// Validated constructor. Single-row and Gaussian-vector sketches always
    /// have block size 1.
    pub fn new(kind: SketchKind, block_size: usize, collection_size: u64, seed: u64) -> Result<Self> {
        let block_size = match kind {
            SketchKind::SingleRowWeighted | SketchKind::GaussianVector => 1,
            _ => block_size,
        };
        if block_size == 0 {
            return Err(Error::Parameter("block size must be at least 1".into()));
        }
        let collection_size = if kind == SketchKind::FiniteGaussianCollection {
            if collection_size == 0 {
                return Err(Error::Parameter("collection size must be at least 1".into()));
            }
            collection_size
        } else {
            1
        };
        Ok(Self {
            kind,
            block_size,
            collection_size,
            seed,
        })
    }

    pub fn single_row() -> Self {
        Self::new(SketchKind::SingleRowWeighted, 1, 1, 0).expect("valid")
    }

    pub fn block_partition(s: usize) -> Result<Self> {
        Self::new(SketchKind::BlockPartition, s, 1, 0)
    }

    pub fn gaussian_vector() -> Self {
        Self::new(SketchKind::GaussianVector, 1, 1, 0).expect("valid")
    }

    pub fn gaussian_block(s: usize) -> Result<Self> {
        Self::new(SketchKind::GaussianBlock, s, 1, 0)
    }

    pub fn finite_collection(s: usize, n: u64, seed: u64) -> Result<Self> {
        Self::new(SketchKind::FiniteGaussianCollection, s, n, seed)
    }

    /// Short textual form, e.g. `gaussian_block:50` or `finite:100:200`.
    /// The collection seed is not part of the label.
    pub fn label(&self) -> String {
        match self.kind {
            SketchKind::SingleRowWeighted | SketchKind::GaussianVector => self.kind.name().to_string(),
            SketchKind::BlockPartition | SketchKind::GaussianBlock => {
                format!("{}:{}", self.kind.name(), self.block_size)
            }
            SketchKind::FiniteGaussianCollection => {
                format!("{}:{}:{}", self.kind.name(), self.block_size, self.collection_size)
            }
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_block_size(self, s: usize) -> Result<Self> {
        Self::new(self.kind, s, self.collection_size, self.seed)
    }
}

impl fmt::Display for SketchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SketchSpec {
    type Err = Error;

    /// Parses `kind[:s[:N]]`; a missing block size defaults to 1 and a
    /// missing collection size to 1.
    fn from_str(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(':');
        let kind: SketchKind = parts.next().unwrap_or_default().parse()?;
        let parse_num = |p: Option<&str>, what: &str| -> Result<Option<u64>> {
            p.map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Parameter(format!("bad {what} `{v}` in sketch `{text}`")))
            })
            .transpose()
        };
        let s = parse_num(parts.next(), "block size")?.unwrap_or(1);
        let n = parse_num(parts.next(), "collection size")?.unwrap_or(1);
        if parts.next().is_some() {
            return Err(Error::Parameter(format!("too many fields in sketch `{text}`")));
        }
        Self::new(kind, s as usize, n, 0)
    }
}

/// One realized sketch.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchDraw {
    /// Distinct row indices into `A`.
    Rows { indices: Vec<usize>, draw_index: u64 },
    /// Explicit `m x s` sketch matrix. `draw_index` is the collection member
    /// for finite collections and `None` for fresh Gaussian draws.
    Dense {
        matrix: DenseMatrix,
        draw_index: Option<u64>,
    },
}

impl SketchDraw {
    /// Number of sketched equations.
    pub fn size(&self) -> usize {
        match self {
            SketchDraw::Rows { indices, .. } => indices.len(),
            SketchDraw::Dense { matrix, .. } => matrix.cols(),
        }
    }

    /// The equivalent explicit 0/1 sketch matrix for a row draw.
    pub fn to_explicit(&self, m: usize) -> Result<DenseMatrix> {
        match self {
            SketchDraw::Rows { indices, .. } => {
                let mut data = vec![0.0; m * indices.len()];
                for (col, &row) in indices.iter().enumerate() {
                    if row >= m {
                        return Err(Error::Input(format!("row index {row} out of range for {m} rows")));
                    }
                    data[row * indices.len() + col] = 1.0;
                }
                DenseMatrix::new(m, indices.len(), data)
            }
            SketchDraw::Dense { matrix, .. } => Ok(matrix.clone()),
        }
    }
}

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<DenseMatrix> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data)
}

/// Member `k` of the finite Gaussian collection identified by `seed`.
pub fn collection_member(seed: u64, k: u64, m: usize, s: usize) -> Result<DenseMatrix> {
    gaussian_matrix(m, s, &mut stream_rng(seed, k))
}

/// Rows of block `z` in the contiguous partition of `0..m` into blocks of `s`;
/// the last block may be shorter.
pub fn partition_block(m: usize, s: usize, z: usize) -> Vec<usize> {
    let start = (z * s).min(m);
    (start..(start + s).min(m)).collect()
}

pub fn partition_block_count(m: usize, s: usize) -> usize {
    m.div_ceil(s)
}

/// Draws sketches for a fixed `A`; row-sampling weights are computed once.
#[derive(Debug, Clone)]
pub struct SketchSampler {
    spec: SketchSpec,
    m: usize,
    row_weights: Option<WeightedIndex<f64>>,
}

impl SketchSampler {
    pub fn new(spec: &SketchSpec, a: &DenseMatrix) -> Result<Self> {
        let m = a.rows();
        let row_weights = match spec.kind {
            SketchKind::SingleRowWeighted => {
                let weights: Vec<f64> = (0..m).map(|i| crate::linalg::norm_sq(a.row(i))).collect();
                Some(WeightedIndex::new(&weights).map_err(|_| {
                    Error::Degenerate("all rows of A are zero; row sampling is undefined".into())
                })?)
            }
            SketchKind::BlockPartition if spec.block_size > m => {
                return Err(Error::Parameter(format!(
                    "block size {} exceeds the {m} rows of A",
                    spec.block_size
                )))
            }
            _ => None,
        };
        Ok(Self {
            spec: *spec,
            m,
            row_weights,
        })
    }

    pub fn spec(&self) -> &SketchSpec {
        &self.spec
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SketchDraw> {
        let s = self.spec.block_size;
        match self.spec.kind {
            SketchKind::SingleRowWeighted => {
                let dist = self.row_weights.as_ref().expect("weights built in new");
                let i = dist.sample(rng);
                Ok(SketchDraw::Rows {
                    indices: vec![i],
                    draw_index: i as u64,
                })
            }
            SketchKind::BlockPartition => {
                let z = rng.random_range(0..partition_block_count(self.m, s));
                Ok(SketchDraw::Rows {
                    indices: partition_block(self.m, s, z),
                    draw_index: z as u64,
                })
            }
            SketchKind::GaussianVector | SketchKind::GaussianBlock => Ok(SketchDraw::Dense {
                matrix: gaussian_matrix(self.m, s, rng)?,
                draw_index: None,
            }),
            SketchKind::FiniteGaussianCollection => {
                let k = rng.random_range(0..self.spec.collection_size);
                Ok(SketchDraw::Dense {
                    matrix: collection_member(self.spec.seed, k, self.m, s)?,
                    draw_index: Some(k),
                })
            }
        }
    }
}

/// One-off draw; prefer [`SketchSampler`] inside loops.
pub fn draw_sketch<R: Rng + ?Sized>(spec: &SketchSpec, a: &DenseMatrix, rng: &mut R) -> Result<SketchDraw> {
    SketchSampler::new(spec, a)?.draw(rng)
}

/// The sketched system `(SᵀA, Sᵀb)`.
pub fn sketched_system(draw: &SketchDraw, a: &DenseMatrix, b: &[f64]) -> Result<(DenseMatrix, Vec<f64>)> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("right-hand side of length {}", a.rows()),
            got: format!("length {}", b.len()),
        });
    }
    match draw {
        SketchDraw::Rows { indices, .. } => {
            let a_s = a.select_rows(indices)?;
            let b_s = indices.iter().map(|&i| b[i]).collect();
            Ok((a_s, b_s))
        }
        SketchDraw::Dense { matrix, .. } => {
            if matrix.rows() != a.rows() {
                return Err(Error::DimensionMismatch {
                    expected: format!("sketch with {} rows", a.rows()),
                    got: format!("{} rows", matrix.rows()),
                });
            }
            Ok((matrix.transpose_mul(a)?, matrix.tr_mul_vec(b)?))
        }
    }
}

/// Result of checking the three conditions of a good sketch collection.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodCollectionReport {
    pub n: u64,
    pub m: usize,
    pub s: usize,
    pub max_opnorm: f64,
    pub worst_cross_sum: f64,
    pub worst_diag_dev: f64,
    /// `max_opnorm <= 3 sqrt(m)`
    pub cond1_ok: bool,
    /// `worst_cross_sum <= N / 4m`
    pub cond2_ok: bool,
    /// `worst_diag_dev <= N / 2`
    pub cond3_ok: bool,
}

impl GoodCollectionReport {
    pub fn is_good(&self) -> bool {
        self.cond1_ok && self.cond2_ok && self.cond3_ok
    }
}

/// Streaming accumulator over the members of a sketch collection.
///
/// Per column index `i` it keeps `Σ_k S_ji S_ri` for `j < r` (upper
/// triangle) and `Σ_k S_ji²`, plus the running maximum operator norm.
#[derive(Debug, Clone)]
pub struct CollectionAccumulator {
    m: usize,
    s: usize,
    count: u64,
    max_opnorm: f64,
    cross: Vec<f64>,
    diag: Vec<f64>,
}

impl CollectionAccumulator {
    pub fn new(m: usize, s: usize) -> Result<Self> {
        Self::with_cap(m, s, DEFAULT_ACCUMULATOR_CAP)
    }

    pub fn with_cap(m: usize, s: usize, cap_bytes: u64) -> Result<Self> {
        if m == 0 || s == 0 {
            return Err(Error::Parameter("collection matrices must be at least 1x1".into()));
        }
        let needed = Self::bytes_needed(m, s);
        if needed > cap_bytes {
            return Err(Error::Resource {
                what: format!("good-collection accumulators for m={m}, s={s}"),
                needed,
                cap: cap_bytes,
            });
        }
        let tri = m * (m - 1) / 2;
        Ok(Self {
            m,
            s,
            count: 0,
            max_opnorm: 0.0,
            cross: vec![0.0; s * tri],
            diag: vec![0.0; s * m],
        })
    }

    pub fn bytes_needed(m: usize, s: usize) -> u64 {
        let per_col = (m as u64) * (m as u64 - 1) / 2 + m as u64;
        per_col * s as u64 * 8
    }

    pub fn push(&mut self, sketch: &DenseMatrix) -> Result<()> {
        if sketch.shape() != (self.m, self.s) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} sketch", self.m, self.s),
                got: format!("{}x{}", sketch.rows(), sketch.cols()),
            });
        }
        let (m, s) = (self.m, self.s);
        let tri = m * (m - 1) / 2;
        let mut col = vec![0.0; m];
        for i in 0..s {
            for (j, c) in col.iter_mut().enumerate() {
                *c = sketch.get(j, i);
            }
            let cross = &mut self.cross[i * tri..(i + 1) * tri];
            let mut offset = 0;
            for j in 0..m {
                let cj = col[j];
                let len = m - j - 1;
                for (acc, &cr) in cross[offset..offset + len].iter_mut().zip(&col[j + 1..]) {
                    *acc += cj * cr;
                }
                offset += len;
                self.diag[i * m + j] += cj * cj;
            }
        }
        self.max_opnorm = self.max_opnorm.max(op_norm(sketch));
        self.count += 1;
        Ok(())
    }

    /// Folds another accumulator over a disjoint part of the same collection.
    pub fn merge(&mut self, other: &CollectionAccumulator) -> Result<()> {
        if (self.m, self.s) != (other.m, other.s) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} accumulator", self.m, self.s),
                got: format!("{}x{}", other.m, other.s),
            });
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += b;
        }
        self.count += other.count;
        self.max_opnorm = self.max_opnorm.max(other.max_opnorm);
        Ok(())
    }

    pub fn report(&self) -> GoodCollectionReport {
        let n = self.count as f64;
        let worst_cross_sum = self.cross.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let worst_diag_dev = self.diag.iter().fold(0.0f64, |acc, v| acc.max((v - n).abs()));
        let m = self.m as f64;
        GoodCollectionReport {
            n: self.count,
            m: self.m,
            s: self.s,
            max_opnorm: self.max_opnorm,
            worst_cross_sum,
            worst_diag_dev,
            cond1_ok: self.max_opnorm <= 3.0 * m.sqrt(),
            cond2_ok: worst_cross_sum <= n / (4.0 * m),
            cond3_ok: worst_diag_dev <= n / 2.0,
        }
    }
}

/// Regenerates every member of a finite collection and checks the three
/// good-collection conditions, holding one matrix at a time.
pub fn validate_good_collection(spec: &SketchSpec, m: usize) -> Result<GoodCollectionReport> {
    validate_good_collection_with_cap(spec, m, DEFAULT_ACCUMULATOR_CAP)
}

pub fn validate_good_collection_with_cap(
    spec: &SketchSpec,
    m: usize,
    cap_bytes: u64,
) -> Result<GoodCollectionReport> {
    if spec.kind != SketchKind::FiniteGaussianCollection {
        return Err(Error::Parameter(format!(
            "good-collection validation needs a finite collection, got `{}`",
            spec.label()
        )));
    }
    if m < spec.block_size {
        return Err(Error::Parameter(format!(
            "m = {m} is smaller than the block size {}",
            spec.block_size
        )));
    }
    let mut acc = CollectionAccumulator::with_cap(m, spec.block_size, cap_bytes)?;
    for k in 0..spec.collection_size {
        acc.push(&collection_member(spec.seed, k, m, spec.block_size)?)?;
    }
    Ok(acc.report())
}

/// Admissible collection sizes `⌈64 c m² ln m⌉ ..= ⌊e^{m/3}⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardinalityBounds {
    pub n_min: u64,
    /// Saturates at `u64::MAX` for large `m`.
    pub n_max: u64,
    pub feasible: bool,
}

pub fn collection_cardinality_bounds(m: u64, c: f64) -> Result<CardinalityBounds> {
    if m < 2 {
        return Err(Error::Parameter(format!("m must be at least 2, got {m}")));
    }
    if !(c > 3.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("the constant c must exceed 3, got {c}")));
    }
    let mf = m as f64;
    let n_min = (64.0 * c * mf * mf * mf.ln()).ceil() as u64;
    let n_max = (mf / 3.0).exp().floor() as u64;
    Ok(CardinalityBounds {
        n_min,
        n_max,
        feasible: n_min <= n_max,
    })
}
