//! Moran's operator, its leading eigenvectors, prior precision kernels, and
//! competing basis families.

pub mod alt;
pub mod lanczos;
mod precision;

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use alt::{bisquare_basis, knot_grid, matern_eigenbasis, thin_plate_basis, AltBasis, AltBasisKind};
pub use lanczos::{EigenPairs, LanczosOptions, SymmetricOperator};
pub use precision::{precision_kernel, PrecisionKernel, PrecisionKind, SparseSymmetric};

use crate::error::{PicarError, Result};
use crate::mesh::Adjacency;

/// Largest mesh for which dense `m x m` matrices are formed.
pub const DENSE_CAP: usize = 2000;

/// Extra eigenpairs computed beyond the requested rank, then discarded.
pub const EIGEN_BUFFER: usize = 10;

/// The centered adjacency operator `(I - 11'/m) N (I - 11'/m)`, applied
/// implicitly from the sparse neighborhood matrix.
#[derive(Clone, Debug)]
pub struct MoranOperator {
    adjacency: Adjacency,
}

fn center(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

impl MoranOperator {
    pub fn new(adjacency: Adjacency) -> Self {
        MoranOperator { adjacency }
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Dense materialization, row by row. Only for `m <= DENSE_CAP`.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        parallel_moran_blocks(&self.adjacency, 1)
    }
}

impl SymmetricOperator for MoranOperator {
    fn dim(&self) -> usize {
        self.adjacency.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut centered = x.to_vec();
        center(&mut centered);
        self.adjacency.matvec(&centered, y);
        center(y);
    }
}

pub fn moran_operator(adjacency: &Adjacency) -> MoranOperator {
    MoranOperator::new(adjacency.clone())
}

/// Row `i` of the dense Moran's operator.
///
/// With `S = (I - 11'/m) N`, entry `(i, j)` of `S (I - 11'/m)` is
/// `N_ij - d_j/m - d_i/m + D/m^2` where `d` are degrees and `D = sum(d)`.
fn moran_row(adjacency: &Adjacency, degrees: &[f64], total: f64, i: usize, row: &mut [f64]) {
    let m = adjacency.size() as f64;
    let di = degrees[i] / m;
    let corner = total / (m * m);
    for (j, r) in row.iter_mut().enumerate() {
        *r = -degrees[j] / m - di + corner;
    }
    for &j in adjacency.neighbors(i) {
        row[j] += 1.0;
    }
}

/// Assembles the dense Moran's operator from `blocks` contiguous row blocks
/// computed independently. Every row uses the same arithmetic regardless of
/// the partition, so the result is bitwise identical for any block count.
pub fn parallel_moran_blocks(adjacency: &Adjacency, blocks: usize) -> Result<DMatrix<f64>> {
    let m = adjacency.size();
    if m > DENSE_CAP {
        return Err(PicarError::InvalidArgument(format!(
            "dense Moran's operator limited to m <= {DENSE_CAP}, got {m}"
        )));
    }
    if blocks == 0 || blocks > m.max(1) {
        return Err(PicarError::InvalidArgument(format!(
            "block count must be in 1..={m}, got {blocks}"
        )));
    }
    let degrees = adjacency.degrees();
    let total: f64 = degrees.iter().sum();
    let bounds: Vec<(usize, usize)> = (0..blocks)
        .map(|b| (b * m / blocks, (b + 1) * m / blocks))
        .collect();
    let parts: Vec<Vec<f64>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut buf = vec![0.0; (hi - lo) * m];
            for (r, i) in (lo..hi).enumerate() {
                moran_row(adjacency, &degrees, total, i, &mut buf[r * m..(r + 1) * m]);
            }
            buf
        })
        .collect();
    let rows: Vec<f64> = parts.concat();
    // Stored row-major; the operator is symmetric but transpose anyway.
    Ok(DMatrix::from_row_slice(m, m, &rows))
}

/// Leading eigenvectors of the Moran's operator on the mesh vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct MoranBasis {
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    /// Requested pairs dropped for a nonpositive eigenvalue.
    dropped_nonpositive: usize,
}

impl MoranBasis {
    pub fn new(vectors: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() {
            return Err(PicarError::DimensionMismatch(format!(
                "{} eigenvectors but {} eigenvalues",
                vectors.ncols(),
                eigenvalues.len()
            )));
        }
        Ok(MoranBasis {
            vectors,
            eigenvalues,
            dropped_nonpositive: 0,
        })
    }

    /// The `m x p` basis matrix.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dropped_nonpositive(&self) -> usize {
        self.dropped_nonpositive
    }

    /// The first `p` columns.
    pub fn leading(&self, p: usize) -> Result<MoranBasis> {
        if p == 0 || p > self.rank() {
            return Err(PicarError::InvalidArgument(format!(
                "rank {p} outside 1..={}",
                self.rank()
            )));
        }
        Ok(MoranBasis {
            vectors: self.vectors.columns(0, p).into_owned(),
            eigenvalues: self.eigenvalues[..p].to_vec(),
            dropped_nonpositive: self.dropped_nonpositive,
        })
    }

    /// Text export: `m p`, then `m` rows of `p` entries, then the
    /// eigenvalues on one line.
    pub fn to_text(&self) -> String {
        let (m, p) = self.vectors.shape();
        let mut s = String::new();
        let _ = writeln!(s, "{m} {p}");
        for i in 0..m {
            let row: Vec<String> = (0..p).map(|j| format!("{:?}", self.vectors[(i, j)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let vals: Vec<String> = self.eigenvalues.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let parse_row = |line: Option<&str>, n: usize, what: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| PicarError::Parse(format!("missing {what}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| PicarError::Parse(format!("bad {what}: {line:?}")))?;
            if vals.len() != n {
                return Err(PicarError::Parse(format!("{what} needs {n} values")));
            }
            Ok(vals)
        };
        let header = lines
            .next()
            .ok_or_else(|| PicarError::Parse("empty basis file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PicarError::Parse(format!("bad header {header:?}")))?;
        if dims.len() != 2 {
            return Err(PicarError::Parse("header needs `m p`".into()));
        }
        let (m, p) = (dims[0], dims[1]);
        let mut entries = Vec::with_capacity(m * p);
        for i in 0..m {
            entries.extend(parse_row(lines.next(), p, &format!("basis row {i}"))?);
        }
        let eigenvalues = parse_row(lines.next(), p, "eigenvalue line")?;
        MoranBasis::new(DMatrix::from_row_slice(m, p, &entries), eigenvalues)
    }
}

/// Flips each column so its first non-negligible entry is positive.
pub(crate) fn normalize_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let amax = col.amax();
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-10 * amax) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Sorts pairs by nonincreasing eigenvalue; ties are broken by the first
/// entry at which the vectors differ, larger entry first.
fn sort_pairs(values: &mut Vec<f64>, vectors: &mut DMatrix<f64>) {
    let scale = values.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let tie = 1e-12 * scale;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        if (values[a] - values[b]).abs() > tie {
            return values[b].total_cmp(&values[a]);
        }
        let (ca, cb) = (vectors.column(a), vectors.column(b));
        for (x, y) in ca.iter().zip(cb.iter()) {
            if (x - y).abs() > 1e-12 {
                return y.partial_cmp(x).unwrap_or(Ordering::Equal);
            }
        }
        a.cmp(&b)
    });
    *values = order.iter().map(|&i| values[i]).collect();
    *vectors = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
}

/// Which algorithm produced the eigenpairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    Lanczos,
    DenseFallback,
}

/// The `p_max` leading eigenpairs of `op`, keeping only strictly positive
/// eigenvalues. Falls back to a dense decomposition when Lanczos fails and
/// the operator is small enough to materialize.
pub fn leading_eigenpairs(
    op: &MoranOperator,
    p_max: usize,
    seed: u64,
) -> Result<(MoranBasis, EigenMethod)> {
    let m = op.dim();
    if p_max == 0 || p_max >= m {
        return Err(PicarError::InvalidArgument(format!(
            "p_max must be in 1..{m}, got {p_max}"
        )));
    }
    let request = (p_max + EIGEN_BUFFER).min(m - 1);
    let opts = LanczosOptions {
        seed,
        ..LanczosOptions::default()
    };
    let (pairs, method) = match lanczos::largest_eigenpairs(op, request, &opts) {
        Ok(pairs) => (pairs, EigenMethod::Lanczos),
        Err(err @ PicarError::EigensolverFailure { .. }) => {
            if m > DENSE_CAP {
                return Err(err);
            }
            let dense = op.to_dense()?;
            (lanczos::dense_largest_eigenpairs(&dense, request), EigenMethod::DenseFallback)
        }
        Err(e) => return Err(e),
    };
    Ok((finish_basis(pairs, p_max), method))
}

fn finish_basis(pairs: EigenPairs, p_max: usize) -> MoranBasis {
    let EigenPairs {
        mut values,
        mut vectors,
        ..
    } = pairs;
    normalize_signs(&mut vectors);
    sort_pairs(&mut values, &mut vectors);
    let take = p_max.min(values.len());
    let scale = values.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let positive = values[..take]
        .iter()
        .take_while(|&&v| v > 1e-10 * scale)
        .count();
    MoranBasis {
        vectors: vectors.columns(0, positive).into_owned(),
        eigenvalues: values[..positive].to_vec(),
        dropped_nonpositive: take - positive,
    }
}

/// Dense route used when the caller wants an exact decomposition.
pub fn leading_eigenpairs_dense(op: &MoranOperator, p_max: usize) -> Result<MoranBasis> {
    let dense = op.to_dense()?;
    let pairs = lanczos::dense_largest_eigenpairs(&dense, p_max);
    Ok(finish_basis(pairs, p_max))
}
