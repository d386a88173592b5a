use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::MoranBasis;
use crate::error::{PicarError, Result};
use crate::mesh::Adjacency;

/// Prior precision on the mesh-node field before reduction to the basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rho")]
pub enum PrecisionKind {
    Identity,
    Icar,
    Car(f64),
}

impl PrecisionKind {
    pub fn label(&self) -> &'static str {
        match self {
            PrecisionKind::Identity => "Ind",
            PrecisionKind::Icar => "ICAR",
            PrecisionKind::Car(_) => "CAR",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PrecisionKind::Car(rho) if !(rho > 0.0 && rho < 1.0) => Err(PicarError::InvalidArgument(
                format!("CAR correlation must lie in (0, 1), got {rho}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Sparse symmetric matrix: a diagonal plus off-diagonal entries in
/// compressed rows (both triangles stored).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    pub diag: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSymmetric {
    /// `diag(d) - scale * N`.
    fn from_adjacency(adjacency: &Adjacency, diag: Vec<f64>, scale: f64) -> Self {
        let mut row_ptr = Vec::with_capacity(adjacency.size() + 1);
        let mut col_idx = Vec::with_capacity(adjacency.nnz());
        row_ptr.push(0);
        for i in 0..adjacency.size() {
            col_idx.extend_from_slice(adjacency.neighbors(i));
            row_ptr.push(col_idx.len());
        }
        let values = vec![-scale; col_idx.len()];
        SparseSymmetric {
            diag,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.diag[i] + self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum::<f64>()
    }

    /// `Q * B` for dense `B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.size(), b.ncols());
        for c in 0..b.ncols() {
            for i in 0..self.size() {
                let mut acc = self.diag[i] * b[(i, c)];
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * b[(self.col_idx[k], c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[k])] += self.values[k];
            }
        }
        d
    }
}

/// `K = M'QM` and its Cholesky factor.
#[derive(Clone, Debug)]
pub struct PrecisionKernel {
    pub kind: PrecisionKind,
    pub q: SparseSymmetric,
    pub k: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
}

impl PrecisionKernel {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// Lower-triangular factor `L` with `K = L L'`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `x' K x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        quad_form(&self.k, x)
    }

    /// A kernel `K = I_p` not tied to any mesh, for bases other than Moran's.
    pub fn identity(p: usize) -> Self {
        let k = DMatrix::identity(p, p);
        PrecisionKernel {
            kind: PrecisionKind::Identity,
            q: SparseSymmetric {
                diag: vec![1.0; p],
                row_ptr: vec![0; p + 1],
                col_idx: Vec::new(),
                values: Vec::new(),
            },
            chol: Cholesky::new(k.clone()).expect("identity is SPD"),
            k,
        }
    }
}

pub(crate) fn quad_form(k: &DMatrix<f64>, x: &[f64]) -> f64 {
    let p = x.len();
    let mut total = 0.0;
    for j in 0..p {
        let col = k.column(j);
        let mut s = 0.0;
        for i in 0..p {
            s += col[i] * x[i];
        }
        total += x[j] * s;
    }
    total
}

pub fn precision_kernel(
    kind: PrecisionKind,
    adjacency: &Adjacency,
    basis: &MoranBasis,
) -> Result<PrecisionKernel> {
    kind.validate()?;
    let m = adjacency.size();
    if basis.num_nodes() != m {
        return Err(PicarError::DimensionMismatch(format!(
            "basis has {} rows, mesh has {m} nodes",
            basis.num_nodes()
        )));
    }
    let degrees = adjacency.degrees();
    let q = match kind {
        PrecisionKind::Identity => SparseSymmetric::from_adjacency(adjacency, vec![1.0; m], 0.0),
        PrecisionKind::Icar => SparseSymmetric::from_adjacency(adjacency, degrees, 1.0),
        PrecisionKind::Car(rho) => SparseSymmetric::from_adjacency(adjacency, degrees, rho),
    };
    let mm = basis.vectors();
    let p = mm.ncols();
    let k = match kind {
        PrecisionKind::Identity => {
            let gram = mm.tr_mul(mm);
            let err = (gram - DMatrix::<f64>::identity(p, p)).norm();
            if err > 1e-8 {
                return Err(PicarError::SingularKernel(format!(
                    "basis is not orthonormal (|M'M - I| = {err:.3e})"
                )));
            }
            DMatrix::identity(p, p)
        }
        _ => {
            let qm = q.mul_dense(mm);
            let k = mm.tr_mul(&qm);
            (&k + k.transpose()) * 0.5
        }
    };
    let chol = Cholesky::new(k.clone()).ok_or_else(|| {
        PicarError::SingularKernel(format!(
            "{} kernel of rank {p} is not positive definite",
            kind.label()
        ))
    })?;
    Ok(PrecisionKernel { kind, q, k, chol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{leading_eigenpairs, moran_operator};
    use crate::mesh::{build_mesh, Point2};

    fn setup(m: usize, p: usize) -> (Adjacency, MoranBasis) {
        let locs: Vec<_> = (0..40)
            .map(|i| Point2::new((i % 8) as f64 / 7.0, (i / 8) as f64 / 4.0))
            .collect();
        let mesh = build_mesh(&locs, m, 0.1, 5).unwrap();
        let n = mesh.adjacency();
        let (basis, _) = leading_eigenpairs(&moran_operator(&n), p, 1).unwrap();
        (n, basis)
    }

    #[test]
    fn row_sums_follow_kind() {
        let (n, basis) = setup(200, 20);
        let icar = precision_kernel(PrecisionKind::Icar, &n, &basis).unwrap();
        let car = precision_kernel(PrecisionKind::Car(0.5), &n, &basis).unwrap();
        for i in 0..n.size() {
            assert_eq!(icar.q.row_sum(i), 0.0);
            assert!((car.q.row_sum(i) - 0.5 * n.degree(i) as f64).abs() < 1e-12);
        }
        assert_eq!(icar.q.to_dense(), icar.q.to_dense().transpose());
    }

    #[test]
    fn icar_kernel_matches_dense_product() {
        let (n, basis) = setup(200, 20);
        let icar = precision_kernel(PrecisionKind::Icar, &n, &basis).unwrap();
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(n.degrees())) - n.to_dense();
        let oracle = basis.vectors().transpose() * q * basis.vectors();
        assert!((&icar.k - oracle).amax() < 1e-10);
        let l = icar.factor();
        assert!((&l * l.transpose() - &icar.k).amax() < 1e-10);
    }

    #[test]
    fn identity_kernel_is_exact() {
        let (n, basis) = setup(150, 10);
        let id = precision_kernel(PrecisionKind::Identity, &n, &basis).unwrap();
        assert_eq!(id.k, DMatrix::identity(10, 10));
    }

    #[test]
    fn car_tends_to_icar() {
        let (n, basis) = setup(200, 20);
        let icar = precision_kernel(PrecisionKind::Icar, &n, &basis).unwrap();
        let car = precision_kernel(PrecisionKind::Car(1.0 - 1e-6), &n, &basis).unwrap();
        assert!((car.k - icar.k).amax() <= 1e-4);
    }

    #[test]
    fn invalid_rho_rejected() {
        let (n, basis) = setup(60, 5);
        for rho in [0.0, 1.0, -0.3, f64::NAN] {
            assert!(precision_kernel(PrecisionKind::Car(rho), &n, &basis).is_err());
        }
    }

    #[test]
    fn quad_form_matches_dense() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!((quad_form(&k, &[1.0, -2.0]) - (2.0 - 2.0 + 4.0)).abs() < 1e-15);
    }
}
