//! Thick-restart Lanczos with full reorthogonalization for the algebraically
//! largest eigenpairs of a symmetric operator.
//!
//! Each cycle extends an orthonormal basis `V` to `ncv` columns, forms the
//! projected matrix `V' A V` from stored products `A V`, and performs a
//! Rayleigh–Ritz step. On restart the leading Ritz vectors are kept and the
//! Krylov space is continued from the last residual direction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PicarError, Result};

/// A real symmetric linear map applied through matrix-vector products.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y[..n].fill(0.0);
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            for (yi, aij) in y.iter_mut().zip(col.iter()) {
                *yi += aij * xj;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the largest Ritz value magnitude.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov basis size; `None` picks `max(2k + 20, k + 30)` capped at `n`.
    pub ncv: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-12,
            max_restarts: 300,
            ncv: None,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs sorted by nonincreasing eigenvalue; vectors are columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub restarts: usize,
    pub max_residual: f64,
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    v / norm
}

/// Removes the components of `w` along the first `j` columns of `v`, twice.
fn orthogonalize(v: &DMatrix<f64>, j: usize, w: &mut DVector<f64>) {
    if j == 0 {
        return;
    }
    let basis = v.columns(0, j);
    for _ in 0..2 {
        let c = basis.tr_mul(w);
        w.gemv(-1.0, &basis, &c, 1.0);
    }
}

/// Computes the `k` algebraically largest eigenpairs of `op`.
pub fn largest_eigenpairs<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    opts: &LanczosOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || k >= n {
        return Err(PicarError::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let ncv = opts
        .ncv
        .unwrap_or_else(|| (2 * k + 20).max(k + 30))
        .clamp(k + 1, n);
    let keep = (k + (ncv - k) / 2).min(ncv - 1).max(k);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DMatrix::<f64>::zeros(n, ncv);
    let mut av = DMatrix::<f64>::zeros(n, ncv);
    let mut h = DMatrix::<f64>::zeros(ncv, ncv);
    let mut f = random_unit(n, &mut rng);
    let mut w = vec![0.0; n];
    let mut j = 0usize;
    let mut scale = 0.0f64;
    let mut worst = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        while j < ncv {
            let mut beta = f.norm();
            if beta <= 1e-12 * scale.max(1e-300) || !beta.is_finite() {
                // Invariant subspace reached: continue with a fresh direction.
                let mut attempts = 0;
                loop {
                    f = random_unit(n, &mut rng);
                    orthogonalize(&v, j, &mut f);
                    beta = f.norm();
                    attempts += 1;
                    if beta > 1e-8 || attempts > 10 {
                        break;
                    }
                }
            }
            let vj = &f / beta;
            v.set_column(j, &vj);
            op.apply(vj.as_slice(), &mut w);
            let wv = DVector::from_column_slice(&w);
            scale = scale.max(wv.norm());
            av.set_column(j, &wv);
            let hj = v.columns(0, j + 1).tr_mul(&wv);
            for i in 0..=j {
                h[(i, j)] = hj[i];
                h[(j, i)] = hj[i];
            }
            f = wv;
            orthogonalize(&v, j + 1, &mut f);
            j += 1;
        }

        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..ncv).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let ritz_scale = eig.eigenvalues.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let take = if ncv == n { k } else { keep };
        let u = DMatrix::from_fn(ncv, take, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = &v * &u;
        let ay = &av * &u;

        worst = 0.0;
        for c in 0..k {
            let r = (ay.column(c) - y.column(c) * theta[c]).norm();
            worst = worst.max(r);
        }
        if worst <= opts.tol * ritz_scale.max(1.0) || ncv == n {
            return Ok(EigenPairs {
                values: theta[..k].to_vec(),
                vectors: y.columns(0, k).into_owned(),
                restarts: restart,
                max_residual: worst,
            });
        }

        // Thick restart: retain the leading Ritz vectors.
        v.columns_mut(0, keep).copy_from(&y);
        av.columns_mut(0, keep).copy_from(&ay);
        let yt_ay = y.tr_mul(&ay);
        h.fill(0.0);
        for r in 0..keep {
            for c in 0..keep {
                h[(r, c)] = 0.5 * (yt_ay[(r, c)] + yt_ay[(c, r)]);
            }
        }
        j = keep;
        orthogonalize(&v, j, &mut f);
    }
    Err(PicarError::EigensolverFailure {
        restarts: opts.max_restarts,
        residual: worst,
    })
}

/// Largest `k` eigenpairs by full dense decomposition.
pub fn dense_largest_eigenpairs(a: &DMatrix<f64>, k: usize) -> EigenPairs {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let k = k.min(a.nrows());
    EigenPairs {
        values: order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: DMatrix::from_fn(a.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]),
        restarts: 0,
        max_residual: 0.0,
    }
}
