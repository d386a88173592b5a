use nalgebra::DMatrix;

use super::{Mesh, Point2};
use crate::error::{PicarError, Result};

/// Barycentric weights down to this value still count as inside.
pub const INSIDE_TOL: f64 = 1e-9;

/// Containing triangle and barycentric weights of a located point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub weights: [f64; 3],
}

fn raw_weights(mesh: &Mesh, t: usize, p: &Point2) -> [f64; 3] {
    let tri = mesh.triangles()[t];
    let v = mesh.vertices();
    let cross = |a: &Point2, b: &Point2, c: &Point2| {
        (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
    };
    let area = cross(&v[tri[0]], &v[tri[1]], &v[tri[2]]);
    let mut w = [0.0; 3];
    for (k, wk) in w.iter_mut().enumerate() {
        *wk = cross(&v[tri[(k + 1) % 3]], &v[tri[(k + 2) % 3]], p) / area;
    }
    w
}

fn finalize(w: [f64; 3]) -> [f64; 3] {
    let clamped = w.map(|x| x.max(0.0));
    let s: f64 = clamped.iter().sum();
    clamped.map(|x| x / s)
}

/// Point-location cursor. Holds the last hit so consecutive nearby queries
/// walk only a few triangles; each thread should own its own cursor.
#[derive(Clone, Debug)]
pub struct Locator<'a> {
    mesh: &'a Mesh,
    last: usize,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Locator { mesh, last: 0 }
    }

    pub fn locate(&mut self, p: Point2) -> Result<Location> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(PicarError::OutOfMesh { x: p.x, y: p.y });
        }
        let found = self.walk(&p).or_else(|| self.brute(&p));
        let Some(t) = found else {
            return Err(PicarError::OutOfMesh { x: p.x, y: p.y });
        };
        let t = self.lowest_containing(t, &p);
        self.last = t;
        Ok(Location {
            triangle: t,
            weights: finalize(raw_weights(self.mesh, t, &p)),
        })
    }

    fn walk(&self, p: &Point2) -> Option<usize> {
        let mesh = self.mesh;
        if mesh.num_triangles() == 0 {
            return None;
        }
        let mut t = self.last.min(mesh.num_triangles() - 1);
        for _ in 0..=mesh.num_triangles() {
            let w = raw_weights(mesh, t, p);
            let (k, wmin) = w
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("three weights");
            if wmin >= -INSIDE_TOL {
                return Some(t);
            }
            t = mesh.neighbors()[t][k]?;
        }
        None
    }

    fn brute(&self, p: &Point2) -> Option<usize> {
        (0..self.mesh.num_triangles())
            .find(|&t| raw_weights(self.mesh, t, p).iter().all(|&w| w >= -INSIDE_TOL))
    }

    /// Among all triangles containing `p` (points on shared edges or
    /// vertices), returns the lowest index.
    fn lowest_containing(&self, start: usize, p: &Point2) -> usize {
        let w = raw_weights(self.mesh, start, p);
        if w.iter().all(|&x| x > INSIDE_TOL) {
            return start;
        }
        let mut best = start;
        let mut seen = vec![start];
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            let w = raw_weights(self.mesh, t, p);
            for k in 0..3 {
                if w[k] > INSIDE_TOL {
                    continue;
                }
                if let Some(nb) = self.mesh.neighbors()[t][k] {
                    if seen.contains(&nb) {
                        continue;
                    }
                    seen.push(nb);
                    if raw_weights(self.mesh, nb, p).iter().all(|&x| x >= -INSIDE_TOL) {
                        best = best.min(nb);
                        stack.push(nb);
                    }
                }
            }
        }
        best
    }
}

/// Sparse `n x m` piecewise-linear interpolation matrix with three entries
/// per row (some may be zero for points on edges or vertices).
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    ncols: usize,
    cols: Vec<[usize; 3]>,
    weights: Vec<[f64; 3]>,
}

impl Projector {
    pub fn build(mesh: &Mesh, locations: &[Point2]) -> Result<Self> {
        let mut locator = Locator::new(mesh);
        let mut cols = Vec::with_capacity(locations.len());
        let mut weights = Vec::with_capacity(locations.len());
        for (row, p) in locations.iter().enumerate() {
            let loc = locator.locate(*p).map_err(|_| PicarError::OutOfMeshRow {
                row,
                x: p.x,
                y: p.y,
            })?;
            cols.push(mesh.triangles()[loc.triangle]);
            weights.push(loc.weights);
        }
        Ok(Projector {
            ncols: mesh.num_vertices(),
            cols,
            weights,
        })
    }

    pub fn nrows(&self) -> usize {
        self.cols.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> ([usize; 3], [f64; 3]) {
        (self.cols[i], self.weights[i])
    }

    pub fn nnz_in_row(&self, i: usize) -> usize {
        self.weights[i].iter().filter(|&&w| w != 0.0).count()
    }

    pub fn matvec(&self, node_values: &[f64]) -> Vec<f64> {
        assert_eq!(node_values.len(), self.ncols, "projector/node dimension mismatch");
        self.cols
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w[0] * node_values[c[0]] + w[1] * node_values[c[1]] + w[2] * node_values[c[2]])
            .collect()
    }

    /// `A * B` for a dense `m x p` matrix `B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols, "projector/basis dimension mismatch");
        let n = self.nrows();
        let p = b.ncols();
        DMatrix::from_fn(n, p, |i, j| {
            let (c, w) = (&self.cols[i], &self.weights[i]);
            w[0] * b[(c[0], j)] + w[1] * b[(c[1], j)] + w[2] * b[(c[2], j)]
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            for k in 0..3 {
                d[(i, self.cols[i][k])] += self.weights[i][k];
            }
        }
        d
    }
}
