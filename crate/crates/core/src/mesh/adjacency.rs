use nalgebra::DMatrix;

use super::Mesh;

/// Symmetric 0/1 neighborhood matrix of the mesh graph in compressed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    size: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Adjacency {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut edges = Vec::with_capacity(mesh.num_triangles() * 3);
        for t in mesh.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        Self::from_edges(mesh.num_vertices(), &edges)
    }

    /// Builds from undirected edges; duplicates and self-loops are dropped.
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Self {
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(a, b) in edges {
            assert!(a < size && b < size, "edge ({a}, {b}) out of range for size {size}");
            if a != b {
                directed.push((a, b));
                directed.push((b, a));
            }
        }
        directed.sort_unstable();
        directed.dedup();
        let mut row_ptr = vec![0usize; size + 1];
        for &(a, _) in &directed {
            row_ptr[a + 1] += 1;
        }
        for i in 0..size {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = directed.into_iter().map(|(_, b)| b).collect();
        Adjacency {
            size,
            row_ptr,
            col_idx,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.degree(i) as f64).collect()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    /// Stored entries (twice the edge count).
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Undirected edges `(i, j)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    /// `y = N x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.size) {
            *yi = self.neighbors(i).iter().map(|&j| x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.size, self.size);
        for i in 0..self.size {
            for &j in self.neighbors(i) {
                d[(i, j)] = 1.0;
            }
        }
        d
    }

    /// True when every vertex can reach every other.
    pub fn is_connected(&self) -> bool {
        if self.size == 0 {
            return true;
        }
        let mut seen = vec![false; self.size];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.size
    }
}
