//! Sparse adjacency in CSR form, GCN normalisation and sparse-dense products.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f32>,
}

impl SparseAdjacency {
    /// Builds from `(i, j)` pairs with one weight per pair. Entries are kept
    /// as given (duplicates add up in products); order is normalised to CSR.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], values: &[f32]) -> Result<Self> {
        if edges.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} edges but {} weights",
                edges.len(),
                values.len()
            )));
        }
        let mut triplets = Vec::with_capacity(edges.len());
        for (k, (&(i, j), &v)) in edges.iter().zip(values).enumerate() {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge {k} = ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(k));
            }
            triplets.push((i, j, v));
        }
        Ok(Self::from_triplets(n, triplets))
    }

    /// Unit-weight symmetric adjacency from an undirected pair list.
    /// Duplicate pairs (in either direction) collapse to one edge.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut both = Vec::with_capacity(pairs.len() * 2);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            both.push((i, j));
            if i != j {
                both.push((j, i));
            }
        }
        both.sort_unstable();
        both.dedup();
        let values = vec![1.0; both.len()];
        Self::from_edges(n, &both, &values)
    }

    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f32)>) -> Self {
        // stable so that "first occurrence" is well defined for callers that dedupe
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &triplets {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = triplets.iter().map(|&(_, j, _)| j as u32).collect();
        let values = triplets.iter().map(|&(_, _, v)| v).collect();
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k] as usize, self.values[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k] as usize, self.values[k]))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.edges() {
            m.set(i, j, m.get(i, j) + v);
        }
        m
    }

    pub fn is_symmetric(&self, tol: f32) -> bool {
        let dense = self.to_dense();
        (0..self.n).all(|i| (0..self.n).all(|j| (dense.get(i, j) - dense.get(j, i)).abs() <= tol))
    }

    /// `Â = D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
    ///
    /// Input self-loops and duplicate pairs are dropped before the identity
    /// is added, so every node gets exactly one unit self-loop.
    pub fn normalize(&self) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("empty graph".into()));
        }
        if let Some(k) = self.values.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!("negative edge weight at entry {k}")));
        }
        let mut triplets: Vec<(usize, usize, f32)> = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            triplets.push((i, i, 1.0));
            let mut last = None;
            for (j, v) in self.row(i) {
                if j == i || last == Some(j) {
                    continue;
                }
                last = Some(j);
                triplets.push((i, j, v));
            }
        }
        let mut degree = vec![0.0f64; self.n];
        for &(i, _, v) in &triplets {
            degree[i] += v as f64;
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        for t in &mut triplets {
            t.2 = (t.2 as f64 * inv_sqrt[t.0] * inv_sqrt[t.1]) as f32;
        }
        Ok(Self::from_triplets(self.n, triplets))
    }

    /// Row-normalised neighbour averaging `D⁻¹A` without self-loops (the
    /// mean aggregator). Isolated nodes get an empty row.
    pub fn mean_aggregator(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let mut neigh: Vec<(usize, f32)> = self.row(i).filter(|&(j, _)| j != i).collect();
            neigh.dedup_by_key(|e| e.0);
            let total: f64 = neigh.iter().map(|&(_, v)| v as f64).sum();
            if total > 0.0 {
                for (j, v) in neigh {
                    triplets.push((i, j, (v as f64 / total) as f32));
                }
            }
        }
        Self::from_triplets(self.n, triplets)
    }

    /// Sparse-dense product `A · H`.
    pub fn spmm(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.rows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "adjacency over {} nodes times {}x{} matrix",
                self.n,
                h.rows(),
                h.cols()
            )));
        }
        let cols = h.cols();
        let mut out = vec![0.0f32; self.n * cols];
        for i in 0..self.n {
            let out_row = &mut out[i * cols..(i + 1) * cols];
            for (j, v) in self.row(i) {
                for (o, &x) in out_row.iter_mut().zip(h.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(DenseMatrix::from_raw(self.n, cols, out))
    }

    /// `Aᵀ · H`.
    pub fn spmm_transpose(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.rows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "adjacencyᵀ over {} nodes times {}x{} matrix",
                self.n,
                h.rows(),
                h.cols()
            )));
        }
        let cols = h.cols();
        let mut out = vec![0.0f32; self.n * cols];
        for i in 0..self.n {
            let src = h.row(i);
            for (j, v) in self.row(i) {
                let out_row = &mut out[j * cols..(j + 1) * cols];
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(DenseMatrix::from_raw(self.n, cols, out))
    }
}

/// Free-function form of [`SparseAdjacency::normalize`].
pub fn normalize_adjacency(a: &SparseAdjacency) -> Result<SparseAdjacency> {
    a.normalize()
}

/// Free-function form of [`SparseAdjacency::spmm`].
pub fn spmm(a: &SparseAdjacency, h: &DenseMatrix) -> Result<DenseMatrix> {
    a.spmm(h)
}
