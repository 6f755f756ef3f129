use std::sync::Arc;

use super::Graph;
use crate::tensor::Matrix;

/// Fixed CSR layout of directed support entries, optionally with one
/// self-loop per row. Edge-valued quantities (attention coefficients,
/// normalized adjacency) are vectors aligned to this layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    n: usize,
    self_loops: bool,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    row_of: Vec<usize>,
    degree: Vec<usize>,
}

impl Support {
    pub fn new(g: &Graph, self_loops: bool) -> Self {
        let n = g.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::with_capacity(2 * g.num_edges() + if self_loops { n } else { 0 });
        let mut row_of = Vec::with_capacity(col.capacity());
        row_ptr.push(0);
        for i in 0..n {
            let nbrs = g.neighbors(i);
            let split = nbrs.partition_point(|&j| j < i);
            col.extend_from_slice(&nbrs[..split]);
            if self_loops {
                col.push(i);
            }
            col.extend_from_slice(&nbrs[split..]);
            row_of.resize(col.len(), i);
            row_ptr.push(col.len());
        }
        Self { n, self_loops, row_ptr, col, row_of, degree: g.degrees() }
    }

    pub fn shared(g: &Graph, self_loops: bool) -> Arc<Self> {
        Arc::new(Self::new(g, self_loops))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of directed entries.
    pub fn len(&self) -> usize {
        self.col.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col.is_empty()
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.col
    }

    /// Source row of each entry.
    pub fn rows(&self) -> &[usize] {
        &self.row_of
    }

    /// `(row, col)` of entry `e`.
    #[inline]
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        (self.row_of[e], self.col[e])
    }

    /// Graph degree `d_i` (self-loops never counted).
    pub fn graph_degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    /// Entry index of `(i, j)`, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col[r.clone()].binary_search(&j).ok().map(|p| r.start + p)
    }

    /// Dense `n x n` matrix holding `values` on this layout.
    pub fn densify(&self, values: &[f64]) -> Matrix {
        assert_eq!(values.len(), self.len());
        let mut m = Matrix::zeros(self.n, self.n);
        for (e, &v) in values.iter().enumerate() {
            let (i, j) = self.endpoints(e);
            m.set(i, j, v);
        }
        m
    }

    /// `out = A * dense` where `A` holds `values` on this layout.
    pub fn spmm_dense(&self, values: &[f64], dense: &Matrix) -> Matrix {
        assert_eq!(dense.rows(), self.n);
        let d = dense.cols();
        let mut out = Matrix::zeros(self.n, d);
        for i in 0..self.n {
            let orow = out.row_mut(i);
            for e in self.row_range(i) {
                let v = values[e];
                for (o, &x) in orow.iter_mut().zip(dense.row(self.col[e])) {
                    *o += v * x;
                }
            }
        }
        out
    }

    /// `out = dense * A` where `A` holds `values` on this layout.
    pub fn dense_spmm(&self, dense: &Matrix, values: &[f64]) -> Matrix {
        assert_eq!(dense.cols(), self.n);
        let mut out = Matrix::zeros(dense.rows(), self.n);
        for r in 0..dense.rows() {
            let src = dense.row(r);
            let orow = out.row_mut(r);
            for (e, &v) in values.iter().enumerate() {
                let (l, j) = self.endpoints(e);
                orow[j] += src[l] * v;
            }
        }
        out
    }
}

/// Symmetrically normalized adjacency with self-loops on its support.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub support: Arc<Support>,
    pub values: Arc<Vec<f64>>,
}

impl NormalizedAdjacency {
    pub fn to_dense(&self) -> Matrix {
        self.support.densify(&self.values)
    }
}

/// `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}`.
pub fn sym_norm_adj(g: &Graph) -> NormalizedAdjacency {
    let support = Support::shared(g, true);
    let values = (0..support.len())
        .map(|e| {
            let (i, j) = support.endpoints(e);
            let (a, b) = (i.min(j), i.max(j));
            let da = (g.degree(a) + 1) as f64;
            let db = (g.degree(b) + 1) as f64;
            1.0 / (da * db).sqrt()
        })
        .collect();
    NormalizedAdjacency { support, values: Arc::new(values) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_path() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let a = sym_norm_adj(&g).to_dense();
        assert_eq!(a, Matrix::filled(2, 2, 0.5));
    }

    #[test]
    fn isolated_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(sym_norm_adj(&g).to_dense(), Matrix::identity(1));
    }

    #[test]
    fn triangle() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let adj = sym_norm_adj(&g);
        assert_eq!(adj.values.len(), 9);
        for &v in adj.values.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-16);
        }
    }

    #[test]
    fn layout_sorted_with_self_loop() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = Support::new(&g, true);
        assert_eq!(s.cols(), &[0, 1, 0, 1, 2, 1, 2]);
        assert_eq!(s.find(1, 2), Some(4));
        assert_eq!(s.find(0, 2), None);
        let s = Support::new(&g, false);
        assert_eq!(s.cols(), &[1, 0, 2, 1]);
    }

    #[test]
    fn sparse_dense_products_match_dense() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let s = Support::new(&g, true);
        let vals: Vec<f64> = (0..s.len()).map(|e| (e as f64 * 0.37).sin()).collect();
        let a = s.densify(&vals);
        let x = Matrix::from_vec(4, 4, (0..16).map(|i| i as f64 - 3.5).collect()).unwrap();
        assert!(s.spmm_dense(&vals, &x).max_abs_diff(&a.matmul(&x).unwrap()) < 1e-14);
        assert!(s.dense_spmm(&x, &vals).max_abs_diff(&x.matmul(&a).unwrap()) < 1e-14);
    }
}
