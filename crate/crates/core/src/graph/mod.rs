//! Undirected graphs in CSR form, normalization, structural predicates,
//! homophily, synthetic generation and dataset files.

mod io;
mod norm;
mod sbm;

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use io::{load_dataset, write_dataset, DatasetMeta};
pub use norm::{sym_norm_adj, NormalizedAdjacency, Support};
pub use sbm::{gen_sbm, SbmSpec};

/// Immutable undirected graph. Adjacency is symmetric and deduplicated and
/// never stores self-loops; consumers add them through [`Support`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
}

impl Graph {
    /// Symmetrizes and deduplicates `edges`, dropping self-loops.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            for index in [u, v] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        row_ptr.push(0);
        for mut nbrs in adj {
            nbrs.sort_unstable();
            nbrs.dedup();
            col.extend(nbrs);
            row_ptr.push(col.len());
        }
        Ok(Self { n, row_ptr, col })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i).iter().filter(move |&&j| i < j).map(move |&j| (i, j))
        })
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Two-colorability over every component.
    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].unwrap();
                for &v in self.neighbors(u) {
                    match color[v] {
                        None => {
                            color[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Applies a node relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let edges: Vec<_> = self.edges().map(|(i, j)| (perm[i], perm[j])).collect();
        Graph::from_edges(self.n, &edges)
    }
}

/// True iff no two feature rows are identical (`-0.0` and `0.0` compare equal).
pub fn check_pairwise_distinct(features: &Matrix) -> bool {
    let mut seen = HashSet::with_capacity(features.rows());
    (0..features.rows()).all(|r| {
        let key: Vec<u64> = features.row(r).iter().map(|&x| (x + 0.0).to_bits()).collect();
        seen.insert(key)
    })
}

/// Class-size-adjusted homophily: the mean over classes of how much the
/// same-class edge fraction exceeds the class's share of nodes, clamped at 0.
pub fn homophily(g: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != g.n() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.n()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut class_size = vec![0usize; num_classes];
    for &l in labels {
        class_size[l] += 1;
    }
    let present = class_size.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    let mut same = vec![0usize; num_classes];
    let mut total = vec![0usize; num_classes];
    for i in 0..g.n() {
        let li = labels[i];
        for &j in g.neighbors(i) {
            total[li] += 1;
            if labels[j] == li {
                same[li] += 1;
            }
        }
    }
    let n = g.n() as f64;
    let sum: f64 = (0..num_classes)
        .filter(|&c| class_size[c] > 0)
        .map(|c| {
            let h = if total[c] == 0 { 0.0 } else { same[c] as f64 / total[c] as f64 };
            (h - class_size[c] as f64 / n).max(0.0)
        })
        .sum();
    Ok(sum / (present as f64 - 1.0))
}

/// Named train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// Few training labels (homophilic benchmarks).
    Sparse,
    /// Many training labels (heterophilic benchmarks).
    Dense,
}

/// Labeled graph with node features and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub splits: Splits,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Checks the structural invariants shared by loaded and generated data.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.features.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {n} nodes",
                self.features.rows()
            )));
        }
        if !self.features.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch(format!("{} labels for {n} nodes", self.labels.len())));
        }
        if let Some((node, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.num_classes) {
            return Err(Error::LabelOutOfRange { node, label, d_c: self.num_classes });
        }
        let mut owner = vec![false; n];
        for set in [&self.splits.train, &self.splits.val, &self.splits.test] {
            for &i in set {
                if i >= n {
                    return Err(Error::NodeOutOfRange { index: i, n });
                }
                if owner[i] {
                    return Err(Error::InvalidArgument(format!("node {i} appears in two splits")));
                }
                owner[i] = true;
            }
        }
        Ok(())
    }

    /// Split kind inferred from the training fraction (dense above 30%).
    pub fn split_kind(&self) -> SplitKind {
        if self.splits.train.len() as f64 > 0.3 * self.n() as f64 {
            SplitKind::Dense
        } else {
            SplitKind::Sparse
        }
    }

    /// Copy with every feature row divided by its L1 norm; zero rows stay zero.
    pub fn row_normalized(&self) -> Dataset {
        let mut out = self.clone();
        for r in 0..out.features.rows() {
            let row = out.features.row_mut(r);
            let norm: f64 = row.iter().map(|x| x.abs()).sum();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_examples() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(g.degrees(), vec![1, 1]);
        let g = Graph::from_edges(2, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.degrees(), vec![1, 1]);
        let g = Graph::from_edges(2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(g.degrees(), vec![1, 1]);
        assert!(!g.has_edge(0, 0));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(Graph::from_edges(0, &[]), Err(Error::EmptyGraph)));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 2)]),
            Err(Error::NodeOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn predicates() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert!(tri.is_connected());
        assert!(!tri.is_bipartite());
        let c4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert!(c4.is_bipartite());
        let two = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!two.is_connected());
    }

    #[test]
    fn distinct_rows() {
        assert!(check_pairwise_distinct(&Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])));
        assert!(!check_pairwise_distinct(&Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]])));
        assert!(check_pairwise_distinct(&Matrix::identity(3)));
        assert!(!check_pairwise_distinct(&Matrix::from_rows(&[vec![0.0], vec![-0.0]])));
    }

    #[test]
    fn homophily_extremes() {
        // 0,1 in class 0; 2,3 in class 1.
        let labels = [0, 0, 1, 1];
        let intra = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(homophily(&intra, &labels).unwrap(), 1.0);
        let cross = Graph::from_edges(4, &[(0, 2), (1, 3)]).unwrap();
        assert_eq!(homophily(&cross, &labels).unwrap(), 0.0);
        assert!(matches!(homophily(&intra, &[0, 0, 0, 0]), Err(Error::SingleClass(1))));
    }

    #[test]
    fn homophily_hand_value() {
        // Path 0-1-2-3 with labels a a b b: class 0 has endpoints (0->1 same, 1->0 same,
        // 1->2 diff) => h = 2/3; class 1 likewise. Sum of max(0, 2/3 - 1/2) over 2 classes.
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let h = homophily(&g, &[0, 0, 1, 1]).unwrap();
        assert!((h - 2.0 * (2.0 / 3.0 - 0.5)).abs() < 1e-15);
    }
}
