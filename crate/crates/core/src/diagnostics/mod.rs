//! Cumulative attention matrices, the smoothness score, attention-path
//! decomposition, over-smoothing probes and per-layer attention statistics.

mod paths;
mod probes;
mod stats;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::propagation::PropagationTrace;
use crate::tensor::Matrix;

pub use paths::{
    count_intersecting_pairs, degree_of_intersection, enumerate_walks, path_decompose_entry, AttentionPath,
    MAX_WALK_LENGTH, WALK_BUDGET,
};
pub use probes::{
    complete_graph_trace, unsmoothing_construct, v2os_probe, SMOOTH_THRESHOLD, ProbeReport, Resistance, UnsmoothingBranch, Unsmoothing, Witness};
pub use stats::{attn_stats, write_csv_with_meta, AlphaStats, AttnStats, GammaStats};

/// Default largest `n` for which dense `T` is materialized.
pub const DEFAULT_N_CAP: usize = 3000;

/// Dense `T^(k)` of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeAttention {
    pub k: usize,
    pub matrix: Matrix,
}

fn check_cap(trace: &PropagationTrace, n_cap: usize) -> Result<()> {
    if trace.n() > n_cap {
        return Err(Error::OverCap { n: trace.n(), cap: n_cap });
    }
    Ok(())
}

/// Product of the edge-attention layers composed into hop `k`, without `Gamma`.
pub fn layer_product(trace: &PropagationTrace, k: usize, n_cap: usize) -> Result<Matrix> {
    check_cap(trace, n_cap)?;
    let layers = trace.hop_layers(k)?;
    let mut m = Matrix::identity(trace.n());
    for l in layers {
        m = trace.support.spmm_dense(trace.edge_values(l)?, &m);
    }
    Ok(m)
}

fn scale_rows(mut m: Matrix, gamma: &[f64]) -> Matrix {
    for (r, &g) in gamma.iter().enumerate() {
        m.row_mut(r).iter_mut().for_each(|x| *x *= g);
    }
    m
}

/// `T^(k) = Gamma^(k)` times the ordered product of the layers composed into
/// hop `k` (the last `k` layers for fagcn, otherwise layers `1..=k`).
pub fn compute_t(trace: &PropagationTrace, k: usize, n_cap: usize) -> Result<CumulativeAttention> {
    let product = layer_product(trace, k, n_cap)?;
    Ok(CumulativeAttention { k, matrix: scale_rows(product, trace.hop_weights(k)?) })
}

/// `T^(1..=k_max)`, built incrementally.
pub fn compute_t_series(trace: &PropagationTrace, n_cap: usize) -> Result<Vec<CumulativeAttention>> {
    check_cap(trace, n_cap)?;
    let n = trace.n();
    let mut out = Vec::with_capacity(trace.k_max);
    let mut m = Matrix::identity(n);
    for k in 1..=trace.k_max {
        m = match trace.orientation {
            crate::propagation::HopOrientation::Forward => trace.support.spmm_dense(trace.edge_values(k)?, &m),
            crate::propagation::HopOrientation::Reversed => {
                trace.support.dense_spmm(&m, trace.edge_values(trace.k_max - k + 1)?)
            }
        };
        out.push(CumulativeAttention { k, matrix: scale_rows(m.clone(), trace.hop_weights(k)?) });
    }
    Ok(out)
}

/// Controls the pair sum of [`smoothness_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessOptions {
    /// Above this many rows a random subset of pairs is used.
    pub exact_max_n: usize,
    pub sampled_pairs: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SmoothnessOptions {
    fn default() -> Self {
        Self { exact_max_n: 1000, sampled_pairs: 200_000, seed: 0, exec: Exec::default() }
    }
}

/// Smoothness value and whether it came from a pair sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Smoothness {
    pub value: f64,
    pub estimated: bool,
}

fn normalized_rows(t: &Matrix) -> Matrix {
    let mut m = t.clone();
    for r in 0..m.rows() {
        let norm: f64 = m.row(r).iter().map(|x| x.abs()).sum();
        if norm > 0.0 {
            m.row_mut(r).iter_mut().for_each(|x| *x /= norm);
        }
    }
    m
}

/// Rows have unit L1 norm, so the distance is at most 2; the clamp only
/// removes roundoff.
fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>().min(2.0)
}

/// Mean over unordered row pairs of the L1 distance between L1-normalized
/// rows; zero rows stay zero. Exact for every `n`.
pub fn smoothness(t: &Matrix) -> Result<f64> {
    let opts = SmoothnessOptions { exact_max_n: usize::MAX, ..Default::default() };
    Ok(smoothness_with(t, &opts)?.value)
}

pub fn smoothness_with(t: &Matrix, opts: &SmoothnessOptions) -> Result<Smoothness> {
    let n = t.rows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite { op: "smoothness" });
    }
    let m = normalized_rows(t);
    let total_pairs = n * (n - 1) / 2;
    if n <= opts.exact_max_n || opts.sampled_pairs >= total_pairs {
        let sum = opts.exec.sum_range(n, |i| (i + 1..n).map(|j| l1(m.row(i), m.row(j))).sum());
        return Ok(Smoothness { value: sum / total_pairs as f64, estimated: false });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks = sample(&mut rng, total_pairs, opts.sampled_pairs).into_vec();
    let sum = opts.exec.sum_range(picks.len(), |p| {
        let (i, j) = unrank_pair(picks[p], n);
        l1(m.row(i), m.row(j))
    });
    Ok(Smoothness { value: sum / picks.len() as f64, estimated: true })
}

/// Maps `0..n(n-1)/2` onto pairs `i < j` in row-major order.
fn unrank_pair(mut r: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while r >= n - 1 - i {
        r -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + r)
}

/// `S(T^(k))` for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessSeries {
    pub model: String,
    pub values: Vec<f64>,
    pub estimated: bool,
}

impl SmoothnessSeries {
    /// Value at hop `k` (1-based).
    pub fn at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }
}

pub fn smoothness_series(trace: &PropagationTrace, n_cap: usize, opts: &SmoothnessOptions) -> Result<SmoothnessSeries> {
    let mut values = Vec::with_capacity(trace.k_max);
    let mut estimated = false;
    for t in compute_t_series(trace, n_cap)? {
        let s = smoothness_with(&t.matrix, opts)?;
        estimated |= s.estimated;
        values.push(s.value);
    }
    Ok(SmoothnessSeries { model: trace.kind.to_string(), values, estimated })
}
