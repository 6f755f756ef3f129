use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Support;
use crate::propagation::PropagationTrace;

/// Longest walk length accepted by the enumerators.
pub const MAX_WALK_LENGTH: usize = 6;
/// Cap on expanded walk prefixes per enumeration.
pub const WALK_BUDGET: usize = 1_000_000;

/// Node sequence `v_0, ..., v_k` whose consecutive pairs lie on a support.
/// Nodes may repeat.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AttentionPath(pub Vec<usize>);

impl AttentionPath {
    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn hop_distances(support: &Support, target: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; support.n()];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        for &v in &support.cols()[support.row_range(u)] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All length-`k` walks from `from` to `to` over `support`, self-loop steps
/// included when the support has them, in lexicographic order.
pub fn enumerate_walks(support: &Support, from: usize, to: usize, k: usize) -> Result<Vec<AttentionPath>> {
    let n = support.n();
    for index in [from, to] {
        if index >= n {
            return Err(Error::NodeOutOfRange { index, n });
        }
    }
    if k > MAX_WALK_LENGTH {
        return Err(Error::InvalidArgument(format!("walk length {k} above {MAX_WALK_LENGTH}")));
    }
    if k == 0 {
        return Ok(if from == to { vec![AttentionPath(vec![from])] } else { Vec::new() });
    }
    // The support is symmetric, so distances to `to` equal distances from it.
    let dist = hop_distances(support, to);
    let cols = support.cols();
    let mut out = Vec::new();
    let mut path = vec![from];
    let mut cursor = vec![support.row_range(from).start];
    let mut expanded = 0usize;
    while let Some(&v) = path.last() {
        let depth = path.len() - 1;
        if depth == k {
            if v == to {
                out.push(AttentionPath(path.clone()));
            }
            path.pop();
            cursor.pop();
            continue;
        }
        let c = cursor[depth];
        if c == support.row_range(v).end {
            path.pop();
            cursor.pop();
            continue;
        }
        cursor[depth] += 1;
        let w = cols[c];
        if dist[w] > k - depth - 1 {
            continue;
        }
        expanded += 1;
        if expanded > WALK_BUDGET {
            return Err(Error::BudgetExceeded(WALK_BUDGET));
        }
        path.push(w);
        cursor.push(support.row_range(w).start);
    }
    Ok(out)
}

/// Number of steps `t` at which both walks move `v_{t-1} -> v_t` identically.
pub fn degree_of_intersection(p: &AttentionPath, q: &AttentionPath) -> Result<usize> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let (a, b) = (p.nodes(), q.nodes());
    Ok((1..a.len()).filter(|&t| a[t - 1] == b[t - 1] && a[t] == b[t]).count())
}

/// `T^(k)_{ij}` as `gamma^(k)_i` times the sum over walks `j = v_0 -> ... -> v_k = i`
/// of `prod_l L_l[v_l, v_{l-1}]`, where `L_1..L_k` are the layers of hop `k`.
pub fn path_decompose_entry(trace: &PropagationTrace, i: usize, j: usize, k: usize) -> Result<f64> {
    let gamma = trace.hop_weights(k)?;
    let n = trace.n();
    for index in [i, j] {
        if index >= n {
            return Err(Error::NodeOutOfRange { index, n });
        }
    }
    if gamma[i] == 0.0 {
        return Ok(0.0);
    }
    let layers: Vec<&[f64]> =
        trace.hop_layers(k)?.into_iter().map(|l| trace.edge_values(l).map(|v| v.as_slice())).collect::<Result<_>>()?;
    let support = &trace.support;
    let mut total = 0.0;
    for walk in enumerate_walks(support, j, i, k)? {
        let v = walk.nodes();
        let term: f64 = layers
            .iter()
            .enumerate()
            .map(|(step, values)| {
                let e = support.find(v[step + 1], v[step]).expect("walk steps lie on the support");
                values[e]
            })
            .product();
        total += term;
    }
    Ok(gamma[i] * total)
}

/// Pairs `(p, q)` of length-`k` walks `i -> x` and `j -> x` with degree of
/// intersection at least `min_shared`.
pub fn count_intersecting_pairs(
    support: &Support,
    i: usize,
    j: usize,
    x: usize,
    k: usize,
    min_shared: usize,
) -> Result<u64> {
    let from_i = enumerate_walks(support, i, x, k)?;
    let from_j = enumerate_walks(support, j, x, k)?;
    if min_shared > k {
        return Ok(0);
    }
    if from_i.len().saturating_mul(from_j.len()) > 100 * WALK_BUDGET {
        return Err(Error::BudgetExceeded(100 * WALK_BUDGET));
    }
    let mut count = 0u64;
    for p in &from_i {
        for q in &from_j {
            if degree_of_intersection(p, q)? >= min_shared {
                count += 1;
            }
        }
    }
    Ok(count)
}
