use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{sym_norm_adj, Graph, NormalizedAdjacency, Support};
use crate::tensor::{Tape, Unary, Var};

const RESCALE_EPS: f64 = 1e-6;

/// `ln(lambda / k + 1 + 1e-6)`: positive for every `k`, shrinking with depth.
pub fn rescale_factor(k: usize, lambda: f64) -> f64 {
    (lambda / k as f64 + 1.0 + RESCALE_EPS).ln()
}

pub fn rescale_z(tape: &mut Tape, z: Var, k: usize, lambda: f64) -> Result<Var> {
    if k == 0 {
        return Err(Error::InvalidArgument("rescaling is defined for k >= 1".into()));
    }
    tape.scale(z, rescale_factor(k, lambda))
}

/// Row-softmax attention over the support from scores
/// `w^T act([g_i | g_j])`. Returns `(scores, alpha)`.
///
/// The target half `w_0^T act(g_i)` is constant along row `i`, so the softmax
/// is taken over the source half alone. This is the same value, and it keeps
/// the target half exactly out of the gradient instead of leaving rounding
/// residue there.
pub fn gatv2_edge_attention(
    tape: &mut Tape,
    g: Var,
    w_edge: Var,
    activation: Unary,
    support: &Arc<Support>,
) -> Result<(Var, Var)> {
    let s = tape.unary(activation, g)?;
    let p = tape.matmul(s, w_edge)?;
    let score = tape.edge_pair_score(p, support)?;
    let rows = tape.value(p).rows();
    let source_only = Arc::new((0..rows).flat_map(|_| [0.0, 1.0]).collect());
    let source = tape.mul_const(p, source_only)?;
    let shifted = tape.edge_pair_score(source, support)?;
    let alpha = tape.segment_softmax(shifted, support)?;
    Ok((score, alpha))
}

/// `1 / sqrt(d_i d_j)` per entry of a support without self-loops.
pub fn fagcn_edge_scale(support: &Support) -> Result<Arc<Vec<f64>>> {
    if let Some(i) = (0..support.n()).find(|&i| support.graph_degree(i) == 0) {
        return Err(Error::IsolatedNode(i));
    }
    Ok(Arc::new(
        (0..support.len())
            .map(|e| {
                let (i, j) = support.endpoints(e);
                let (a, b) = (i.min(j), i.max(j));
                1.0 / ((support.graph_degree(a) * support.graph_degree(b)) as f64).sqrt()
            })
            .collect(),
    ))
}

/// Signed attention `tanh(w^T [z_i | z_j]) / sqrt(d_i d_j)`. Returns
/// `(tanh scores, alpha)`.
pub fn fagcn_edge_attention(
    tape: &mut Tape,
    z: Var,
    w_edge: Var,
    support: &Arc<Support>,
    scale: &Arc<Vec<f64>>,
) -> Result<(Var, Var)> {
    let p = tape.matmul(z, w_edge)?;
    let score = tape.edge_pair_score(p, support)?;
    let pre = tape.unary(Unary::Tanh, score)?;
    let alpha = tape.mul_const(pre, scale.clone())?;
    Ok((pre, alpha))
}

/// Fixed symmetric weights shared by every layer.
pub fn fixed_attention(g: &Graph) -> NormalizedAdjacency {
    sym_norm_adj(g)
}

/// Node-wise gate `sigmoid(h_i w)` with one `w` shared across layers.
pub fn dagnn_hop_attention(tape: &mut Tape, h: Var, w_hop: Var) -> Result<Var> {
    let s = tape.matmul(h, w_hop)?;
    tape.unary(Unary::Sigmoid, s)
}

/// Recorded pieces of one aero edge-attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AeroEdge {
    /// `ELU(z_tilde)`, reused by the hop attention of the same layer.
    pub activated: Var,
    /// Positive pre-normalized scores.
    pub pre: Var,
    pub alpha: Var,
}

/// `softplus(w^T ELU([z_i | z_j]))`, symmetrically normalized by the row
/// masses of both endpoints.
pub fn aero_edge_attention(tape: &mut Tape, z_tilde: Var, w_edge: Var, support: &Arc<Support>) -> Result<AeroEdge> {
    let activated = tape.unary(Unary::Elu, z_tilde)?;
    let p = tape.matmul(activated, w_edge)?;
    let score = tape.edge_pair_score(p, support)?;
    let pre = tape.unary(Unary::Softplus, score)?;
    let alpha = tape.sym_normalize(pre, support)?;
    Ok(AeroEdge { activated, pre, alpha })
}

/// `gamma_i = w^T ELU(h_i) + b` at hop 0, and `w^T [ELU(h_i) | ELU(z_tilde_i)] + b`
/// afterwards (`activated_prev` is the second half). Unbounded in sign.
pub fn aero_hop_attention(
    tape: &mut Tape,
    h: Var,
    activated_prev: Option<Var>,
    w_hop: Var,
    b_hop: Var,
) -> Result<Var> {
    let eh = tape.unary(Unary::Elu, h)?;
    let feats = match activated_prev {
        Some(a) => tape.hconcat(eh, a)?,
        None => eh,
    };
    let s = tape.matmul(feats, w_hop)?;
    tape.add_bias(s, b_hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn rescale_values() {
        assert!((rescale_factor(1, 1.0) - 0.693_147_7).abs() < 1e-7);
        assert!((rescale_factor(2, 0.5) - 0.223_144_4).abs() < 1e-7);
        let tiny = rescale_factor(1_000_000_000, 1.0);
        assert!(tiny > 0.0 && (tiny - 1e-6).abs() < 1e-8);
    }

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_gatv2() {
        let s = Support::shared(&path3(), true);
        let mut t = Tape::new();
        let g = t.constant(Matrix::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]])).unwrap();
        let w = t.constant(Matrix::zeros(1, 2)).unwrap();
        let (_, a) = gatv2_edge_attention(&mut t, g, w, Unary::LeakyRelu, &s).unwrap();
        for e in 0..s.len() {
            let (i, _) = s.endpoints(e);
            assert_eq!(t.value(a).get(e, 0), 1.0 / s.row_range(i).len() as f64);
        }
    }

    #[test]
    fn zero_weights_give_zero_fagcn() {
        let s = Support::shared(&path3(), false);
        let scale = fagcn_edge_scale(&s).unwrap();
        let mut t = Tape::new();
        let z = t.constant(Matrix::filled(3, 2, 0.4)).unwrap();
        let w = t.constant(Matrix::zeros(2, 2)).unwrap();
        let (_, a) = fagcn_edge_attention(&mut t, z, w, &s, &scale).unwrap();
        assert!(t.value(a).data().iter().all(|&x| x == 0.0));
        let iso = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(fagcn_edge_scale(&Support::new(&iso, false)), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn zero_weights_give_normalized_adjacency_for_aero() {
        let g = path3();
        let s = Support::shared(&g, true);
        let mut t = Tape::new();
        let z = t.constant(Matrix::filled(3, 2, -0.3)).unwrap();
        let w = t.constant(Matrix::zeros(2, 2)).unwrap();
        let out = aero_edge_attention(&mut t, z, w, &s).unwrap();
        let want = sym_norm_adj(&g);
        for (a, b) in t.value(out.alpha).data().iter().zip(want.values.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(t.value(out.pre).data().iter().all(|&x| x == std::f64::consts::LN_2));
    }

    #[test]
    fn trivial_hop_weights() {
        let mut t = Tape::new();
        let h = t.constant(Matrix::from_rows(&[vec![1.0, -1.0], vec![3.0, 0.0]])).unwrap();
        let w = t.constant(Matrix::zeros(2, 1)).unwrap();
        let b = t.constant(Matrix::scalar(1.0)).unwrap();
        let g = aero_hop_attention(&mut t, h, None, w, b).unwrap();
        assert_eq!(t.value(g).data(), &[1.0, 1.0]);
        let g = dagnn_hop_attention(&mut t, h, w).unwrap();
        assert_eq!(t.value(g).data(), &[0.5, 0.5]);
    }
}
