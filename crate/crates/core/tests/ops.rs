use std::sync::Arc;

use aero_attn::graph::Support;
use aero_attn::oracles::random_graph;
use aero_attn::tensor::{grad_check, Matrix, Tape, Unary, Var};
use aero_attn::Result;
use proptest::prelude::*;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// Random weights so every output entry reaches the loss with its own slope.
fn weighted_sum(tape: &mut Tape, x: Var, weights: &[f64]) -> Result<Var> {
    let len = tape.value(x).len();
    let w: Vec<f64> = (0..len).map(|i| weights[i % weights.len()]).collect();
    let y = tape.mul_const(x, Arc::new(w))?;
    tape.sum(y)
}

fn support(n: usize, seed: u64, loops: bool) -> Arc<Support> {
    Support::shared(&random_graph(n, 0.3, seed).unwrap(), loops)
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1.5, 7)
}

fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=10, 1usize..=10, 1usize..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matmul_and_bias_gradients(
        (a, b, bias) in shape().prop_flat_map(|(r, k, c)| (matrix(r, k), matrix(k, c), matrix(1, c))),
        w in weights(),
    ) {
        let report = grad_check(&[a, b, bias], STEP, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            weighted_sum(t, y, &w)
        }).unwrap();
        prop_assert!(report.max_rel_error < TOL, "{report:?}");
    }

    #[test]
    fn unary_gradients(x in (1usize..=10, 1usize..=10).prop_flat_map(|(r, c)| matrix(r, c)), w in weights()) {
        for kind in [Unary::Elu, Unary::Tanh, Unary::Softplus, Unary::Sigmoid, Unary::Exp, Unary::LeakyRelu, Unary::Identity] {
            // Keep away from the kinks at zero.
            let x = x.map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v });
            let report = grad_check(&[x], STEP, |t, v| {
                let y = t.unary(kind, v[0])?;
                weighted_sum(t, y, &w)
            }).unwrap();
            prop_assert!(report.max_rel_error < TOL, "{kind:?} {report:?}");
        }
    }

    #[test]
    fn row_ops_gradients(
        (x, y, g) in (1usize..=10, 1usize..=10).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c), matrix(r, 1))),
        s in -2.0f64..2.0,
        w in weights(),
    ) {
        let report = grad_check(&[x, y, g, Matrix::scalar(s)], STEP, |t, v| {
            let a = t.add(v[0], v[1])?;
            let a = t.row_scale(v[2], a)?;
            let a = t.scale_by(a, v[3])?;
            let a = t.hconcat(a, v[1])?;
            let a = t.scale(a, 0.7)?;
            weighted_sum(t, a, &w)
        }).unwrap();
        prop_assert!(report.max_rel_error < TOL, "{report:?}");
    }

    #[test]
    fn sparse_gradients(
        (n, z, edge_w, pair_w) in (3usize..=10, 1usize..=6)
            .prop_flat_map(|(n, d)| (Just(n), matrix(n, d), matrix(2 * d, 1), matrix(d, 2))),
        seed in 0u64..1000,
        w in weights(),
    ) {
        let sup = support(n, seed, true);
        let report = grad_check(&[z, edge_w, pair_w], STEP, |t, v| {
            let cat = t.edge_concat(v[0], &sup)?;
            let raw = t.matmul(cat, v[1])?;
            let pos = t.unary(Unary::Softplus, raw)?;
            let sym = t.sym_normalize(pos, &sup)?;
            let p = t.matmul(v[0], v[2])?;
            let pair = t.edge_pair_score(p, &sup)?;
            let soft = t.segment_softmax(pair, &sup)?;
            let both = t.add(sym, soft)?;
            let out = t.spmm(both, &sup, v[0])?;
            let out = weighted_sum(t, out, &w)?;
            // Softmax ignores the source half, so it also enters the loss directly.
            let direct = weighted_sum(t, pair, &w)?;
            t.add(out, direct)
        }).unwrap();
        prop_assert!(report.max_rel_error < TOL, "{report:?}");
    }

    #[test]
    fn cross_entropy_gradients(
        (n, c, logits) in (2usize..=10, 2usize..=6).prop_flat_map(|(n, c)| (Just(n), Just(c), matrix(n, c))),
        seed in 0u64..1000,
    ) {
        let labels: Arc<Vec<usize>> = Arc::new((0..n).map(|i| (i + seed as usize) % c).collect());
        let index = Arc::new((0..n).step_by(2).collect::<Vec<_>>());
        let report = grad_check(&[logits], STEP, |t, v| t.cross_entropy(v[0], labels.clone(), index.clone())).unwrap();
        prop_assert!(report.max_rel_error < TOL, "{report:?}");
    }

    #[test]
    fn segment_softmax_rows_sum_to_one(n in 3usize..=30, seed in 0u64..1000, scale in 0.1f64..50.0) {
        let sup = support(n, seed, true);
        let mut t = Tape::new();
        let logits: Vec<f64> = (0..sup.len()).map(|e| scale * ((e as f64 * 0.618 + seed as f64).sin())).collect();
        let x = t.constant(Matrix::column(logits)).unwrap();
        let a = t.segment_softmax(x, &sup).unwrap();
        let a = t.value(a).data();
        for i in 0..n {
            let sum: f64 = sup.row_range(i).map(|e| a[e]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
            prop_assert!(sup.row_range(i).all(|e| a[e] > 0.0));
        }
    }

    #[test]
    fn sym_normalize_matches_dense(n in 3usize..=12, seed in 0u64..1000) {
        let sup = support(n, seed, true);
        let vals: Vec<f64> = (0..sup.len()).map(|e| 0.1 + ((e * 7 + seed as usize) % 11) as f64).collect();
        let mut t = Tape::new();
        let x = t.constant(Matrix::column(vals.clone())).unwrap();
        let y = t.sym_normalize(x, &sup).unwrap();
        let dense = sup.densify(&vals);
        let sums: Vec<f64> = (0..n).map(|i| dense.row(i).iter().sum()).collect();
        for (e, v) in vals.iter().enumerate() {
            let (i, j) = sup.endpoints(e);
            let want = v / (sums[i] * sums[j]).sqrt();
            prop_assert!((t.value(y).data()[e] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn exp_is_clamped_not_infinite() {
    let mut t = Tape::new();
    let x = t.constant(Matrix::filled(1, 2, 1e4)).unwrap();
    let y = t.unary(Unary::Exp, x).unwrap();
    assert!(t.value(y).is_finite());
}

#[test]
fn shape_errors_are_reported() {
    let mut t = Tape::new();
    let a = t.param(Matrix::zeros(2, 3)).unwrap();
    let b = t.param(Matrix::zeros(2, 3)).unwrap();
    assert!(t.matmul(a, b).is_err());
    let c = t.param(Matrix::zeros(3, 3)).unwrap();
    assert!(t.add(a, c).is_err());
}

#[test]
fn frozen_inputs_get_no_gradient() {
    let mut t = Tape::new();
    let a = t.param(Matrix::filled(2, 2, 1.0)).unwrap();
    let k = t.constant(Matrix::filled(2, 2, 3.0)).unwrap();
    let y = t.matmul(a, k).unwrap();
    let s = t.sum(y).unwrap();
    let g = t.backward(s);
    assert!(g.get(k).is_none());
    assert_eq!(g.get(a).unwrap().data(), &[6.0, 6.0, 6.0, 6.0]);
}
