use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{layer_product, smoothness, DEFAULT_N_CAP};
use crate::attention::{
    aero_edge_attention, aero_hop_attention, dagnn_hop_attention, fagcn_edge_attention, gatv2_edge_attention,
    init_params, rescale_factor, ModelConfig, ModelKind, ModelParams,
};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Splits, Support};
use crate::propagation::{forward, Context, Mode, PropagationTrace};
use crate::tensor::{Matrix, Tape, Unary};

/// Over-smoothing resistance classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resistance {
    /// No parameter choice separates collapsed nodes.
    V2OS,
    /// Edge or hop attention (one of them) can separate them.
    WR2OS,
    /// Both can.
    SR2OS,
}

/// Parameters under which two collapsed nodes receive different attention.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// `"constructive"` or `"sample <index>"`.
    pub source: String,
    pub values: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub model: ModelKind,
    pub classification: Resistance,
    pub samples: usize,
    pub seed: u64,
    pub param_bound: f64,
    /// Layer whose hidden rows are collapsed.
    pub layer: usize,
    /// `[(i, j), (i', j')]` with `H_i = H_i'` and `H_j = H_j'`.
    pub pairs: [(usize, usize); 2],
    /// Random samples whose edge scores matched exactly.
    pub edge_equal: usize,
    /// Random samples whose hop weights matched exactly.
    pub hop_equal: usize,
    pub edge_witness: Option<Witness>,
    pub hop_witness: Option<Witness>,
}

const PROBE_LAYER: usize = 2;
const PAIRS: [(usize, usize); 2] = [(0, 1), (3, 4)];

fn probe_dataset(seed: u64) -> Result<Dataset> {
    // Six-cycle plus a chord closing a triangle: connected, not bipartite.
    let graph = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 2)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..6 * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
    let features = Matrix::from_vec(6, 4, data)?;
    let dataset = Dataset {
        name: "probe".into(),
        graph,
        features,
        labels: vec![0, 1, 0, 1, 0, 1],
        num_classes: 2,
        splits: Splits::default(),
    };
    dataset.validate()?;
    Ok(dataset)
}

fn collapse(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for (src, dst) in [(PAIRS[0].0, PAIRS[1].0), (PAIRS[0].1, PAIRS[1].1)] {
        let row = m.row(src).to_vec();
        out.row_mut(dst).copy_from_slice(&row);
    }
    out
}

/// Inputs of the attention functions at the collapsed layer.
struct Collapsed {
    /// Collapsed `H^(k')`.
    hidden: Matrix,
    /// Rows fed to the next edge attention (before its own transform).
    edge_input: Matrix,
    /// Rows fed to the hop attention at layer `k'` (empty when hop weights
    /// do not read node features).
    hop_input: Matrix,
}

fn collapsed_state(trace: &PropagationTrace, params: &ModelParams, cfg: &ModelConfig) -> Result<Collapsed> {
    let k = PROBE_LAYER;
    let hidden = collapse(&trace.hidden[k]);
    let empty = Matrix::zeros(0, 0);
    Ok(match cfg.kind {
        ModelKind::Gatv2 => {
            let g = hidden.matmul(params.value(&format!("layer.{}.w", k + 1))?)?;
            Collapsed { edge_input: cfg.gatv2_score_activation.map(&g), hop_input: empty, hidden }
        }
        ModelKind::Gprgnn => Collapsed { edge_input: empty.clone(), hop_input: empty, hidden },
        ModelKind::Dagnn => Collapsed { edge_input: empty, hop_input: hidden.clone(), hidden },
        ModelKind::Fagcn => {
            let residual = trace.aggregated[0].clone();
            Collapsed { edge_input: residual.add(&hidden), hop_input: empty, hidden }
        }
        ModelKind::Aero => {
            let mut tape = Tape::new();
            let h = tape.constant(hidden.clone())?;
            let zt_prev = tape.constant(trace.rescaled[k - 1].clone())?;
            let act_prev = tape.unary(Unary::Elu, zt_prev)?;
            let eh = tape.unary(Unary::Elu, h)?;
            let hop_in = tape.hconcat(eh, act_prev)?;
            let w = tape.constant(params.value(&format!("hop.{k}.w"))?.clone())?;
            let b = tape.constant(params.value(&format!("hop.{k}.b"))?.clone())?;
            let gamma = aero_hop_attention(&mut tape, h, Some(act_prev), w, b)?;
            let term = tape.row_scale(gamma, h)?;
            let z_prev = tape.constant(trace.aggregated[k - 1].clone())?;
            let z = tape.add(z_prev, term)?;
            let zt = tape.scale(z, rescale_factor(k + 1, cfg.lambda))?;
            Collapsed { edge_input: tape.value(zt).clone(), hop_input: tape.value(hop_in).clone(), hidden }
        }
    })
}

/// Pre-normalized edge scores at the two probe pairs and hop weights at the
/// two collapsed sources, evaluated through the model's attention functions.
fn evaluate(
    state: &Collapsed,
    params: &ModelParams,
    cfg: &ModelConfig,
    ctx: &Context,
) -> Result<([f64; 2], [f64; 2])> {
    let k = PROBE_LAYER;
    let (a, b) = (PAIRS[0], PAIRS[1]);
    let mut tape = Tape::new();
    let edge_at = |support: &Support, values: &[f64]| -> [f64; 2] {
        [values[support.find(a.0, a.1).unwrap()], values[support.find(b.0, b.1).unwrap()]]
    };
    let next_edge = format!("layer.{}.edge", k + 1);
    let edge = match cfg.kind {
        ModelKind::Gatv2 => {
            let g = tape.constant(state.hidden.matmul(params.value(&format!("layer.{}.w", k + 1))?)?)?;
            let w = tape.constant(params.value(&next_edge)?.clone())?;
            let (score, _) = gatv2_edge_attention(&mut tape, g, w, cfg.gatv2_score_activation, &ctx.looped)?;
            edge_at(&ctx.looped, tape.value(score).data()).map(|s| Unary::Exp.apply(s))
        }
        ModelKind::Gprgnn | ModelKind::Dagnn => [1.0, 1.0],
        ModelKind::Fagcn => {
            let scale = ctx.fagcn_scale.clone().map_err(Error::IsolatedNode)?;
            let z = tape.constant(state.edge_input.clone())?;
            let w = tape.constant(params.value(&next_edge)?.clone())?;
            let (pre, _) = fagcn_edge_attention(&mut tape, z, w, &ctx.plain, &scale)?;
            edge_at(&ctx.plain, tape.value(pre).data())
        }
        ModelKind::Aero => {
            let zt = tape.constant(state.edge_input.clone())?;
            let w = tape.constant(params.value(&next_edge)?.clone())?;
            let out = aero_edge_attention(&mut tape, zt, w, &ctx.looped)?;
            edge_at(&ctx.looped, tape.value(out.pre).data())
        }
    };
    let (i, i2) = (a.0, b.0);
    let hop = match cfg.kind {
        ModelKind::Gatv2 => [1.0, 1.0],
        ModelKind::Fagcn => [cfg.fagcn_eps, cfg.fagcn_eps],
        ModelKind::Gprgnn => {
            let c = params.value(&format!("hop.{k}"))?.get(0, 0);
            [c, c]
        }
        ModelKind::Dagnn => {
            let h = tape.constant(state.hop_input.clone())?;
            let w = tape.constant(params.value("hop.w")?.clone())?;
            let g = dagnn_hop_attention(&mut tape, h, w)?;
            [tape.value(g).get(i, 0), tape.value(g).get(i2, 0)]
        }
        ModelKind::Aero => {
            let feats = tape.constant(state.hop_input.clone())?;
            let w = tape.constant(params.value(&format!("hop.{k}.w"))?.clone())?;
            let b = tape.constant(params.value(&format!("hop.{k}.b"))?.clone())?;
            let s = tape.matmul(feats, w)?;
            let g = tape.add_bias(s, b)?;
            [tape.value(g).get(i, 0), tape.value(g).get(i2, 0)]
        }
    };
    Ok((edge, hop))
}

/// Column with the largest gap between rows `r` and `r2`, if any gap exists.
fn distinguishing_column(m: &Matrix, r: usize, r2: usize) -> Option<usize> {
    (0..m.cols())
        .map(|c| (c, (m.get(r, c) - m.get(r2, c)).abs()))
        .filter(|&(_, gap)| gap > 0.0)
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(c, _)| c)
}

/// Parameters built from the features themselves: a unit weight on a
/// coordinate where the collapsed sources still differ. Hop weights are set
/// first since the next edge input depends on them.
fn constructive(
    trace: &PropagationTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(Collapsed, ModelParams)> {
    let k = PROBE_LAYER;
    let (i, i2) = (PAIRS[0].0, PAIRS[1].0);
    let c = cfg.param_clamp;
    let mut out = params.clone();
    let state = collapsed_state(trace, &out, cfg)?;
    let hop_names = match cfg.kind {
        ModelKind::Aero => Some((format!("hop.{k}.w"), Some(format!("hop.{k}.b")))),
        ModelKind::Dagnn => Some(("hop.w".to_string(), None)),
        _ => None,
    };
    if let Some((wname, bname)) = hop_names {
        if let Some(t) = distinguishing_column(&state.hop_input, i, i2) {
            let mut w = Matrix::zeros(state.hop_input.cols(), 1);
            w.set(t, 0, c);
            out.set(&wname, w)?;
            if let Some(b) = bname {
                out.set(&b, Matrix::scalar(0.0))?;
            }
        }
    }
    let state = collapsed_state(trace, &out, cfg)?;
    if state.edge_input.cols() > 0 {
        let name = format!("layer.{}.edge", k + 1);
        if let Some(t) = distinguishing_column(&state.edge_input, i, i2) {
            let mut w = Matrix::zeros(out.value(&name)?.rows(), 2);
            w.set(t, 0, c);
            out.set(&name, w)?;
        }
    }
    Ok((state, out))
}

fn differs(v: [f64; 2]) -> bool {
    v[0].to_bits() != v[1].to_bits()
}

/// Classifies `kind` by collapsing hidden rows of a small probe graph at one
/// layer and testing whether edge scores or hop weights can still tell the
/// collapsed nodes apart: first under constructed parameters, then under
/// `n_samples` uniform draws from `[-C, C]`. Equality is bitwise.
pub fn v2os_probe(kind: ModelKind, n_samples: usize, seed: u64) -> Result<ProbeReport> {
    let dataset = probe_dataset(seed)?;
    let ctx = Context::new(&dataset);
    let cfg = ModelConfig { d_h: 4, dropout: 0.0, ..ModelConfig::new(kind, PROBE_LAYER + 1) };
    let base = init_params(&cfg, dataset.features.cols(), dataset.num_classes, 1, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);

    let mut report = ProbeReport {
        model: kind,
        classification: Resistance::V2OS,
        samples: n_samples,
        seed,
        param_bound: cfg.param_clamp,
        layer: PROBE_LAYER,
        pairs: PAIRS,
        edge_equal: 0,
        hop_equal: 0,
        edge_witness: None,
        hop_witness: None,
    };
    let record = |source: String, edge: [f64; 2], hop: [f64; 2], report: &mut ProbeReport| {
        if differs(edge) && report.edge_witness.is_none() {
            report.edge_witness = Some(Witness { source: source.clone(), values: edge });
        }
        if differs(hop) && report.hop_witness.is_none() {
            report.hop_witness = Some(Witness { source, values: hop });
        }
    };

    let trace_of = |params: &ModelParams, rng: &mut ChaCha8Rng| -> Result<PropagationTrace> {
        let pass = forward(&ctx, params, &cfg, Mode::Eval, rng)?;
        Ok(pass.trace.expect("forward keeps a trace"))
    };

    let trace = trace_of(&base, &mut eval_rng)?;
    let (state, built) = constructive(&trace, &base, &cfg)?;
    let (edge, hop) = evaluate(&state, &built, &cfg, &ctx)?;
    record("constructive".into(), edge, hop, &mut report);

    for s in 0..n_samples {
        let mut params = base.clone();
        params.resample_uniform(cfg.param_clamp, &mut rng);
        let trace = trace_of(&params, &mut eval_rng)?;
        let state = collapsed_state(&trace, &params, &cfg)?;
        let (edge, hop) = evaluate(&state, &params, &cfg, &ctx)?;
        report.edge_equal += usize::from(!differs(edge));
        report.hop_equal += usize::from(!differs(hop));
        record(format!("sample {s}"), edge, hop, &mut report);
    }
    report.classification = match (report.edge_witness.is_some(), report.hop_witness.is_some()) {
        (true, true) => Resistance::SR2OS,
        (false, false) => Resistance::V2OS,
        _ => Resistance::WR2OS,
    };
    Ok(report)
}

/// Which construction [`unsmoothing_construct`] used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum UnsmoothingBranch {
    /// The edge product is already non-smooth; hop weights set to one.
    ZeroHop,
    /// Unit weight on coordinate `t` with bias at the midpoint of nodes `i`, `j`.
    Midpoint { t: usize, i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unsmoothing {
    pub layer: usize,
    pub branch: UnsmoothingBranch,
    pub w_hop: Matrix,
    pub b_hop: f64,
    pub gamma: Vec<f64>,
    /// `S` of the edge product composed into hop `layer`.
    pub product_smoothness: f64,
    /// `S(T^(layer))` under the constructed hop weights.
    pub smoothness: f64,
}

/// Below this the edge product counts as fully smoothed.
pub const SMOOTH_THRESHOLD: f64 = 1e-9;

/// Hop weights for layer `k + 1` of an aero trace that make `T^(k+1)`
/// non-smooth: zero weights and unit bias when the edge product is already
/// non-smooth, otherwise a unit weight on a coordinate of
/// `[ELU(H^(k+1)) | ELU(Z_tilde^(k))]` that separates two nodes, with the bias at
/// their midpoint so the two hop weights have opposite signs.
pub fn unsmoothing_construct(trace: &PropagationTrace, k: usize) -> Result<Unsmoothing> {
    if trace.kind != ModelKind::Aero {
        return Err(Error::InvalidArgument(format!("unsmoothing needs an aero trace, got {}", trace.kind)));
    }
    let layer = k + 1;
    if layer > trace.k_max {
        return Err(Error::LayerOutOfRange { k: layer, k_max: trace.k_max });
    }
    let product = layer_product(trace, layer, DEFAULT_N_CAP)?;
    let product_smoothness = smoothness(&product)?;
    let n = trace.n();

    let mut tape = Tape::new();
    let h = tape.constant(trace.hidden[layer].clone())?;
    let zt = tape.constant(trace.rescaled[k].clone())?;
    let act_prev = tape.unary(Unary::Elu, zt)?;
    let eh = tape.unary(Unary::Elu, h)?;
    let feats = tape.hconcat(eh, act_prev)?;
    let width = tape.value(feats).cols();

    let (branch, w_hop, b_hop) = if product_smoothness > SMOOTH_THRESHOLD {
        (UnsmoothingBranch::ZeroHop, Matrix::zeros(width, 1), 1.0)
    } else {
        let f = tape.value(feats).clone();
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for t in 0..width {
            let col = (0..n).map(|r| (r, f.get(r, t)));
            let (hi, vhi) = col.clone().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            let (lo, vlo) = col.min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            if vhi > vlo && best.is_none_or(|b| vhi - vlo > b.3) {
                best = Some((t, hi, lo, vhi - vlo));
            }
        }
        let (t, i, j, _) = best.ok_or(Error::NoDistinguishingCoordinate)?;
        let mut w = Matrix::zeros(width, 1);
        w.set(t, 0, 1.0);
        (UnsmoothingBranch::Midpoint { t, i, j }, w, -(f.get(i, t) + f.get(j, t)) / 2.0)
    };
    let wv = tape.constant(w_hop.clone())?;
    let bv = tape.constant(Matrix::scalar(b_hop))?;
    let gamma = aero_hop_attention(&mut tape, h, Some(act_prev), wv, bv)?;
    let gamma = tape.value(gamma).data().to_vec();
    let mut t_mat = product;
    for (r, &g) in gamma.iter().enumerate() {
        t_mat.row_mut(r).iter_mut().for_each(|x| *x *= g);
    }
    Ok(Unsmoothing { layer, branch, w_hop, b_hop, gamma, product_smoothness, smoothness: smoothness(&t_mat)? })
}

/// Aero trace on the complete graph `K_n` with all edge weights zero, so every
/// edge-attention layer equals `J / n` and every product has rank one.
pub fn complete_graph_trace(n: usize, k_max: usize, seed: u64) -> Result<PropagationTrace> {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let graph = Graph::from_edges(n, &edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dataset = Dataset {
        name: format!("complete-{n}"),
        graph,
        features: Matrix::from_vec(n, 3, data)?,
        labels: (0..n).map(|i| i % 2).collect(),
        num_classes: 2,
        splits: Splits::default(),
    };
    let ctx = Context::new(&dataset);
    let cfg = ModelConfig { d_h: 4, dropout: 0.0, ..ModelConfig::new(ModelKind::Aero, k_max) };
    let mut params = init_params(&cfg, 3, 2, 1, seed)?;
    for k in 1..=k_max {
        params.set(&format!("layer.{k}.edge"), Matrix::zeros(cfg.d_h, 2))?;
    }
    let pass = forward(&ctx, &params, &cfg, Mode::Eval, &mut rng)?;
    Ok(pass.trace.expect("forward keeps a trace"))
}
