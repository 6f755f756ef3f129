//! Forward passes of the five models, producing logits on a fresh tape and
//! optionally a detached [`PropagationTrace`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    aero_edge_attention, aero_hop_attention, dagnn_hop_attention, fagcn_edge_attention, fagcn_edge_scale,
    fixed_attention, gatv2_edge_attention, rescale_z, BoundParams, ModelConfig, ModelKind, ModelParams,
};
use crate::error::{Error, Result};
use crate::graph::{Dataset, NormalizedAdjacency, Support};
use crate::tensor::{Matrix, Tape, Unary, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_training(self) -> bool {
        self == Mode::Train
    }
}

/// How layer indices map to hop indices of the cumulative attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopOrientation {
    /// Hop `k` composes layers `1..=k`.
    Forward,
    /// Hop `k` composes the last `k` layers (fagcn's unrolled recursion).
    Reversed,
}

/// Per-dataset structures shared by every forward pass.
#[derive(Debug, Clone)]
pub struct Context<'a> {
    pub dataset: &'a Dataset,
    pub features: Arc<Matrix>,
    /// Support of `A + I`.
    pub looped: Arc<Support>,
    /// Support of `A`.
    pub plain: Arc<Support>,
    pub normalized: NormalizedAdjacency,
    /// `1/sqrt(d_i d_j)` on `plain`; `Err` holds the first isolated node.
    pub fagcn_scale: std::result::Result<Arc<Vec<f64>>, usize>,
    pub labels: Arc<Vec<usize>>,
}

impl<'a> Context<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        let normalized = fixed_attention(&dataset.graph);
        let plain = Support::shared(&dataset.graph, false);
        let fagcn_scale = fagcn_edge_scale(&plain).map_err(|e| match e {
            Error::IsolatedNode(i) => i,
            _ => unreachable!("fagcn_edge_scale only reports isolated nodes"),
        });
        Self {
            dataset,
            features: Arc::new(dataset.features.clone()),
            looped: normalized.support.clone(),
            plain,
            normalized,
            fagcn_scale,
            labels: Arc::new(dataset.labels.clone()),
        }
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }
}

/// Detached per-layer artifacts of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationTrace {
    pub kind: ModelKind,
    pub k_max: usize,
    #[serde(skip)]
    pub support: Arc<Support>,
    /// `H^(0..=k_max)`. For fagcn, `H^(k)` (k >= 1) is the propagated term
    /// `A^(k) Z^(k-1)`.
    pub hidden: Vec<Matrix>,
    /// `Z^(0..=k_max)`; empty for gatv2.
    pub aggregated: Vec<Matrix>,
    /// Aero only: entry `k` is the rescaled `Z^(k)` fed to layer `k + 1`.
    pub rescaled: Vec<Matrix>,
    /// `A^(1..=k_max)` values on `support`, entry `k - 1` for layer `k`.
    #[serde(skip)]
    pub edge: Vec<Arc<Vec<f64>>>,
    /// Pre-normalized edge scores per layer (empty for fixed attention).
    #[serde(skip)]
    pub edge_pre: Vec<Arc<Vec<f64>>>,
    /// Diagonal of `Gamma^(0..=k_max)`.
    pub hop: Vec<Vec<f64>>,
    pub output: Matrix,
    pub orientation: HopOrientation,
}

impl PropagationTrace {
    pub fn n(&self) -> usize {
        self.support.n()
    }

    /// Values of `A^(k)`, `1 <= k <= k_max`.
    pub fn edge_values(&self, k: usize) -> Result<&Arc<Vec<f64>>> {
        if k == 0 || k > self.k_max {
            return Err(Error::LayerOutOfRange { k, k_max: self.k_max });
        }
        Ok(&self.edge[k - 1])
    }

    /// Diagonal of `Gamma^(k)`, `0 <= k <= k_max`.
    pub fn hop_weights(&self, k: usize) -> Result<&[f64]> {
        self.hop.get(k).map(Vec::as_slice).ok_or(Error::LayerOutOfRange { k, k_max: self.k_max })
    }

    /// Layers composed into hop `k`, applied first to last.
    pub fn hop_layers(&self, k: usize) -> Result<Vec<usize>> {
        if k > self.k_max {
            return Err(Error::LayerOutOfRange { k, k_max: self.k_max });
        }
        Ok(match self.orientation {
            HopOrientation::Forward => (1..=k).collect(),
            HopOrientation::Reversed => (self.k_max - k + 1..=self.k_max).collect(),
        })
    }
}

/// Tape, logits and (if requested) trace of one forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    pub logits: Var,
    /// Vars of the parameters on `tape`.
    pub bound: BoundParams,
    pub trace: Option<PropagationTrace>,
}

struct Recorder<'t> {
    tape: &'t mut Tape,
    keep: bool,
    hidden: Vec<Matrix>,
    aggregated: Vec<Matrix>,
    rescaled: Vec<Matrix>,
    edge: Vec<Arc<Vec<f64>>>,
    edge_pre: Vec<Arc<Vec<f64>>>,
    hop: Vec<Vec<f64>>,
}

impl<'t> Recorder<'t> {
    fn new(tape: &'t mut Tape, keep: bool) -> Self {
        Self {
            tape,
            keep,
            hidden: Vec::new(),
            aggregated: Vec::new(),
            rescaled: Vec::new(),
            edge: Vec::new(),
            edge_pre: Vec::new(),
            hop: Vec::new(),
        }
    }

    fn snap(&self, v: Var) -> Matrix {
        self.tape.value(v).clone()
    }

    fn hidden(&mut self, v: Var) {
        if self.keep {
            self.hidden.push(self.snap(v));
        }
    }

    fn aggregated(&mut self, v: Var) {
        if self.keep {
            self.aggregated.push(self.snap(v));
        }
    }

    fn rescaled(&mut self, v: Var) {
        if self.keep {
            self.rescaled.push(self.snap(v));
        }
    }

    fn edge(&mut self, alpha: Var, pre: Option<Var>) {
        if self.keep {
            self.edge.push(Arc::new(self.tape.value(alpha).data().to_vec()));
            if let Some(p) = pre {
                self.edge_pre.push(Arc::new(self.tape.value(p).data().to_vec()));
            }
        }
    }

    fn shared_edge(&mut self, values: &Arc<Vec<f64>>) {
        if self.keep {
            self.edge.push(values.clone());
        }
    }

    fn hop_column(&mut self, gamma: Var) {
        if self.keep {
            self.hop.push(self.tape.value(gamma).data().to_vec());
        }
    }

    fn hop_constant(&mut self, value: f64, n: usize) {
        if self.keep {
            self.hop.push(vec![value; n]);
        }
    }

    fn finish(
        self,
        kind: ModelKind,
        k_max: usize,
        support: Arc<Support>,
        logits: Var,
        orientation: HopOrientation,
    ) -> Option<PropagationTrace> {
        self.keep.then(|| PropagationTrace {
            kind,
            k_max,
            support,
            output: self.tape.value(logits).clone(),
            hidden: self.hidden,
            aggregated: self.aggregated,
            rescaled: self.rescaled,
            edge: self.edge,
            edge_pre: self.edge_pre,
            hop: self.hop,
            orientation,
        })
    }
}

fn mlp<R: Rng + ?Sized>(tape: &mut Tape, p: &BoundParams, x: Var, cfg: &ModelConfig, mode: Mode, rng: &mut R) -> Result<Var> {
    let h = tape.matmul(x, p.get("mlp.0.w")?)?;
    let h = tape.add_bias(h, p.get("mlp.0.b")?)?;
    match p.var_of("mlp.1.w") {
        None => Ok(h),
        Some(w1) => {
            let h = tape.unary(Unary::Elu, h)?;
            let h = tape.dropout(h, cfg.dropout, mode.is_training(), rng)?;
            let h = tape.matmul(h, w1)?;
            tape.add_bias(h, p.get("mlp.1.b")?)
        }
    }
}

fn input<R: Rng + ?Sized>(tape: &mut Tape, ctx: &Context, cfg: &ModelConfig, mode: Mode, rng: &mut R) -> Result<Var> {
    let x = tape.constant((*ctx.features).clone())?;
    tape.dropout(x, cfg.dropout, mode.is_training(), rng)
}

fn output_layer(tape: &mut Tape, p: &BoundParams, h: Var) -> Result<Var> {
    let o = tape.matmul(h, p.get("out.w")?)?;
    tape.add_bias(o, p.get("out.b")?)
}

/// Records the forward pass of `cfg.kind` onto `tape` using `p`.
pub fn record<R: Rng + ?Sized>(
    tape: &mut Tape,
    p: &BoundParams,
    ctx: &Context,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
    keep_trace: bool,
) -> Result<(Var, Option<PropagationTrace>)> {
    cfg.validate()?;
    let rec = Recorder::new(tape, keep_trace);
    match cfg.kind {
        ModelKind::Aero => record_aero(rec, p, ctx, cfg, mode, rng),
        ModelKind::Gatv2 => record_gatv2(rec, p, ctx, cfg, mode, rng),
        ModelKind::Fagcn => record_fagcn(rec, p, ctx, cfg, mode, rng),
        ModelKind::Gprgnn | ModelKind::Dagnn => record_gpr_dagnn(rec, p, ctx, cfg, mode, rng),
    }
}

fn record_aero<R: Rng + ?Sized>(
    mut rec: Recorder,
    p: &BoundParams,
    ctx: &Context,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Option<PropagationTrace>)> {
    let support = if cfg.aero_self_loops { ctx.looped.clone() } else { ctx.plain.clone() };
    let x = input(rec.tape, ctx, cfg, mode, rng)?;
    let mut h = mlp(rec.tape, p, x, cfg, mode, rng)?;
    if cfg.input_dropout {
        h = rec.tape.dropout(h, cfg.dropout, mode.is_training(), rng)?;
    }
    let gamma = aero_hop_attention(rec.tape, h, None, p.get("hop.0.w")?, p.get("hop.0.b")?)?;
    let mut z = rec.tape.row_scale(gamma, h)?;
    rec.hidden(h);
    rec.hop_column(gamma);
    rec.aggregated(z);
    for k in 1..=cfg.k_max {
        let z_tilde = rescale_z(rec.tape, z, k, cfg.lambda)?;
        rec.rescaled(z_tilde);
        let edge = aero_edge_attention(rec.tape, z_tilde, p.get(&format!("layer.{k}.edge"))?, &support)?;
        let alpha = rec.tape.dropout(edge.alpha, cfg.dropout, mode.is_training(), rng)?;
        h = rec.tape.spmm(alpha, &support, h)?;
        let gamma = aero_hop_attention(
            rec.tape,
            h,
            Some(edge.activated),
            p.get(&format!("hop.{k}.w"))?,
            p.get(&format!("hop.{k}.b"))?,
        )?;
        let term = rec.tape.row_scale(gamma, h)?;
        z = rec.tape.add(z, term)?;
        rec.edge(alpha, Some(edge.pre));
        rec.hidden(h);
        rec.hop_column(gamma);
        rec.aggregated(z);
    }
    let mut out = rec.tape.unary(Unary::Elu, z)?;
    if cfg.output_dropout {
        out = rec.tape.dropout(out, cfg.dropout, mode.is_training(), rng)?;
    }
    let logits = output_layer(rec.tape, p, out)?;
    Ok((logits, rec.finish(ModelKind::Aero, cfg.k_max, support, logits, HopOrientation::Forward)))
}

fn record_gatv2<R: Rng + ?Sized>(
    mut rec: Recorder,
    p: &BoundParams,
    ctx: &Context,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Option<PropagationTrace>)> {
    let support = ctx.looped.clone();
    let x = input(rec.tape, ctx, cfg, mode, rng)?;
    let mut h = mlp(rec.tape, p, x, cfg, mode, rng)?;
    let n = ctx.n();
    rec.hidden(h);
    rec.hop_constant(1.0, n);
    let uniform = cfg.fixed_attention.then(|| {
        Arc::new(
            (0..support.len())
                .map(|e| 1.0 / support.row_range(support.endpoints(e).0).len() as f64)
                .collect::<Vec<f64>>(),
        )
    });
    for k in 1..=cfg.k_max {
        let g = rec.tape.matmul(h, p.get(&format!("layer.{k}.w"))?)?;
        let (alpha, pre) = match &uniform {
            Some(u) => (rec.tape.constant(Matrix::column(u.to_vec()))?, None),
            None => {
                let (score, alpha) =
                    gatv2_edge_attention(rec.tape, g, p.get(&format!("layer.{k}.edge"))?, cfg.gatv2_score_activation, &support)?;
                let alpha = rec.tape.dropout(alpha, cfg.dropout, mode.is_training(), rng)?;
                (alpha, Some(score))
            }
        };
        h = rec.tape.spmm(alpha, &support, g)?;
        if !cfg.gatv2_linear {
            h = rec.tape.unary(cfg.gatv2_layer_activation, h)?;
        }
        match (&uniform, pre) {
            (Some(u), _) => rec.shared_edge(u),
            (None, pre) => rec.edge(alpha, pre),
        }
        rec.hidden(h);
        rec.hop_constant(1.0, n);
    }
    let logits = output_layer(rec.tape, p, h)?;
    Ok((logits, rec.finish(ModelKind::Gatv2, cfg.k_max, support, logits, HopOrientation::Forward)))
}

fn record_fagcn<R: Rng + ?Sized>(
    mut rec: Recorder,
    p: &BoundParams,
    ctx: &Context,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Option<PropagationTrace>)> {
    let scale = ctx.fagcn_scale.clone().map_err(Error::IsolatedNode)?;
    let support = ctx.plain.clone();
    let x = input(rec.tape, ctx, cfg, mode, rng)?;
    let h = mlp(rec.tape, p, x, cfg, mode, rng)?;
    let mut h0 = rec.tape.unary(Unary::Elu, h)?;
    if cfg.input_dropout {
        h0 = rec.tape.dropout(h0, cfg.dropout, mode.is_training(), rng)?;
    }
    let n = ctx.n();
    let z0 = rec.tape.scale(h0, cfg.fagcn_eps)?;
    let mut z = z0;
    rec.hidden(h0);
    rec.aggregated(z0);
    rec.hop_constant(cfg.fagcn_eps, n);
    for k in 1..=cfg.k_max {
        let (pre, alpha) = fagcn_edge_attention(rec.tape, z, p.get(&format!("layer.{k}.edge"))?, &support, &scale)?;
        let alpha = rec.tape.dropout(alpha, cfg.dropout, mode.is_training(), rng)?;
        let propagated = rec.tape.spmm(alpha, &support, z)?;
        z = rec.tape.add(z0, propagated)?;
        rec.edge(alpha, Some(pre));
        rec.hidden(propagated);
        rec.aggregated(z);
        rec.hop_constant(cfg.fagcn_eps, n);
    }
    let logits = output_layer(rec.tape, p, z)?;
    Ok((logits, rec.finish(ModelKind::Fagcn, cfg.k_max, support, logits, HopOrientation::Reversed)))
}

fn record_gpr_dagnn<R: Rng + ?Sized>(
    mut rec: Recorder,
    p: &BoundParams,
    ctx: &Context,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Option<PropagationTrace>)> {
    let support = ctx.normalized.support.clone();
    let values = ctx.normalized.values.clone();
    let x = input(rec.tape, ctx, cfg, mode, rng)?;
    let mut h = mlp(rec.tape, p, x, cfg, mode, rng)?;
    if cfg.input_dropout {
        h = rec.tape.dropout(h, cfg.dropout, mode.is_training(), rng)?;
    }
    let adj = rec.tape.constant(Matrix::column(values.to_vec()))?;
    let dagnn = cfg.kind == ModelKind::Dagnn;
    let hop = |rec: &mut Recorder, k: usize, h: Var| -> Result<Var> {
        let gamma = if dagnn {
            let g = dagnn_hop_attention(rec.tape, h, p.get("hop.w")?)?;
            rec.hop_column(g);
            rec.tape.row_scale(g, h)?
        } else {
            let c = p.get(&format!("hop.{k}"))?;
            let value = rec.tape.value(c).get(0, 0);
            rec.hop_constant(value, rec.tape.value(h).rows());
            rec.tape.scale_by(h, c)?
        };
        Ok(gamma)
    };
    let mut z = hop(&mut rec, 0, h)?;
    rec.hidden(h);
    rec.aggregated(z);
    for k in 1..=cfg.k_max {
        h = rec.tape.spmm(adj, &support, h)?;
        let term = hop(&mut rec, k, h)?;
        z = rec.tape.add(z, term)?;
        rec.shared_edge(&values);
        rec.hidden(h);
        rec.aggregated(z);
    }
    Ok((z, rec.finish(cfg.kind, cfg.k_max, support, z, HopOrientation::Forward)))
}

fn run<R: Rng + ?Sized>(
    ctx: &Context,
    params: &ModelParams,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
    keep_trace: bool,
) -> Result<ForwardPass> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let (logits, trace) = record(&mut tape, &bound, ctx, cfg, mode, rng, keep_trace)?;
    Ok(ForwardPass { tape, logits, bound, trace })
}

/// Forward pass of `cfg.kind` with a full trace. `mode` controls dropout.
pub fn forward<R: Rng + ?Sized>(ctx: &Context, params: &ModelParams, cfg: &ModelConfig, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
    run(ctx, params, cfg, mode, rng, true)
}

/// Forward pass without trace collection (training loop).
pub fn forward_untraced<R: Rng + ?Sized>(
    ctx: &Context,
    params: &ModelParams,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardPass> {
    run(ctx, params, cfg, mode, rng, false)
}

fn expect_kind(cfg: &ModelConfig, kinds: &[ModelKind]) -> Result<()> {
    if kinds.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("config kind {} does not match this forward pass", cfg.kind)))
    }
}

pub fn forward_aero<R: Rng + ?Sized>(ctx: &Context, params: &ModelParams, cfg: &ModelConfig, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
    expect_kind(cfg, &[ModelKind::Aero])?;
    forward(ctx, params, cfg, mode, rng)
}

pub fn forward_gatv2<R: Rng + ?Sized>(
    ctx: &Context,
    params: &ModelParams,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
    linear: bool,
) -> Result<ForwardPass> {
    expect_kind(cfg, &[ModelKind::Gatv2])?;
    forward(ctx, params, &ModelConfig { gatv2_linear: linear, ..cfg.clone() }, mode, rng)
}

pub fn forward_fagcn<R: Rng + ?Sized>(ctx: &Context, params: &ModelParams, cfg: &ModelConfig, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
    expect_kind(cfg, &[ModelKind::Fagcn])?;
    forward(ctx, params, cfg, mode, rng)
}

pub fn forward_gpr_dagnn<R: Rng + ?Sized>(
    ctx: &Context,
    params: &ModelParams,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardPass> {
    expect_kind(cfg, &[ModelKind::Gprgnn, ModelKind::Dagnn])?;
    forward(ctx, params, cfg, mode, rng)
}
