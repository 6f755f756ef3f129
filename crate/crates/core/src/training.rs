//! Adam training with grouped weight decay, early stopping on validation
//! accuracy, and seed-by-depth sweeps.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{init_params, Group, ModelConfig, ModelKind, ModelParams};
use crate::diagnostics::{smoothness_series, write_csv_with_meta, SmoothnessOptions, SmoothnessSeries};
use crate::error::{io_err, Error, Result};
use crate::exec::Exec;
use crate::graph::{Dataset, SplitKind};
use crate::propagation::{forward, forward_untraced, Context, Mode, PropagationTrace};
use crate::tensor::{Adam, Matrix};

/// Offset separating the dropout stream from the initialization stream.
const DROPOUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// `None` picks 0.01 for sparse and 0.005 for dense splits.
    pub lr: Option<f64>,
    pub wd_ft: f64,
    pub wd_prop: f64,
    /// Extra decay added to every decay-tagged parameter regardless of group.
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// `None` infers the kind from the training fraction.
    pub split: Option<SplitKind>,
    /// Divide each feature row by its L1 norm before training.
    pub normalize_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr: None,
            wd_ft: 5e-4,
            wd_prop: 5e-4,
            l2: 0.0,
            max_epochs: 1000,
            patience: 100,
            seeds: vec![0],
            split: None,
            normalize_features: true,
        }
    }
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self { model, ..Default::default() }
    }

    pub fn split_kind(&self, dataset: &Dataset) -> SplitKind {
        self.split.unwrap_or_else(|| dataset.split_kind())
    }

    pub fn resolved_lr(&self, split: SplitKind) -> f64 {
        self.lr.unwrap_or(match split {
            SplitKind::Sparse => 0.01,
            SplitKind::Dense => 0.005,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
            }
        }
        for (name, v) in [("wd_ft", self.wd_ft), ("wd_prop", self.wd_prop), ("l2", self.l2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be non-negative")));
            }
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    /// The dataset as the model sees it.
    pub fn prepare(&self, dataset: &Dataset) -> Dataset {
        if self.normalize_features {
            dataset.row_normalized()
        } else {
            dataset.clone()
        }
    }

    /// Per-tensor decay rate: the group rate plus `l2` for decay-tagged
    /// tensors, zero otherwise.
    pub fn decay_rates(&self, params: &ModelParams) -> Vec<f64> {
        params
            .tensors()
            .iter()
            .map(|t| {
                if !t.decay {
                    return 0.0;
                }
                let group = match t.group {
                    Group::Ft => self.wd_ft,
                    Group::Prop => self.wd_prop,
                };
                group + self.l2
            })
            .collect()
    }
}

/// Outcome of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub model: String,
    pub depth: usize,
    pub seed: u64,
    /// Epoch whose parameters were restored (0 = initialization).
    pub best_epoch: usize,
    /// Optimizer steps taken.
    pub epochs: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation accuracy per epoch, index 0 being the initialization.
    pub val_acc_curve: Vec<f64>,
    pub seconds: f64,
    pub param_count: usize,
    #[serde(skip)]
    pub params: ModelParams,
}

impl RunResult {
    /// Eval-mode trace of the restored parameters on the input `cfg` trained on.
    pub fn trace(&self, dataset: &Dataset, cfg: &TrainConfig) -> Result<PropagationTrace> {
        let input = cfg.prepare(dataset);
        let ctx = Context::new(&input);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pass = forward(&ctx, &self.params, &cfg.model, Mode::Eval, &mut rng)?;
        pass.trace.ok_or_else(|| Error::InvalidArgument("forward pass returned no trace".into()))
    }
}

/// Fraction of `index` whose row argmax (ties to the lowest class) equals the label.
pub fn evaluate(logits: &Matrix, labels: &[usize], index: &[usize]) -> Result<f64> {
    if index.is_empty() {
        return Err(Error::EmptyIndexSet("evaluate"));
    }
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} logit rows", labels.len(), logits.rows())));
    }
    let mut correct = 0usize;
    for &i in index {
        if i >= logits.rows() {
            return Err(Error::NodeOutOfRange { index: i, n: logits.rows() });
        }
        let row = logits.row(i);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = c;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / index.len() as f64)
}

struct EvalPoint {
    val_acc: f64,
    val_loss: f64,
}

fn eval_point(ctx: &Context, params: &ModelParams, cfg: &ModelConfig, val: &Arc<Vec<usize>>) -> Result<(EvalPoint, Matrix)> {
    // Eval mode draws nothing from the generator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pass = forward_untraced(ctx, params, cfg, Mode::Eval, &mut rng)?;
    let loss = pass.tape.cross_entropy(pass.logits, ctx.labels.clone(), val.clone())?;
    let val_loss = pass.tape.value(loss).get(0, 0);
    let logits = pass.tape.value(pass.logits).clone();
    let val_acc = evaluate(&logits, &ctx.labels, val)?;
    Ok((EvalPoint { val_acc, val_loss }, logits))
}

/// Trains `cfg.model` on `dataset` from `seed`, restoring the parameters of
/// the best validation epoch.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    dataset.validate()?;
    let splits = &dataset.splits;
    for (name, set) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if set.is_empty() {
            return Err(Error::EmptyIndexSet(name));
        }
    }
    let start = Instant::now();
    let model = &cfg.model;
    let split = cfg.split_kind(dataset);
    let input = cfg.prepare(dataset);
    let ctx = Context::new(&input);
    let mlp_depth = model.resolved_mlp_depth(split);
    let mut params = init_params(model, dataset.features.cols(), dataset.num_classes, mlp_depth, seed)?;
    let decay = cfg.decay_rates(&params);
    let frozen: Vec<bool> = params.tensors().iter().map(|t| t.frozen).collect();
    let names = params.names();
    let mut adam = Adam::new(cfg.resolved_lr(split), &params.values())?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
    let train_idx = Arc::new(splits.train.clone());
    let val_idx = Arc::new(splits.val.clone());

    let (first, _) = eval_point(&ctx, &params, model, &val_idx)?;
    let mut best = (0usize, first.val_acc, first.val_loss, params.clone());
    let mut val_acc_curve = vec![first.val_acc];
    let mut val_loss = vec![first.val_loss];
    let mut train_loss = Vec::new();
    let mut since_best = 0usize;
    let mut epochs = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut pass = forward_untraced(&ctx, &params, model, Mode::Train, &mut dropout_rng)?;
        let loss = pass.tape.cross_entropy(pass.logits, ctx.labels.clone(), train_idx.clone())?;
        train_loss.push(pass.tape.value(loss).get(0, 0));
        let mut grads = pass.tape.backward(loss);
        let grad_list: Vec<Option<Matrix>> = names
            .iter()
            .zip(&frozen)
            .map(|(name, &fz)| if fz { None } else { pass.bound.var_of(name).and_then(|v| grads.take(v)) })
            .collect();
        let mut values = params.values();
        adam.step(&mut values, &grad_list, &decay)?;
        for (dst, src) in params.values_mut().zip(values) {
            *dst = src;
        }
        if !params.values_mut().all(|m| m.is_finite()) {
            return Err(Error::NonFinite { op: "adam_step" });
        }
        epochs = epoch;

        let (point, _) = eval_point(&ctx, &params, model, &val_idx)?;
        val_acc_curve.push(point.val_acc);
        val_loss.push(point.val_loss);
        let better = point.val_acc > best.1 || (point.val_acc == best.1 && point.val_loss < best.2);
        if better {
            best = (epoch, point.val_acc, point.val_loss, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                debug!("{} k={} seed {seed}: early stop at epoch {epoch}", model.label(), model.k_max);
                break;
            }
        }
    }

    let (best_epoch, val_acc, _, best_params) = best;
    let (_, logits) = eval_point(&ctx, &best_params, model, &val_idx)?;
    let test_acc = evaluate(&logits, &dataset.labels, &splits.test)?;
    info!(
        "{} k={} seed {seed}: best epoch {best_epoch}, val {val_acc:.4}, test {test_acc:.4}",
        model.label(),
        model.k_max
    );
    Ok(RunResult {
        model: model.label().to_string(),
        depth: model.k_max,
        seed,
        best_epoch,
        epochs,
        val_acc,
        test_acc,
        train_loss,
        val_loss,
        val_acc_curve,
        seconds: start.elapsed().as_secs_f64(),
        param_count: best_params.total_len(),
        params: best_params,
    })
}

/// What a depth sweep runs and records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Append the mean `S(T^(k))` series per depth.
    pub smoothness: bool,
    pub n_cap: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            depths: vec![2, 4, 8, 16, 32, 64],
            seeds: vec![0, 1, 2, 3, 4],
            smoothness: false,
            n_cap: crate::diagnostics::DEFAULT_N_CAP,
        }
    }
}

/// Mean and sample SD of the test accuracy of one model at one depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub kind: ModelKind,
    pub depth: usize,
    pub mean: f64,
    pub sd: f64,
    pub seeds: usize,
    /// Highest mean among this model's depths.
    pub best: bool,
    /// Seed-mean `S(T^(k))` for `k = 1..=depth`.
    pub smoothness: Option<Vec<f64>>,
    pub smoothness_estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunResult>,
}

impl SweepTable {
    pub fn row(&self, model: &str, depth: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.model == model && r.depth == depth)
    }

    pub fn best(&self, model: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.model == model && r.best)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every model at every depth for every seed, concurrently under `exec`.
pub fn depth_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    models: &[ModelConfig],
    spec: &SweepSpec,
    exec: Exec,
) -> Result<SweepTable> {
    if spec.depths.is_empty() || spec.seeds.is_empty() || models.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one model, depth and seed".into()));
    }
    let mut jobs = Vec::new();
    for model in models {
        for &depth in &spec.depths {
            let cfg = TrainConfig { model: ModelConfig { k_max: depth, ..model.clone() }, ..base.clone() };
            cfg.validate()?;
            for &seed in &spec.seeds {
                jobs.push((cfg.clone(), seed));
            }
        }
    }
    let smooth_opts = SmoothnessOptions { exec: Exec::Sequential, ..Default::default() };
    let outcomes = exec.map(&jobs, |(cfg, seed)| -> Result<(RunResult, Option<SmoothnessSeries>)> {
        let run = train(dataset, cfg, *seed)?;
        let series = if spec.smoothness {
            let trace = run.trace(dataset, cfg)?;
            Some(smoothness_series(&trace, spec.n_cap, &SmoothnessOptions { seed: *seed, ..smooth_opts })?)
        } else {
            None
        };
        Ok((run, series))
    });
    let outcomes: Vec<_> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let per = spec.seeds.len();
    for (chunk, jobs_chunk) in outcomes.chunks(per).zip(jobs.chunks(per)) {
        let cfg = &jobs_chunk[0].0;
        let accs: Vec<f64> = chunk.iter().map(|(r, _)| r.test_acc).collect();
        let (mean, sd) = mean_sd(&accs);
        let smoothness = chunk.iter().map(|(_, s)| s.as_ref()).collect::<Option<Vec<_>>>().map(|all| {
            (0..cfg.model.k_max).map(|k| all.iter().map(|s| s.values[k]).sum::<f64>() / all.len() as f64).collect()
        });
        rows.push(SweepRow {
            model: cfg.model.label().to_string(),
            kind: cfg.model.kind,
            depth: cfg.model.k_max,
            mean,
            sd,
            seeds: per,
            best: false,
            smoothness,
            smoothness_estimated: chunk.iter().any(|(_, s)| s.as_ref().is_some_and(|s| s.estimated)),
        });
    }
    let labels: Vec<String> = rows.iter().map(|r| r.model.clone()).collect();
    for label in labels {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.model == label)
            .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
                Some((_, m)) if m >= r.mean => acc,
                _ => Some((i, r.mean)),
            });
        if let Some((i, _)) = best {
            rows[i].best = true;
        }
    }
    Ok(SweepTable { rows, runs: outcomes.into_iter().map(|(r, _)| r).collect() })
}

pub const RUNS_HEADER: [&str; 7] = ["seed", "depth", "model", "val_acc", "test_acc", "epochs", "seconds"];

/// Writes `runs.csv` rows plus the metadata sidecar.
pub fn write_runs_csv<M: Serialize>(path: &Path, runs: &[RunResult], meta: &M) -> Result<()> {
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.depth.to_string(),
                r.model.clone(),
                format!("{:.6}", r.val_acc),
                format!("{:.6}", r.test_acc),
                r.epochs.to_string(),
                format!("{:.3}", r.seconds),
            ]
        })
        .collect();
    write_csv_with_meta(path, &RUNS_HEADER, &rows, meta)
}

/// Writes the per-model best rows of `table` as JSON.
pub fn write_best_json(path: &Path, table: &SweepTable) -> Result<()> {
    let best: Vec<&SweepRow> = table.rows.iter().filter(|r| r.best).collect();
    std::fs::write(path, serde_json::to_string_pretty(&best)? + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let one_hot = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(evaluate(&one_hot, &[0, 1, 0], &[0, 1, 2]).unwrap(), 1.0);
        let flat = Matrix::zeros(4, 3);
        assert_eq!(evaluate(&flat, &[0, 1, 2, 0], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(matches!(evaluate(&flat, &[0; 4], &[]), Err(Error::EmptyIndexSet(_))));
    }

    #[test]
    fn decay_follows_tags() {
        let mut cfg = TrainConfig::new(ModelConfig::new(ModelKind::Gprgnn, 2));
        cfg.wd_ft = 0.1;
        cfg.wd_prop = 0.2;
        cfg.l2 = 0.01;
        let p = init_params(&cfg.model, 3, 2, 2, 0).unwrap();
        for (t, d) in p.tensors().iter().zip(cfg.decay_rates(&p)) {
            let want = match (t.decay, t.group) {
                (false, _) => 0.0,
                (true, Group::Ft) => 0.11,
                (true, Group::Prop) => 0.21,
            };
            assert_eq!(d, want, "{}", t.name);
        }
    }

    #[test]
    fn config_invariants() {
        let mut cfg = TrainConfig { patience: 10, max_epochs: 5, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.max_epochs = 10;
        cfg.lr = Some(0.0);
        assert!(cfg.validate().is_err());
        cfg.lr = None;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.resolved_lr(SplitKind::Dense), 0.005);
    }
}
