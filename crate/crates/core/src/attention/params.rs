use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Var};

/// Optimizer group: feature transform or attention/propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Ft,
    Prop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub group: Group,
    /// Whether optimizer weight decay applies.
    pub decay: bool,
    /// Counted among the model's additional (attention) parameters.
    pub additional: bool,
    /// Held fixed during training.
    pub frozen: bool,
}

/// Named, tagged parameter tensors of one model, in allocation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    tensors: Vec<ParamTensor>,
}

impl ModelParams {
    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.get(name)?.value)
    }

    /// Replaces the value of `name`, keeping its shape.
    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let t = self.tensors.iter_mut().find(|t| t.name == name).ok_or_else(|| Error::MissingParam(name.into()))?;
        if t.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_param",
                detail: format!("{name}: {:?} replaced by {:?}", t.value.shape(), value.shape()),
            });
        }
        t.value = value;
        Ok(())
    }

    pub fn values(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| t.value.clone()).collect()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.tensors.iter_mut().map(|t| &mut t.value)
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.iter().map(|t| t.name.clone()).collect()
    }

    /// Total scalar entries.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// Scalar entries tagged as additional.
    pub fn additional_len(&self) -> usize {
        self.tensors.iter().filter(|t| t.additional).map(|t| t.value.len()).sum()
    }

    /// Overwrites every entry with a uniform draw from `[-bound, bound]`.
    pub fn resample_uniform<R: Rng + ?Sized>(&mut self, bound: f64, rng: &mut R) {
        for t in &mut self.tensors {
            t.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-bound..=bound));
        }
    }

    /// Records every tensor on `tape`; frozen ones as constants.
    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let mut vars = HashMap::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let v = if t.frozen { tape.constant(t.value.clone())? } else { tape.param(t.value.clone())? };
            vars.insert(t.name.clone(), v);
        }
        Ok(BoundParams { vars })
    }

    /// Pairs already-recorded vars with the tensors, in order.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<BoundParams> {
        if vars.len() != self.tensors.len() {
            return Err(Error::InvalidArgument(format!("{} vars for {} params", vars.len(), self.tensors.len())));
        }
        Ok(BoundParams { vars: self.tensors.iter().map(|t| t.name.clone()).zip(vars.iter().copied()).collect() })
    }
}

/// Parameters of one forward pass, looked up by name.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn var_of(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    tensors: Vec<ParamTensor>,
}

impl Builder<'_> {
    fn glorot(&mut self, rows: usize, cols: usize) -> Matrix {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-a..a)).collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    }

    fn push(&mut self, name: String, value: Matrix, group: Group) -> &mut ParamTensor {
        let additional = group == Group::Prop;
        self.tensors.push(ParamTensor { name, value, group, decay: true, additional, frozen: false });
        self.tensors.last_mut().unwrap()
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize, group: Group) -> &mut ParamTensor {
        let v = self.glorot(rows, cols);
        self.push(name, v, group)
    }

    fn bias(&mut self, name: String, cols: usize, group: Group) -> &mut ParamTensor {
        self.push(name, Matrix::zeros(1, cols), group)
    }
}

/// Glorot-uniform weights and zero biases, except aero hop biases (one) and
/// gprgnn hop weights (PageRank profile). Deterministic per seed.
pub fn init_params(cfg: &ModelConfig, d_x: usize, d_c: usize, mlp_depth: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    if d_x == 0 || d_c == 0 {
        return Err(Error::InvalidArgument(format!("d_x = {d_x}, d_c = {d_c} must be positive")));
    }
    if !(1..=2).contains(&mlp_depth) {
        return Err(Error::InvalidArgument(format!("mlp_depth {mlp_depth} must be 1 or 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder { rng: &mut rng, tensors: Vec::new() };
    let (d_h, k_max) = (cfg.d_h, cfg.k_max);
    let decoupled = matches!(cfg.kind, ModelKind::Gprgnn | ModelKind::Dagnn);
    let mlp_out = if decoupled { d_c } else { d_h };

    if mlp_depth == 1 {
        b.weight("mlp.0.w".into(), d_x, mlp_out, Group::Ft);
        b.bias("mlp.0.b".into(), mlp_out, Group::Ft);
    } else {
        b.weight("mlp.0.w".into(), d_x, d_h, Group::Ft);
        b.bias("mlp.0.b".into(), d_h, Group::Ft);
        b.weight("mlp.1.w".into(), d_h, mlp_out, Group::Ft);
        b.bias("mlp.1.b".into(), mlp_out, Group::Ft);
    }

    match cfg.kind {
        ModelKind::Gatv2 => {
            for k in 1..=k_max {
                b.weight(format!("layer.{k}.w"), d_h, d_h, Group::Prop);
                if !cfg.fixed_attention {
                    b.weight(format!("layer.{k}.edge"), d_h, 2, Group::Prop);
                }
            }
        }
        ModelKind::Fagcn => {
            for k in 1..=k_max {
                b.weight(format!("layer.{k}.edge"), d_h, 2, Group::Prop);
            }
        }
        ModelKind::Gprgnn => {
            let a = cfg.alpha_ppr;
            for k in 0..=k_max {
                let w = if k == k_max { (1.0 - a).powi(k as i32) } else { a * (1.0 - a).powi(k as i32) };
                let t = b.push(format!("hop.{k}"), Matrix::scalar(w), Group::Prop);
                t.decay = false;
                if cfg.freeze_hop {
                    t.frozen = true;
                    t.additional = false;
                }
            }
        }
        ModelKind::Dagnn => {
            b.weight("hop.w".into(), d_c, 1, Group::Prop);
        }
        ModelKind::Aero => {
            let t = b.weight("hop.0.w".into(), d_h, 1, Group::Prop);
            t.additional = false;
            let t = b.push("hop.0.b".into(), Matrix::scalar(1.0), Group::Prop);
            t.additional = false;
            for k in 1..=k_max {
                b.weight(format!("layer.{k}.edge"), d_h, 2, Group::Prop);
                b.weight(format!("hop.{k}.w"), 2 * d_h, 1, Group::Prop);
                b.push(format!("hop.{k}.b"), Matrix::scalar(1.0), Group::Prop);
            }
        }
    }

    if !decoupled {
        b.weight("out.w".into(), d_h, d_c, Group::Ft);
        b.bias("out.b".into(), d_c, Group::Ft);
    }
    Ok(ModelParams { tensors: b.tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aero_hop_bias_is_one() {
        for seed in 0..5 {
            let p = init_params(&ModelConfig::new(ModelKind::Aero, 4), 10, 3, 1, seed).unwrap();
            for k in 0..=4 {
                assert_eq!(p.value(&format!("hop.{k}.b")).unwrap().get(0, 0), 1.0);
            }
        }
    }

    #[test]
    fn gprgnn_pagerank_profile() {
        let cfg = ModelConfig::new(ModelKind::Gprgnn, 3);
        let p = init_params(&cfg, 5, 2, 2, 0).unwrap();
        let hop = |k: usize| p.value(&format!("hop.{k}")).unwrap().get(0, 0);
        assert_eq!(hop(0), 0.1);
        assert!((hop(1) - 0.09).abs() < 1e-15);
        assert!((hop(3) - 0.729).abs() < 1e-15);
        assert!(p.tensors().iter().filter(|t| t.name.starts_with("hop")).all(|t| !t.decay));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = ModelConfig::new(ModelKind::Gatv2, 2);
        assert_eq!(init_params(&cfg, 7, 3, 1, 9).unwrap(), init_params(&cfg, 7, 3, 1, 9).unwrap());
        assert_ne!(init_params(&cfg, 7, 3, 1, 9).unwrap(), init_params(&cfg, 7, 3, 1, 10).unwrap());
    }

    #[test]
    fn set_checks_shape() {
        let mut p = init_params(&ModelConfig::new(ModelKind::Dagnn, 2), 4, 2, 2, 0).unwrap();
        assert!(p.set("hop.w", Matrix::zeros(2, 1)).is_ok());
        assert!(p.set("hop.w", Matrix::zeros(1, 2)).is_err());
        assert!(matches!(p.set("nope", Matrix::zeros(1, 1)), Err(Error::MissingParam(_))));
    }
}
