//! Model configuration, parameters, per-layer edge and hop attention, and
//! additional-parameter counting.

mod count;
mod functions;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SplitKind;
use crate::tensor::Unary;

pub use count::{count_additional_params, enumerate_additional, CountKind, ParamCount};
pub use functions::{
    aero_edge_attention, aero_hop_attention, dagnn_hop_attention, fagcn_edge_attention, fagcn_edge_scale,
    fixed_attention, gatv2_edge_attention, rescale_factor, rescale_z, AeroEdge,
};
pub use params::{init_params, BoundParams, Group, ModelParams, ParamTensor};

/// The five trainable propagation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gatv2,
    Fagcn,
    Gprgnn,
    Dagnn,
    Aero,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Gatv2, ModelKind::Fagcn, ModelKind::Gprgnn, ModelKind::Dagnn, ModelKind::Aero];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gatv2 => "gatv2",
            ModelKind::Fagcn => "fagcn",
            ModelKind::Gprgnn => "gprgnn",
            ModelKind::Dagnn => "dagnn",
            ModelKind::Aero => "aero",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Hyperparameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub k_max: usize,
    pub d_h: usize,
    /// Rate for attention values, hidden MLP activations and (for models
    /// with fixed edge weights) input features.
    pub dropout: f64,
    /// Rescaling strength for aero's attention inputs.
    pub lambda: f64,
    /// Residual weight of fagcn's initial features.
    pub fagcn_eps: f64,
    /// Return probability of the PageRank hop initialization.
    pub alpha_ppr: f64,
    /// Depth of the input MLP (1 or 2). `None` picks 1 for sparse and 2 for
    /// dense splits (gprgnn and dagnn always use 2).
    pub mlp_depth: Option<usize>,
    /// Bound on sampled parameters in probes.
    pub param_clamp: f64,
    /// Nonlinearity inside gatv2 scores (leaky_relu or elu).
    pub gatv2_score_activation: Unary,
    /// Drop the between-layer nonlinearity of gatv2.
    pub gatv2_linear: bool,
    /// Between-layer nonlinearity of gatv2 when not linear.
    pub gatv2_layer_activation: Unary,
    /// Uniform fixed attention for gatv2 (GCN-like preset).
    pub fixed_attention: bool,
    /// Frozen PageRank hop weights for gprgnn (APPNP-like preset).
    pub freeze_hop: bool,
    /// Whether aero's edge support includes self-loops.
    pub aero_self_loops: bool,
    /// Dropout on `H^(0)`.
    pub input_dropout: bool,
    /// Dropout before aero's output layer.
    pub output_dropout: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Aero,
            k_max: 8,
            d_h: 64,
            dropout: 0.6,
            lambda: 0.5,
            fagcn_eps: 0.3,
            alpha_ppr: 0.1,
            mlp_depth: None,
            param_clamp: 1.0,
            gatv2_score_activation: Unary::LeakyRelu,
            gatv2_linear: false,
            gatv2_layer_activation: Unary::Elu,
            fixed_attention: false,
            freeze_hop: false,
            aero_self_loops: true,
            input_dropout: false,
            output_dropout: false,
        }
    }
}

impl ModelConfig {
    /// Default configuration for `kind`.
    pub fn new(kind: ModelKind, k_max: usize) -> Self {
        let d_h = if kind == ModelKind::Fagcn { 16 } else { 64 };
        Self { kind, k_max, d_h, ..Self::default() }
    }

    /// Resolves a model name, including the `gcn` and `appnp` presets.
    pub fn from_name(name: &str, k_max: usize) -> Result<Self> {
        match name {
            "gcn" => Ok(Self { fixed_attention: true, ..Self::new(ModelKind::Gatv2, k_max) }),
            "appnp" => Ok(Self { freeze_hop: true, ..Self::new(ModelKind::Gprgnn, k_max) }),
            other => Ok(Self::new(other.parse()?, k_max)),
        }
    }

    /// Name used in reports (`gcn`/`appnp` for the presets).
    pub fn label(&self) -> &'static str {
        match self.kind {
            ModelKind::Gatv2 if self.fixed_attention => "gcn",
            ModelKind::Gprgnn if self.freeze_hop => "appnp",
            k => k.name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k_max == 0 && self.kind != ModelKind::Aero {
            return bad(format!("{} needs k_max >= 1", self.kind));
        }
        if self.d_h == 0 {
            return bad("d_h must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.kind == ModelKind::Aero && (self.lambda.is_nan() || self.lambda <= 0.0) {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha_ppr) {
            return bad(format!("alpha_ppr {} not in [0, 1]", self.alpha_ppr));
        }
        if matches!(self.mlp_depth, Some(d) if d != 1 && d != 2) {
            return bad(format!("mlp_depth {:?} must be 1 or 2", self.mlp_depth));
        }
        if self.param_clamp.is_nan() || self.param_clamp <= 0.0 {
            return bad("param_clamp must be positive".into());
        }
        if !matches!(self.gatv2_score_activation, Unary::LeakyRelu | Unary::Elu) {
            return bad(format!("gatv2 score activation {:?} must be leaky_relu or elu", self.gatv2_score_activation));
        }
        Ok(())
    }

    /// Effective MLP depth for a split kind.
    pub fn resolved_mlp_depth(&self, split: SplitKind) -> usize {
        match self.kind {
            ModelKind::Gprgnn | ModelKind::Dagnn => self.mlp_depth.unwrap_or(2),
            _ => self.mlp_depth.unwrap_or(match split {
                SplitKind::Sparse => 1,
                SplitKind::Dense => 2,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!(matches!("gat".parse::<ModelKind>(), Err(Error::UnknownKind(_))));
        assert_eq!(ModelConfig::from_name("appnp", 4).unwrap().label(), "appnp");
        assert_eq!(ModelConfig::from_name("gcn", 4).unwrap().label(), "gcn");
        assert_eq!(ModelConfig::from_name("fagcn", 4).unwrap().d_h, 16);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { k_max: 0, ..ModelConfig::new(ModelKind::Gatv2, 1) }.validate().is_err());
        assert!(ModelConfig { k_max: 0, ..ModelConfig::new(ModelKind::Aero, 1) }.validate().is_ok());
    }
}
