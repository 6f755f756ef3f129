use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{init_params, ModelConfig, ModelKind};
use crate::error::{Error, Result};

/// Models covered by the additional-parameter table, including baselines
/// that are only counted, never trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CountKind {
    Aero,
    Fagcn,
    Gatv2,
    Gcn,
    GcnIi,
    ADgn,
    Gt,
    Dmp,
    Appnp,
    Dagnn,
    Gprgnn,
}

impl CountKind {
    pub const ALL: [CountKind; 11] = [
        CountKind::Aero,
        CountKind::Fagcn,
        CountKind::Gatv2,
        CountKind::Gcn,
        CountKind::GcnIi,
        CountKind::ADgn,
        CountKind::Gt,
        CountKind::Dmp,
        CountKind::Appnp,
        CountKind::Dagnn,
        CountKind::Gprgnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CountKind::Aero => "aero",
            CountKind::Fagcn => "fagcn",
            CountKind::Gatv2 => "gatv2",
            CountKind::Gcn => "gcn",
            CountKind::GcnIi => "gcn-ii",
            CountKind::ADgn => "a-dgn",
            CountKind::Gt => "gt",
            CountKind::Dmp => "dmp",
            CountKind::Appnp => "appnp",
            CountKind::Dagnn => "dagnn",
            CountKind::Gprgnn => "gprgnn",
        }
    }
}

impl fmt::Display for CountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CountKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CountKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub kind: CountKind,
    pub count: usize,
    /// Asymptotic class, e.g. `Theta(k_max*d_H)`.
    pub order: &'static str,
}

/// Closed-form count of attention/propagation parameters beyond the input
/// and output transforms.
pub fn count_additional_params(kind: CountKind, k_max: usize, d_h: usize, d_c: usize) -> Result<ParamCount> {
    if k_max == 0 || d_h == 0 || d_c == 0 {
        return Err(Error::InvalidArgument(format!("k_max={k_max}, d_H={d_h}, d_C={d_c} must be positive")));
    }
    let (k, d) = (k_max, d_h);
    let (count, order) = match kind {
        CountKind::Aero => (k * (4 * d + 1), "Theta(k_max*d_H)"),
        CountKind::Fagcn => (2 * k * d, "Theta(k_max*d_H)"),
        CountKind::Gatv2 => (k * (d * d + 2 * d), "Theta(k_max*d_H^2)"),
        CountKind::Gcn | CountKind::GcnIi => (k * d * d, "Theta(k_max*d_H^2)"),
        CountKind::ADgn => (2 * d * d, "Theta(d_H^2)"),
        CountKind::Gt => (4 * k * d * d, "Theta(k_max*d_H^2)"),
        CountKind::Dmp => (2 * k * d * d, "Theta(k_max*d_H^2)"),
        CountKind::Appnp => (0, "0"),
        CountKind::Dagnn => (d_c, "Theta(d_C)"),
        CountKind::Gprgnn => (k + 1, "Theta(k_max)"),
    };
    Ok(ParamCount { kind, count, order })
}

/// Shapes of the additional tensors of baselines that have no forward pass
/// here: per-layer weights for GCN-II, one antisymmetric pair for A-DGN,
/// query/key/value/output per layer for GT, two maps per layer for DMP.
fn baseline_layout(kind: CountKind, k_max: usize, d_h: usize) -> Vec<(String, usize, usize)> {
    let per_layer = |names: &[&str]| {
        (1..=k_max)
            .flat_map(|k| names.iter().map(move |n| (format!("layer.{k}.{n}"), d_h, d_h)))
            .collect::<Vec<_>>()
    };
    match kind {
        CountKind::GcnIi => per_layer(&["w"]),
        CountKind::ADgn => vec![("shared.w".into(), d_h, d_h), ("shared.v".into(), d_h, d_h)],
        CountKind::Gt => per_layer(&["q", "k", "v", "o"]),
        CountKind::Dmp => per_layer(&["w_msg", "w_self"]),
        _ => Vec::new(),
    }
}

/// Counts additional entries by allocating them: from the initialized
/// parameters for trainable kinds and presets, from a layout table for the
/// remaining baselines.
pub fn enumerate_additional(kind: CountKind, k_max: usize, d_h: usize, d_c: usize) -> Result<usize> {
    let trainable = |cfg: ModelConfig| -> Result<usize> {
        let cfg = ModelConfig { d_h, ..cfg };
        Ok(init_params(&cfg, 3, d_c, 1, 0)?.additional_len())
    };
    match kind {
        CountKind::Aero => trainable(ModelConfig::new(ModelKind::Aero, k_max)),
        CountKind::Fagcn => trainable(ModelConfig::new(ModelKind::Fagcn, k_max)),
        CountKind::Gatv2 => trainable(ModelConfig::new(ModelKind::Gatv2, k_max)),
        CountKind::Dagnn => trainable(ModelConfig::new(ModelKind::Dagnn, k_max)),
        CountKind::Gprgnn => trainable(ModelConfig::new(ModelKind::Gprgnn, k_max)),
        CountKind::Gcn => trainable(ModelConfig::from_name("gcn", k_max)?),
        CountKind::Appnp => trainable(ModelConfig::from_name("appnp", k_max)?),
        CountKind::GcnIi | CountKind::ADgn | CountKind::Gt | CountKind::Dmp => {
            Ok(baseline_layout(kind, k_max, d_h).iter().map(|(_, r, c)| r * c).sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(count_additional_params(CountKind::Appnp, 4, 64, 7).unwrap().count, 0);
        assert_eq!(count_additional_params(CountKind::Aero, 4, 64, 7).unwrap().count, 1028);
        assert_eq!(count_additional_params(CountKind::Fagcn, 8, 16, 7).unwrap().count, 256);
        assert!(matches!("mixhop".parse::<CountKind>(), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn enumeration_matches_formula() {
        for kind in CountKind::ALL {
            for (k, d) in [(4, 16), (16, 64)] {
                let want = count_additional_params(kind, k, d, 5).unwrap().count;
                assert_eq!(enumerate_additional(kind, k, d, 5).unwrap(), want, "{kind} k={k} d={d}");
            }
        }
    }
}
