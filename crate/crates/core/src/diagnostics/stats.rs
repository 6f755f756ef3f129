use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{io_err, Result};
use crate::propagation::{HopOrientation, PropagationTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaStats {
    /// Hop index used for reporting (reversed for fagcn).
    pub k: usize,
    /// Layer the values come from.
    pub layer: usize,
    pub mean: f64,
    pub sd: f64,
    /// `||alpha^(k) - alpha^(k-1)||_F` over the shared support; `None` at `k = 1`.
    pub frob_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaStats {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttnStats {
    pub alpha: Vec<AlphaStats>,
    pub gamma: Vec<GammaStats>,
}

/// Population mean and SD. Values are shifted by the first element first, so
/// a constant sequence has SD exactly zero.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let shift = xs[0];
    let n = xs.len() as f64;
    let m: f64 = xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - shift - m).powi(2)).sum::<f64>() / n;
    (shift + m, var.sqrt())
}

/// Per-layer distribution summaries of edge and hop attention.
pub fn attn_stats(trace: &PropagationTrace) -> Result<AttnStats> {
    let mut alpha = Vec::with_capacity(trace.k_max);
    for layer in 1..=trace.k_max {
        let values = trace.edge_values(layer)?;
        let (mean, sd) = mean_sd(values);
        let frob_diff = if layer > 1 {
            let prev = trace.edge_values(layer - 1)?;
            Some(values.iter().zip(prev.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        } else {
            None
        };
        let k = match trace.orientation {
            HopOrientation::Forward => layer,
            HopOrientation::Reversed => trace.k_max - layer + 1,
        };
        alpha.push(AlphaStats { k, layer, mean, sd, frob_diff });
    }
    alpha.sort_by_key(|a| a.k);
    let gamma = (0..=trace.k_max)
        .map(|k| {
            let (mean, sd) = mean_sd(trace.hop_weights(k)?);
            Ok(GammaStats { k, mean, sd })
        })
        .collect::<Result<_>>()?;
    Ok(AttnStats { alpha, gamma })
}

/// Writes `path` as CSV with `header`, plus `<stem>.meta.json` next to it
/// holding `meta`.
pub fn write_csv_with_meta<M: Serialize>(path: &Path, header: &[&str], rows: &[Vec<String>], meta: &M) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    fs::write(path, s).map_err(io_err(path))?;
    let stem = path.file_stem().and_then(|x| x.to_str()).unwrap_or("output");
    let meta_path = path.with_file_name(format!("{stem}.meta.json"));
    fs::write(&meta_path, serde_json::to_string_pretty(meta)? + "\n").map_err(io_err(meta_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sd_is_zero() {
        let (m, sd) = mean_sd(&[0.1; 7]);
        assert_eq!((m, sd), (0.1, 0.0));
        let (m, sd) = mean_sd(&[1.0, 3.0]);
        assert_eq!((m, sd), (2.0, 1.0));
    }
}
