use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Splits};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAX_ATTEMPTS: usize = 20;

/// Stochastic block model with Gaussian class-mean features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmSpec {
    pub n: usize,
    pub classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Euclidean distance between any two class means.
    pub feature_mean_separation: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n: 200,
            classes: 2,
            p_intra: 0.05,
            p_inter: 0.005,
            feature_mean_separation: 1.0,
            feature_dim: 16,
            seed: 0,
        }
    }
}

/// Generates a balanced SBM dataset with a random 60/20/20 split.
///
/// When `p_intra > p_inter > 0` and `n >= 50` the graph is regenerated until
/// connected, at most 20 times.
pub fn gen_sbm(spec: &SbmSpec) -> Result<Dataset> {
    let SbmSpec { n, classes, p_intra, p_inter, feature_mean_separation, feature_dim, seed } = *spec;
    for (name, p) in [("p_intra", p_intra), ("p_inter", p_inter)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
        }
    }
    if classes == 0 || n < classes {
        return Err(Error::InvalidArgument(format!("need n >= classes >= 1, got n={n}, classes={classes}")));
    }
    if feature_dim < classes {
        return Err(Error::InvalidArgument(format!(
            "feature_dim {feature_dim} cannot hold {classes} orthogonal class means"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);

    let require_connected = p_intra > p_inter && p_inter > 0.0 && n >= 50;
    let attempts = if require_connected { MAX_ATTEMPTS } else { 1 };
    let mut graph = None;
    for _ in 0..attempts {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { p_intra } else { p_inter };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        if edges.is_empty() {
            return Err(Error::NoEdges);
        }
        let g = Graph::from_edges(n, &edges)?;
        if !require_connected || g.is_connected() {
            graph = Some(g);
            break;
        }
    }
    let graph = graph.ok_or(Error::Disconnected { attempts })?;

    // Means at sep/sqrt(2) along distinct axes are pairwise `sep` apart.
    let scale = feature_mean_separation / std::f64::consts::SQRT_2;
    let mut features = Matrix::zeros(n, feature_dim);
    for i in 0..n {
        let row = features.row_mut(i);
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        row[labels[i]] += scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let splits = Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    let dataset = Dataset {
        name: format!("sbm-n{n}-c{classes}-s{seed}"),
        graph,
        features,
        labels,
        num_classes: classes,
        splits,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily;

    fn spec(n: usize, p_intra: f64, p_inter: f64) -> SbmSpec {
        SbmSpec { n, classes: 2, p_intra, p_inter, feature_dim: 4, seed: 7, ..Default::default() }
    }

    #[test]
    fn forced_homophily() {
        let d = gen_sbm(&spec(20, 1.0, 0.0)).unwrap();
        assert_eq!(homophily(&d.graph, &d.labels).unwrap(), 1.0);
        let d = gen_sbm(&spec(20, 0.0, 1.0)).unwrap();
        assert_eq!(homophily(&d.graph, &d.labels).unwrap(), 0.0);
    }

    #[test]
    fn deterministic() {
        let a = gen_sbm(&spec(60, 0.2, 0.02)).unwrap();
        let b = gen_sbm(&spec(60, 0.2, 0.02)).unwrap();
        assert_eq!(a, b);
        assert!(a.graph.is_connected());
    }

    #[test]
    fn balanced_and_split() {
        let d = gen_sbm(&spec(50, 0.3, 0.05)).unwrap();
        assert_eq!(d.labels.iter().filter(|&&l| l == 0).count(), 25);
        assert_eq!((d.splits.train.len(), d.splits.val.len(), d.splits.test.len()), (30, 10, 10));
    }

    #[test]
    fn empty_graph_rejected() {
        assert!(matches!(gen_sbm(&spec(10, 0.0, 0.0)), Err(Error::NoEdges)));
        assert!(gen_sbm(&spec(10, 1.5, 0.0)).is_err());
    }

    #[test]
    fn hopeless_connectivity_errors() {
        let err = gen_sbm(&spec(400, 0.002, 0.0001)).unwrap_err();
        assert!(matches!(err, Error::Disconnected { attempts: 20 }));
    }
}
