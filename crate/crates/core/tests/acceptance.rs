//! Acceptance gate. Each test prints one `PASS`/`FAIL` line for its criterion.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use aero_attn::attention::{count_additional_params, enumerate_additional, CountKind, ModelConfig, ModelKind};
use aero_attn::diagnostics::{
    complete_graph_trace, layer_product, smoothness, smoothness_series, unsmoothing_construct, v2os_probe, Resistance,
    SmoothnessOptions, DEFAULT_N_CAP,
};
use aero_attn::graph::{gen_sbm, homophily, load_dataset, SbmSpec};
use aero_attn::oracles::{
    fagcn_unroll_oracle, finite_difference_oracle, random_graph, random_params, synthetic_dataset, trace_of,
    walk_decomposition_oracle, OracleReport,
};
use aero_attn::tensor::Matrix;
use aero_attn::training::{depth_sweep, SweepSpec, TrainConfig};
use aero_attn::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes to the stdout handle directly so the line survives libtest capture.
fn verdict(id: u32, title: &str, pass: bool, detail: &str) -> bool {
    let line = format!("{} [{id}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    pass
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn worst(reports: &[OracleReport]) -> String {
    reports
        .iter()
        .max_by(|a, b| a.max_err.total_cmp(&b.max_err))
        .map_or_else(String::new, |r| format!("worst {} at {:.2e} (tol {:.0e})", r.name, r.max_err, r.tol))
}

#[test]
fn c01_gradients_match_finite_differences() {
    let start = Instant::now();
    let reports = finite_difference_oracle(0).unwrap();
    let elapsed = start.elapsed();
    let ok = reports.len() == 5 && reports.iter().all(|r| r.pass) && within(elapsed, 30);
    let detail = format!("{}, {:.1}s", worst(&reports), elapsed.as_secs_f64());
    assert!(verdict(1, "gradient check, five models", ok, &detail));
}

#[test]
fn c02_walk_decomposition_matches_t() {
    let start = Instant::now();
    let mut reports = Vec::new();
    for seed in 0..3 {
        reports.extend(walk_decomposition_oracle(seed, 8, 4).unwrap());
    }
    let elapsed = start.elapsed();
    let ok = reports.iter().all(|r| r.pass && r.tol <= 1e-10) && within(elapsed, 60);
    let detail = format!("{}, {:.1}s", worst(&reports), elapsed.as_secs_f64());
    assert!(verdict(2, "path decomposition vs compute_T", ok, &detail));
}

#[test]
fn c03_decay_on_random_graphs() {
    let start = Instant::now();
    let k_max = 64;
    let exact = SmoothnessOptions { exact_max_n: usize::MAX, exec: Exec::Sequential, ..Default::default() };
    let mut failures = Vec::new();
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    for g in 0..10u64 {
        let graph = random_graph(30, 0.1, 100 + g).unwrap();
        assert!(graph.is_connected() && !graph.is_bipartite());
        let data = synthetic_dataset(graph, 4, 2, g).unwrap();
        for kind in [ModelKind::Gatv2, ModelKind::Gprgnn, ModelKind::Dagnn, ModelKind::Fagcn] {
            let cfg = ModelConfig { d_h: 4, dropout: 0.0, ..ModelConfig::new(kind, k_max) };
            let params = random_params(&cfg, &data, 1.0, 1000 + g).unwrap();
            let trace = trace_of(&data, &cfg, &params).unwrap();
            match kind {
                ModelKind::Gatv2 => {
                    let s = smoothness_series(&trace, DEFAULT_N_CAP, &exact).unwrap().values;
                    let rise = s.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                    worst_rise = worst_rise.max(rise);
                    if rise > 1e-12 {
                        failures.push(format!("gatv2 graph {g} rises by {rise:.2e}"));
                    }
                }
                ModelKind::Gprgnn | ModelKind::Dagnn => {
                    let s = smoothness_series(&trace, DEFAULT_N_CAP, &exact).unwrap().values;
                    let ratio = s[k_max - 1] / s[0];
                    worst_ratio = worst_ratio.max(ratio);
                    if ratio.is_nan() || s[k_max - 1] >= 0.01 * s[0] {
                        failures.push(format!("{kind} graph {g} ratio {ratio:.2e}"));
                    }
                }
                ModelKind::Fagcn => {
                    let first = layer_product(&trace, 1, DEFAULT_N_CAP).unwrap().max_abs();
                    let last = layer_product(&trace, k_max, DEFAULT_N_CAP).unwrap().max_abs();
                    if last.is_nan() || last >= first {
                        failures.push(format!("fagcn graph {g}: {last:.2e} >= {first:.2e}"));
                    }
                }
                ModelKind::Aero => unreachable!(),
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && within(elapsed, 120);
    let detail = format!(
        "gatv2 largest step {worst_rise:.2e}, gprgnn/dagnn largest S64/S1 {worst_ratio:.2e}, {} failures, {:.1}s {}",
        failures.len(),
        elapsed.as_secs_f64(),
        failures.join("; ")
    );
    assert!(verdict(3, "decay on 10 random graphs", ok, detail.trim_end()));
}

#[test]
fn c04_oversmoothing_probes() {
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let r = v2os_probe(kind, 100, 0).unwrap();
        let again = v2os_probe(kind, 100, 0).unwrap();
        let expected = match kind {
            ModelKind::Gatv2 | ModelKind::Gprgnn | ModelKind::Dagnn => Resistance::V2OS,
            ModelKind::Fagcn => Resistance::WR2OS,
            ModelKind::Aero => Resistance::SR2OS,
        };
        let mut good = r.classification == expected && r == again;
        if expected == Resistance::V2OS {
            good &= r.edge_equal == 100 && r.hop_equal == 100;
        }
        if kind == ModelKind::Fagcn {
            good &= r.edge_witness.is_some() && r.hop_witness.is_none();
        }
        ok &= good;
        lines.push(format!("{kind}={:?} ({}/{} edge, {}/{} hop equal)", r.classification, r.edge_equal, 100, r.hop_equal, 100));
    }
    assert!(verdict(4, "V2OS/WR2OS/SR2OS probes", ok, &lines.join(", ")));
}

#[test]
fn c05_unsmoothing_construction() {
    let mut ok = true;
    let mut lines = Vec::new();
    for (n, seed) in [(5, 0u64), (7, 1), (9, 2)] {
        let trace = complete_graph_trace(n, 3, seed).unwrap();
        for k in 0..3 {
            let u = unsmoothing_construct(&trace, k).unwrap();
            ok &= u.product_smoothness <= 1e-12 && u.smoothness > 1e-9;
            lines.push(format!("{:.2e}", u.smoothness));
        }
    }
    let detail = format!("S(Pi A) = 0, S(T^(k+1)) after construction: {}", lines.join(" "));
    assert!(verdict(5, "unsmoothing construction", ok, &detail));
}

#[test]
fn c06_additional_parameter_counts() {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for kind in CountKind::ALL {
        for k_max in [4, 16] {
            for d_h in [16, 64] {
                let closed = count_additional_params(kind, k_max, d_h, 7).unwrap().count;
                let counted = enumerate_additional(kind, k_max, d_h, 7).unwrap();
                checked += 1;
                if closed != counted {
                    mismatches.push(format!("{kind} k={k_max} d={d_h}: {closed} vs {counted}"));
                }
            }
        }
    }
    let appnp = count_additional_params(CountKind::Appnp, 8, 64, 7).unwrap().count;
    let ok = mismatches.is_empty() && appnp == 0;
    let detail = format!("{checked} settings, {} mismatches, appnp = {appnp} {}", mismatches.len(), mismatches.join("; "));
    assert!(verdict(6, "additional parameter counts", ok, detail.trim_end()));
}

#[test]
fn c07_fagcn_unrolled_form() {
    let r = fagcn_unroll_oracle(7, 50, 30, 8).unwrap();
    let ok = r.pass && r.cases == 50 && r.tol <= 1e-10;
    assert!(verdict(7, "fagcn recursive vs unrolled", ok, &format!("max abs diff {:.2e} over {} draws", r.max_err, r.cases)));
}

#[test]
fn c08_smoothness_unit_values_and_range() {
    let units = smoothness(&Matrix::identity(2)).unwrap() == 2.0
        && smoothness(&Matrix::filled(2, 2, 1.0)).unwrap() == 0.0
        && smoothness(&Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]])).unwrap() == 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let (r, c) = (rng.random_range(2..=12), rng.random_range(1..=12));
        let sparse = rng.random_bool(0.3);
        let data = (0..r * c)
            .map(|_| if sparse && rng.random_bool(0.5) { 0.0 } else { rng.random_range(-3.0..3.0) })
            .collect();
        let s = smoothness(&Matrix::from_vec(r, c, data).unwrap()).unwrap();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let ok = units && lo >= 0.0 && hi <= 2.0;
    let detail = format!("unit values {}, random range [{lo:.4}, {hi:.4}]", if units { "exact" } else { "wrong" });
    assert!(verdict(8, "smoothness score", ok, &detail));
}

fn cora_dir() -> PathBuf {
    std::env::var_os("AERO_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cora"))
}

#[test]
fn c09_cora() {
    let dir = cora_dir();
    if !dir.join("meta.json").exists() {
        // Cannot be evaluated without the dataset; reported, not passed.
        verdict(9, "cora homophily and accuracy", false, &format!("dataset not found at {} (set AERO_CORA_DIR)", dir.display()));
        return;
    }
    let start = Instant::now();
    let data = load_dataset(&dir).unwrap();
    let h = homophily(&data.graph, &data.labels).unwrap();
    let models = [ModelConfig::new(ModelKind::Aero, 8)];
    let spec = SweepSpec { depths: vec![8, 16, 32], seeds: (0..5).collect(), ..Default::default() };
    let base = TrainConfig::new(models[0].clone());
    let table = depth_sweep(&data, &base, &models, &spec, Exec::default()).unwrap();
    // Depth chosen by mean validation accuracy, reported on test.
    let val_mean = |d: usize| {
        let runs: Vec<_> = table.runs.iter().filter(|r| r.depth == d).collect();
        runs.iter().map(|r| r.val_acc).sum::<f64>() / runs.len() as f64
    };
    let chosen = [8, 16, 32].into_iter().max_by(|a, b| val_mean(*a).total_cmp(&val_mean(*b))).unwrap();
    let acc = table.rows.iter().find(|r| r.depth == chosen).unwrap().mean;
    let elapsed = start.elapsed();
    let ok = (h - 0.77).abs() <= 0.02 && acc >= 0.78 && within(elapsed, 600);
    let detail = format!("homophily {h:.3}, aero k={chosen} mean test {acc:.4}, {:.0}s", elapsed.as_secs_f64());
    assert!(verdict(9, "cora homophily and accuracy", ok, &detail));
}

#[test]
fn c10_depth_robustness_on_heterophilic_sbm() {
    let start = Instant::now();
    let data = gen_sbm(&SbmSpec {
        n: 300,
        classes: 3,
        p_intra: 0.005,
        p_inter: 0.03,
        feature_mean_separation: 2.0,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    let seeds: Vec<u64> = (0..5).collect();
    let base = TrainConfig { max_epochs: 200, patience: 50, ..TrainConfig::new(ModelConfig::new(ModelKind::Aero, 2)) };
    // Dropout 0.5 from the tuning grid; at the 0.6 default occasional
    // depth-32 aero runs overflow under attention dropout.
    let aero = ModelConfig { dropout: 0.5, ..ModelConfig::new(ModelKind::Aero, 2) };
    let gatv2 = ModelConfig { dropout: 0.5, ..ModelConfig::new(ModelKind::Gatv2, 2) };
    let aero_spec = SweepSpec { depths: vec![4, 8, 16, 32], seeds: seeds.clone(), smoothness: true, ..Default::default() };
    let gat_spec = SweepSpec { depths: vec![32], seeds, smoothness: true, ..Default::default() };
    let aero_table = depth_sweep(&data, &base, &[aero], &aero_spec, Exec::default()).unwrap();
    let gat_table = depth_sweep(&data, &base, &[gatv2], &gat_spec, Exec::default()).unwrap();
    let elapsed = start.elapsed();

    let best = aero_table.rows.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
    let at32 = aero_table.rows.iter().find(|r| r.depth == 32).unwrap();
    let s_aero = at32.smoothness.as_ref().unwrap()[31];
    let s_gat = gat_table.rows[0].smoothness.as_ref().unwrap()[31];
    let gap = best.mean - at32.mean;
    let ok = gap <= 0.02 && s_aero > s_gat && within(elapsed, 300);
    let curve: Vec<String> = aero_table.rows.iter().map(|r| format!("k{}={:.3}", r.depth, r.mean)).collect();
    let detail = format!(
        "aero {} (k32 gap {:.3}), S(T^32) aero {s_aero:.3e} vs gatv2 {s_gat:.3e}, {:.0}s",
        curve.join(" "),
        gap,
        elapsed.as_secs_f64()
    );
    assert!(verdict(10, "depth robustness on heterophilic sbm", ok, &detail));
}
