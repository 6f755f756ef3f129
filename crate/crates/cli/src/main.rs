use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aero_attn::attention::{count_additional_params, CountKind, ModelConfig, ModelKind};
use aero_attn::diagnostics::{
    attn_stats, smoothness_series, v2os_probe, write_csv_with_meta, ProbeReport, SmoothnessOptions, DEFAULT_N_CAP,
};
use aero_attn::exec::with_jobs;
use aero_attn::graph::{gen_sbm, load_dataset, write_dataset, Dataset, SbmSpec};
use aero_attn::oracles::{run_suite, Suite};
use aero_attn::training::{depth_sweep, train, write_best_json, write_runs_csv, RunResult, SweepSpec, TrainConfig};
use aero_attn::Exec;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

const JOBS_ENV: &str = "AERO_ATTN_JOBS";

#[derive(Parser)]
#[command(name = "aero-attn", version, about = "Deep graph attention experiments and diagnostics")]
struct Cli {
    /// Worker threads for independent runs (overridden by AERO_ATTN_JOBS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every model/depth/seed combination and write runs.csv.
    Train(ExperimentArgs),
    /// Depth sweep with mean/SD per depth, best.json and per-depth smoothness.
    Sweep(ExperimentArgs),
    /// Smoothness, attention statistics and over-smoothing probes.
    Diagnose(ExperimentArgs),
    /// Exact count of additional attention parameters.
    Paramcount(ParamcountArgs),
    /// Generate an SBM dataset directory.
    Gen(GenArgs),
    /// Run the built-in oracle suites.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model names (aero, gatv2, fagcn, gprgnn, dagnn, gcn, appnp).
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    depth: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    wd_ft: Option<f64>,
    #[arg(long)]
    wd_prop: Option<f64>,
    #[arg(long)]
    linear_gatv2: bool,
    #[arg(long)]
    n_cap: Option<usize>,
    #[arg(long)]
    d_h: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct ParamcountArgs {
    kind: String,
    #[arg(long)]
    k_max: usize,
    #[arg(long)]
    d_h: usize,
    #[arg(long, default_value_t = 7)]
    d_c: usize,
}

#[derive(Args)]
struct GenArgs {
    /// JSON generator spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    p_intra: Option<f64>,
    #[arg(long)]
    p_inter: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the reports as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad input rather than a failed run; exits with code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Model settings applied on top of each model's own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelOverrides {
    d_h: Option<usize>,
    dropout: Option<f64>,
    lambda: Option<f64>,
    linear_gatv2: Option<bool>,
    fagcn_eps: Option<f64>,
    alpha_ppr: Option<f64>,
    mlp_depth: Option<usize>,
    output_dropout: Option<bool>,
    input_dropout: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    lr: Option<f64>,
    wd_ft: f64,
    wd_prop: f64,
    l2: f64,
    max_epochs: usize,
    patience: usize,
    normalize_features: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lr: d.lr,
            wd_ft: d.wd_ft,
            wd_prop: d.wd_prop,
            l2: d.l2,
            max_epochs: d.max_epochs,
            patience: d.patience,
            normalize_features: d.normalize_features,
        }
    }
}

/// Everything a command needs. Written back, fully resolved, next to every
/// output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSpec {
    command: String,
    data: Option<PathBuf>,
    generator: Option<SbmSpec>,
    models: Vec<String>,
    depths: Vec<usize>,
    seeds: Vec<u64>,
    model: ModelOverrides,
    train: TrainSettings,
    out: PathBuf,
    n_cap: usize,
    smoothness: bool,
    probe_samples: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            command: String::new(),
            data: None,
            generator: None,
            models: Vec::new(),
            depths: Vec::new(),
            seeds: Vec::new(),
            model: ModelOverrides::default(),
            train: TrainSettings::default(),
            out: PathBuf::from("out"),
            n_cap: DEFAULT_N_CAP,
            smoothness: true,
            probe_samples: 100,
        }
    }
}

/// Per-model configurations stored in every sidecar.
#[derive(Serialize)]
struct Meta<'a> {
    spec: &'a ExperimentSpec,
    resolved: &'a [TrainConfig],
    version: &'static str,
}

impl ExperimentSpec {
    fn load(args: &ExperimentArgs, command: &str) -> Result<Self> {
        let mut spec = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => ExperimentSpec::default(),
        };
        spec.command = command.to_string();
        if !args.model.is_empty() {
            spec.models = args.model.clone();
        }
        if !args.depth.is_empty() {
            spec.depths = args.depth.clone();
        }
        if !args.seed.is_empty() {
            spec.seeds = args.seed.clone();
        }
        if let Some(d) = &args.data {
            spec.data = Some(d.clone());
        }
        if let Some(o) = &args.out {
            spec.out = o.clone();
        }
        let m = &mut spec.model;
        m.lambda = args.lambda.or(m.lambda);
        m.dropout = args.dropout.or(m.dropout);
        m.d_h = args.d_h.or(m.d_h);
        if args.linear_gatv2 {
            m.linear_gatv2 = Some(true);
        }
        let t = &mut spec.train;
        t.lr = args.lr.or(t.lr);
        t.wd_ft = args.wd_ft.unwrap_or(t.wd_ft);
        t.wd_prop = args.wd_prop.unwrap_or(t.wd_prop);
        t.max_epochs = args.epochs.unwrap_or(t.max_epochs);
        t.patience = args.patience.unwrap_or(t.patience.min(t.max_epochs));
        spec.n_cap = args.n_cap.unwrap_or(spec.n_cap);

        // Materialize command defaults so the sidecar shows them.
        if spec.models.is_empty() {
            spec.models = match command {
                "sweep" => vec!["gatv2".into(), "aero".into()],
                _ => vec!["aero".into()],
            };
        }
        if spec.depths.is_empty() {
            spec.depths = match command {
                "sweep" => SweepSpec::default().depths,
                _ => vec![8],
            };
        }
        if spec.seeds.is_empty() {
            spec.seeds = match command {
                "sweep" => SweepSpec::default().seeds,
                _ => vec![0],
            };
        }
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        match (&self.data, &self.generator) {
            (Some(_), Some(_)) => return Err(usage("give either a data directory or a generator spec, not both")),
            (None, None) => return Err(usage("no dataset: pass --data or a generator spec in --config")),
            _ => {}
        }
        for name in &self.models {
            self.model_config(name, 1)?;
        }
        if self.depths.contains(&0) && self.models.iter().any(|m| m != "aero") {
            return Err(usage("depth 0 is only valid for aero"));
        }
        for cfg in self.train_configs(self.depths[0])? {
            cfg.validate().map_err(|e| usage(e.to_string()))?;
        }
        fs::create_dir_all(&self.out)
            .map_err(|e| usage(format!("output directory {} is not writable: {e}", self.out.display())))?;
        Ok(())
    }

    fn model_config(&self, name: &str, depth: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::from_name(name, depth).map_err(|e| usage(e.to_string()))?;
        let o = &self.model;
        cfg.d_h = o.d_h.unwrap_or(cfg.d_h);
        cfg.dropout = o.dropout.unwrap_or(cfg.dropout);
        cfg.lambda = o.lambda.unwrap_or(cfg.lambda);
        cfg.gatv2_linear = o.linear_gatv2.unwrap_or(cfg.gatv2_linear);
        cfg.fagcn_eps = o.fagcn_eps.unwrap_or(cfg.fagcn_eps);
        cfg.alpha_ppr = o.alpha_ppr.unwrap_or(cfg.alpha_ppr);
        cfg.mlp_depth = o.mlp_depth.or(cfg.mlp_depth);
        cfg.output_dropout = o.output_dropout.unwrap_or(cfg.output_dropout);
        cfg.input_dropout = o.input_dropout.unwrap_or(cfg.input_dropout);
        Ok(cfg)
    }

    fn train_config(&self, model: ModelConfig) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            model,
            lr: t.lr,
            wd_ft: t.wd_ft,
            wd_prop: t.wd_prop,
            l2: t.l2,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seeds: self.seeds.clone(),
            split: None,
            normalize_features: t.normalize_features,
        }
    }

    fn train_configs(&self, depth: usize) -> Result<Vec<TrainConfig>> {
        self.models.iter().map(|m| Ok(self.train_config(self.model_config(m, depth)?))).collect()
    }

    fn all_configs(&self) -> Result<Vec<TrainConfig>> {
        let mut out = Vec::new();
        for &d in &self.depths {
            out.extend(self.train_configs(d)?);
        }
        Ok(out)
    }

    fn dataset(&self) -> Result<Dataset> {
        match (&self.data, &self.generator) {
            (Some(dir), None) => load_dataset(dir).with_context(|| format!("loading {}", dir.display())),
            (None, Some(g)) => gen_sbm(g).context("generating dataset"),
            _ => unreachable!("validated"),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_train(spec: &ExperimentSpec, exec: Exec) -> Result<()> {
    let data = spec.dataset()?;
    let configs = spec.all_configs()?;
    let jobs: Vec<(&TrainConfig, u64)> =
        configs.iter().flat_map(|c| spec.seeds.iter().map(move |&s| (c, s))).collect();
    let runs: Vec<RunResult> =
        exec.map(&jobs, |(cfg, seed)| train(&data, cfg, *seed)).into_iter().collect::<aero_attn::Result<_>>()?;
    for r in &runs {
        println!(
            "{} k={} seed {}: val {:.4} test {:.4} (best epoch {}, {:.1}s)",
            r.model, r.depth, r.seed, r.val_acc, r.test_acc, r.best_epoch, r.seconds
        );
    }
    let meta = Meta { spec, resolved: &configs, version: env!("CARGO_PKG_VERSION") };
    write_runs_csv(&spec.out.join("runs.csv"), &runs, &meta)?;
    Ok(())
}

fn cmd_sweep(spec: &ExperimentSpec, exec: Exec) -> Result<()> {
    let data = spec.dataset()?;
    let models: Vec<ModelConfig> =
        spec.models.iter().map(|m| spec.model_config(m, spec.depths[0])).collect::<Result<_>>()?;
    let base = spec.train_config(models[0].clone());
    let sweep = SweepSpec { depths: spec.depths.clone(), seeds: spec.seeds.clone(), smoothness: spec.smoothness, n_cap: spec.n_cap };
    let table = depth_sweep(&data, &base, &models, &sweep, exec)?;
    let configs = spec.all_configs()?;
    let meta = Meta { spec, resolved: &configs, version: env!("CARGO_PKG_VERSION") };

    write_runs_csv(&spec.out.join("runs.csv"), &table.runs, &meta)?;
    write_best_json(&spec.out.join("best.json"), &table)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.depth.to_string(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.sd),
                r.seeds.to_string(),
                r.best.to_string(),
            ]
        })
        .collect();
    write_csv_with_meta(&spec.out.join("sweep.csv"), &["model", "depth", "mean", "sd", "seeds", "best"], &rows, &meta)?;
    if spec.smoothness {
        let mut rows = Vec::new();
        for r in &table.rows {
            for (k, s) in r.smoothness.iter().flatten().enumerate() {
                rows.push(vec![r.model.clone(), r.depth.to_string(), (k + 1).to_string(), format!("{s:.9e}"), r.smoothness_estimated.to_string()]);
            }
        }
        write_csv_with_meta(&spec.out.join("smoothness.csv"), &["model", "depth", "k", "smoothness", "estimated"], &rows, &meta)?;
    }
    for r in &table.rows {
        println!("{} k={}: {:.4} ± {:.4}{}", r.model, r.depth, r.mean, r.sd, if r.best { "  (best)" } else { "" });
    }
    Ok(())
}

fn cmd_diagnose(spec: &ExperimentSpec, exec: Exec) -> Result<()> {
    let data = spec.dataset()?;
    let configs = spec.all_configs()?;
    let seed = spec.seeds[0];
    let opts = SmoothnessOptions { seed, exec, ..Default::default() };
    let (mut smooth, mut alpha, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
    for cfg in &configs {
        let run = train(&data, cfg, seed)?;
        let trace = run.trace(&data, cfg)?;
        let (model, depth) = (run.model.clone(), run.depth.to_string());
        let series = smoothness_series(&trace, spec.n_cap, &opts)?;
        for (k, s) in series.values.iter().enumerate() {
            smooth.push(vec![model.clone(), depth.clone(), (k + 1).to_string(), format!("{s:.9e}"), series.estimated.to_string()]);
        }
        let stats = attn_stats(&trace)?;
        for a in &stats.alpha {
            let frob = a.frob_diff.map_or_else(String::new, |f| format!("{f:.9e}"));
            alpha.push(vec![model.clone(), depth.clone(), a.k.to_string(), a.layer.to_string(), format!("{:.9e}", a.mean), format!("{:.9e}", a.sd), frob]);
        }
        for g in &stats.gamma {
            gamma.push(vec![model.clone(), depth.clone(), g.k.to_string(), format!("{:.9e}", g.mean), format!("{:.9e}", g.sd)]);
        }
        println!("{model} k={depth}: test {:.4}, S(T^k_max) {:.4e}", run.test_acc, series.values.last().copied().unwrap_or(f64::NAN));
    }
    let meta = Meta { spec, resolved: &configs, version: env!("CARGO_PKG_VERSION") };
    let out = &spec.out;
    write_csv_with_meta(&out.join("smoothness.csv"), &["model", "depth", "k", "smoothness", "estimated"], &smooth, &meta)?;
    write_csv_with_meta(&out.join("alpha_stats.csv"), &["model", "depth", "k", "layer", "mean", "sd", "frob_diff"], &alpha, &meta)?;
    write_csv_with_meta(&out.join("gamma_stats.csv"), &["model", "depth", "k", "mean", "sd"], &gamma, &meta)?;

    let mut kinds: Vec<ModelKind> = configs.iter().map(|c| c.model.kind).collect();
    kinds.sort_by_key(|k| k.name());
    kinds.dedup();
    let probes: Vec<ProbeReport> =
        kinds.iter().map(|&k| v2os_probe(k, spec.probe_samples, seed)).collect::<aero_attn::Result<_>>()?;
    for p in &probes {
        println!("probe {}: {:?}", p.model, p.classification);
    }
    write_json(&out.join("probe_report.json"), &probes)
}

fn cmd_paramcount(args: &ParamcountArgs) -> Result<()> {
    let kind: CountKind = args.kind.parse().map_err(|e: aero_attn::Error| usage(e.to_string()))?;
    let count = count_additional_params(kind, args.k_max, args.d_h, args.d_c).map_err(|e| usage(e.to_string()))?;
    println!("{}", count.count);
    println!("class {}", count.order);
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut spec: SbmSpec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => SbmSpec::default(),
    };
    spec.n = args.n.unwrap_or(spec.n);
    spec.classes = args.classes.unwrap_or(spec.classes);
    spec.p_intra = args.p_intra.unwrap_or(spec.p_intra);
    spec.p_inter = args.p_inter.unwrap_or(spec.p_inter);
    spec.feature_mean_separation = args.separation.unwrap_or(spec.feature_mean_separation);
    spec.feature_dim = args.feature_dim.unwrap_or(spec.feature_dim);
    spec.seed = args.seed.unwrap_or(spec.seed);
    let data = gen_sbm(&spec).map_err(|e| match e {
        aero_attn::Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    write_dataset(&args.out, &data)?;
    write_json(&args.out.join("generator.json"), &spec)?;
    println!("wrote {} ({} nodes, {} edges)", args.out.display(), data.n(), data.graph.num_edges());
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let suite: Suite = args
        .suite
        .parse()
        .map_err(|_| usage(format!("unknown suite {:?}; expected one of {}", args.suite, Suite::NAMES.join(", "))))?;
    let reports = run_suite(suite, args.seed)?;
    for r in &reports {
        println!("{r}");
    }
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        anyhow::bail!("{failed} of {} oracle checks failed", reports.len());
    }
    Ok(())
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| usage(format!("{JOBS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let jobs = jobs(cli.jobs)?;
    with_jobs(jobs, || match &cli.command {
        Command::Train(a) => cmd_train(&ExperimentSpec::load(a, "train")?, exec),
        Command::Sweep(a) => cmd_sweep(&ExperimentSpec::load(a, "sweep")?, exec),
        Command::Diagnose(a) => cmd_diagnose(&ExperimentSpec::load(a, "diagnose")?, exec),
        Command::Paramcount(a) => cmd_paramcount(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Oracle(a) => cmd_oracle(a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    info!("aero-attn {}", env!("CARGO_PKG_VERSION"));
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
