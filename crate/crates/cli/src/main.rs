//! `svcj` command-line driver.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use svcj_core::cluster::{elbow_select, kmeans, pair_cluster, zscore, PairClusterOptions, PointSet};
use svcj_core::data_io::{
    load_prices, log_returns, read_param_series, write_centroids, write_labels,
    write_param_series, write_prices, write_simulated_path, write_wcss_curve, PriceSeries,
};
use svcj_core::mcmc::estimate_window;
use svcj_core::model::{simulate_path, PARAM_NAMES};
use svcj_core::rng::mix_seed;
use svcj_core::rolling::{rolling_estimate_with, RollingConfig, SvcjEstimator, WindowDone};

use config::{parse_dims, RunConfig, MIN_WINDOW};

#[derive(Debug, Parser)]
#[command(name = "svcj", version, about = "SVCJ rolling-window estimation and parameter clustering")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic price series with its latent states.
    Simulate(SimulateArgs),
    /// Estimate the model on one window and print the posterior summary.
    Estimate(EstimateArgs),
    /// Rolling-window estimation for one or more window sizes.
    Roll(RollArgs),
    /// Moving-average smoothing of an existing parameter file.
    Smooth(SmoothArgs),
    /// Cluster two parameter columns with k-means.
    Cluster(ClusterArgs),
    /// Elbow curve and selected k for two parameter columns.
    Elbow(ElbowArgs),
}

#[derive(Debug, Args, Default)]
struct Common {
    /// Flat JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Base seed; falls back to the config file, then SVCJ_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args, Default)]
struct McmcArgs {
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    v_proposal_sd: Option<f64>,
    #[arg(long)]
    v_floor: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Full path output (`date,price,y,v,j,zy,zv`); defaults to
    /// `<output-dir>/simulated.csv`. A `date,price` file is written next to it.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    start_date: Option<String>,
    #[arg(long)]
    initial_price: Option<f64>,
    /// Return scale (100 = percent log returns).
    #[arg(long)]
    scale: Option<f64>,
    /// Model parameter override, e.g. `--param lambda=0.1`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use only the last N returns.
    #[arg(long, value_parser = parse_window)]
    window: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Debug, Args)]
struct RollArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Window sizes, comma separated or repeated.
    #[arg(long, value_delimiter = ',', value_parser = parse_window)]
    window: Vec<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    step: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    ma_width: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Debug, Args)]
struct SmoothArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Defaults to `<output-dir>/<input stem>_ma<width>.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    ma_width: Option<u64>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Two parameter names, e.g. `mu,beta`.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<(String, String)>,
    /// Fixed number of clusters; chosen by the elbow rule when absent.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: Option<u64>,
}

#[derive(Debug, Args)]
struct ElbowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_dims)]
    dims: Option<(String, String)>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    k_max: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: Option<u64>,
}

fn parse_window(s: &str) -> Result<usize, String> {
    let n: usize = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a positive integer"))?;
    if n < MIN_WINDOW {
        return Err(format!("window {n} is below the minimum of {MIN_WINDOW}"));
    }
    Ok(n)
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn base_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(p) = common.parallelism {
        cfg.parallelism = p as usize;
    }
    if common.quiet {
        cfg.quiet = true;
    }
    cfg.seed = match (common.seed, cfg.seed) {
        (Some(s), _) => Some(s),
        (None, Some(s)) => Some(s),
        (None, None) => Some(env_seed()?.unwrap_or(0)),
    };
    Ok(cfg)
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("SVCJ_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("SVCJ_SEED='{s}' is not a nonnegative integer"))),
        Err(_) => Ok(None),
    }
}

fn apply_mcmc(cfg: &mut RunConfig, m: &McmcArgs) {
    if let Some(x) = m.n_iter {
        cfg.mcmc.n_iter = x;
    }
    if let Some(x) = m.burn_in {
        cfg.mcmc.burn_in = x;
    }
    if let Some(x) = m.thin {
        cfg.mcmc.thin = x;
    }
    if let Some(x) = m.v_proposal_sd {
        cfg.mcmc.v_proposal_sd = x;
    }
    if let Some(x) = m.v_floor {
        cfg.mcmc.v_floor = x;
    }
}

fn finish(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.validate().map_err(Failure::Usage)?;
    // The global pool only serves k-means restarts; a second call is a no-op.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build_global();
    Ok(())
}

fn require_input(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    cfg.input
        .clone()
        .ok_or_else(|| Failure::Usage("--input is required".into()))
}

fn prepare_output(cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    cfg.write_echo(&cfg.output_dir)
        .context("cannot write run_config.json")?;
    Ok(())
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(v) = a.v0 {
        cfg.v0 = Some(v);
    }
    if let Some(d) = a.start_date {
        cfg.start_date = d;
    }
    if let Some(p) = a.initial_price {
        cfg.initial_price = p;
    }
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    for spec in &a.params {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--param expects NAME=VALUE, got '{spec}'")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--param {name}: '{value}' is not a number")))?;
        cfg.set(&format!("params.{}", name.trim()), &Value::from(v))
            .map_err(Failure::Usage)?;
    }
    finish(&cfg)?;
    if cfg.horizon == 0 {
        return Err(Failure::Usage("horizon must be at least 1".into()));
    }
    let start = NaiveDate::parse_from_str(&cfg.start_date, "%Y-%m-%d")
        .map_err(|e| Failure::Usage(format!("bad start_date '{}': {e}", cfg.start_date)))?;

    for w in cfg.params.warnings() {
        eprintln!("warning: {w}");
    }
    let v0 = cfg.v0.unwrap_or_else(|| cfg.params.default_v0());
    let path = simulate_path(&cfg.params, v0, cfg.horizon, seed(&cfg)).context("simulation failed")?;

    prepare_output(&cfg)?;
    let full = a
        .output
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("simulated.csv"));
    write_simulated_path(&full, start, cfg.initial_price, cfg.scale, &path)
        .with_context(|| format!("cannot write {}", full.display()))?;

    let mut dates = vec![start];
    let mut prices = vec![cfg.initial_price];
    for y in &path.y {
        let d = dates.last().unwrap().succ_opt().context("date overflow")?;
        dates.push(d);
        prices.push(prices.last().unwrap() * (y / cfg.scale).exp());
    }
    let series = PriceSeries::new(dates, prices).context("simulated prices invalid")?;
    let price_file = full.with_file_name(format!(
        "{}_prices.csv",
        full.file_stem().and_then(|s| s.to_str()).unwrap_or("simulated")
    ));
    write_prices(&price_file, &series)
        .with_context(|| format!("cannot write {}", price_file.display()))?;
    if !cfg.quiet {
        eprintln!("wrote {} and {}", full.display(), price_file.display());
    }
    Ok(())
}

fn load_returns(path: &Path, scale: f64) -> anyhow::Result<svcj_core::ReturnSeries> {
    let prices = load_prices(path).with_context(|| format!("cannot load {}", path.display()))?;
    Ok(log_returns(&prices, scale)?)
}

fn cmd_estimate(a: EstimateArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    apply_mcmc(&mut cfg, &a.mcmc);
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    if let Some(w) = a.window {
        cfg.windows = vec![w];
    }
    finish(&cfg)?;
    let input = require_input(&cfg)?;
    let returns = load_returns(&input, cfg.scale)?;
    let data = match a.window {
        Some(n) if n < returns.len() => &returns.returns[returns.len() - n..],
        _ => &returns.returns[..],
    };
    let s = estimate_window(data, &cfg.priors, &cfg.mcmc, seed(&cfg))
        .context("estimation failed")?;
    if a.common.output_dir.is_some() {
        prepare_output(&cfg)?;
    }

    println!("{:<8} {:>12} {:>12} {:>12} {:>12} {:>12}", "param", "mean", "sd", "q05", "q50", "q95");
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let q = s.quantiles[k];
        println!(
            "{:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            name,
            s.mean.to_array()[k],
            s.sd[k],
            q[0],
            q[1],
            q[2]
        );
    }
    println!(
        "observations {}  draws {}  v_acceptance {:.3}  mean_jumps {:.2}",
        data.len(),
        s.diagnostics.draws,
        s.diagnostics.v_acceptance,
        s.diagnostics.mean_jump_count
    );
    Ok(())
}

fn cmd_roll(a: RollArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    apply_mcmc(&mut cfg, &a.mcmc);
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if !a.window.is_empty() {
        cfg.windows = a.window.clone();
    }
    if let Some(s) = a.step {
        cfg.step = s as usize;
    }
    if let Some(w) = a.ma_width {
        cfg.ma_width = w as usize;
    }
    if let Some(s) = a.scale {
        cfg.scale = s;
    }
    finish(&cfg)?;
    let input = require_input(&cfg)?;
    let returns = load_returns(&input, cfg.scale)?;
    prepare_output(&cfg)?;

    let estimator = SvcjEstimator {
        priors: cfg.priors,
        mcmc: cfg.mcmc,
    };
    for &window in &cfg.windows {
        let rc = RollingConfig {
            window,
            step: cfg.step,
            base_seed: mix_seed(seed(&cfg), window as u64),
            parallelism: cfg.parallelism,
        };
        let done = AtomicUsize::new(0);
        let quiet = cfg.quiet;
        let report = |w: WindowDone| {
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if !quiet {
                let status = if w.ok { "" } else { " (missing)" };
                eprintln!("window {window}: {n}/{} {}{status}", w.total, w.date);
            }
        };
        let series = rolling_estimate_with(&returns, &rc, &estimator, Some(&report))
            .with_context(|| format!("rolling estimation with window {window} failed"))?;
        let path = cfg.output_dir.join(format!("params_w{window}.csv"));
        write_param_series(&series, &path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let ma_path = cfg
            .output_dir
            .join(format!("params_w{window}_ma{}.csv", cfg.ma_width));
        write_param_series(&series.smoothed(cfg.ma_width), &ma_path)
            .with_context(|| format!("cannot write {}", ma_path.display()))?;
        let missing = series.rows.iter().filter(|r| r.is_none()).count();
        if !cfg.quiet {
            eprintln!(
                "window {window}: wrote {} rows ({missing} missing) to {}",
                series.len(),
                path.display()
            );
        }
    }
    Ok(())
}

fn cmd_smooth(a: SmoothArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(w) = a.ma_width {
        cfg.ma_width = w as usize;
    }
    finish(&cfg)?;
    let input = require_input(&cfg)?;
    let series = read_param_series(&input).with_context(|| format!("cannot read {}", input.display()))?;
    prepare_output(&cfg)?;
    let out = a.output.unwrap_or_else(|| {
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("params");
        cfg.output_dir.join(format!("{stem}_ma{}.csv", cfg.ma_width))
    });
    if out == input {
        return Err(Failure::Usage("output would overwrite the input file".into()));
    }
    write_param_series(&series.smoothed(cfg.ma_width), &out)
        .with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}

fn write_cluster_files(
    cfg: &RunConfig,
    clustering: &svcj_core::PairClustering,
) -> anyhow::Result<()> {
    let [a, b] = &clustering.dim_names;
    let labels = cfg.output_dir.join(format!("clusters_{a}_{b}.csv"));
    write_labels(&labels, &clustering.dates, &clustering.result.labels)
        .with_context(|| format!("cannot write {}", labels.display()))?;
    let centroids = cfg.output_dir.join(format!("centroids_{a}_{b}.csv"));
    write_centroids(
        &centroids,
        &clustering.dim_names,
        &clustering.centroids_original,
        &clustering.result.centroids,
    )
    .with_context(|| format!("cannot write {}", centroids.display()))?;
    if let Some(curve) = &clustering.wcss_curve {
        let path = cfg.output_dir.join(format!("elbow_{a}_{b}.csv"));
        write_wcss_curve(&path, curve)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(d) = a.dims {
        cfg.dims = d;
    }
    if let Some(k) = a.k {
        cfg.k = Some(k as usize);
    }
    if let Some(k) = a.k_max {
        cfg.k_max = k;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r as usize;
    }
    finish(&cfg)?;
    let input = require_input(&cfg)?;
    let series = read_param_series(&input).with_context(|| format!("cannot read {}", input.display()))?;
    let opts = PairClusterOptions {
        k: cfg.k,
        k_max: cfg.k_max,
        restarts: cfg.restarts,
        seed: seed(&cfg),
    };
    let clustering = pair_cluster(&series, &cfg.dims.0, &cfg.dims.1, &opts)
        .context("clustering failed")?;
    prepare_output(&cfg)?;
    write_cluster_files(&cfg, &clustering)?;
    if !cfg.quiet {
        eprintln!(
            "k = {}, wcss = {:.6}, {} points",
            clustering.result.k,
            clustering.result.wcss,
            clustering.dates.len()
        );
    }
    Ok(())
}

fn cmd_elbow(a: ElbowArgs) -> Outcome {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(d) = a.dims {
        cfg.dims = d;
    }
    if let Some(k) = a.k_max {
        cfg.k_max = k as usize;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r as usize;
    }
    cfg.k = None;
    finish(&cfg)?;
    if cfg.k_max < 3 {
        return Err(Failure::Usage("k_max must be at least 3".into()));
    }
    let input = require_input(&cfg)?;
    let series = read_param_series(&input).with_context(|| format!("cannot read {}", input.display()))?;
    let (a_name, b_name) = cfg.dims.clone();
    let xs = series.column(&a_name).map_err(|e| Failure::Data(e.into()))?;
    let ys = series.column(&b_name).map_err(|e| Failure::Data(e.into()))?;
    let mut dates = Vec::new();
    let mut pts = Vec::new();
    for i in 0..series.len() {
        if let (Some(x), Some(y)) = (xs[i], ys[i]) {
            dates.push(series.dates[i]);
            pts.push(vec![x, y]);
        }
    }
    let set = PointSet::new(pts, Some(dates.clone()), vec![a_name.clone(), b_name.clone()])
        .context("invalid points")?;
    let (scaled, scaling) = zscore(&set).context("scaling failed")?;
    let s = seed(&cfg);
    let (k, curve) = elbow_select(&scaled, cfg.k_max, cfg.restarts, s).context("elbow selection failed")?;
    let mut result = kmeans(&scaled, k, cfg.restarts, s).context("k-means failed")?;
    let centroids_original = result.centroids.iter().map(|c| scaling.unscale(c)).collect();
    result.scaling = Some(scaling);
    let clustering = svcj_core::PairClustering {
        dim_names: [a_name, b_name],
        dates,
        result,
        centroids_original,
        wcss_curve: Some(curve.clone()),
    };
    prepare_output(&cfg)?;
    write_cluster_files(&cfg, &clustering)?;
    println!("k_star {k}");
    for (i, w) in curve.iter().enumerate() {
        println!("k {} wcss {:.6}", i + 1, w);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Roll(a) => cmd_roll(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Elbow(a) => cmd_elbow(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("svcj: usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("svcj: error: {msg}");
            ExitCode::from(1)
        }
    }
}
