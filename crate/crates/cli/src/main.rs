//! Command-line front end: every simulation, estimation, inference and study
//! pipeline as a subcommand, driven by flags plus an optional `key = value`
//! config file (flags win). Each run writes its outputs plus a `manifest.txt`
//! that reproduces the run byte-for-byte via `--config manifest.txt`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use nearunit::affine;
use nearunit::cir::{self, CirParams, LimitTable};
use nearunit::config::Config;
use nearunit::dataio::{self, ColumnSel, Dataset, LoadOptions, NaPolicy, PipelineOptions};
use nearunit::error::{Error, Result};
use nearunit::estimate::{self, Method};
use nearunit::inference::{self, InferOptions, TestMethod, WeightDist};
use nearunit::montecarlo::{self, ExperimentConfig, Panel};
use nearunit::report;

#[derive(Parser)]
#[command(name = "nearunit", version, about = "Near-unit-root affine time series toolkit")]
struct Cli {
    /// Worker threads (a throughput hint; results never depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory of a model family under a regime.
    Simulate(SimulateArgs),
    /// Fit the conditional-mean recursion to a series.
    Estimate(EstimateArgs),
    /// Random-weight bootstrap of the least-squares fit.
    Bootstrap(BootstrapArgs),
    /// Plug-in confidence intervals from the fitted persistence scale.
    PluginCi(PluginCiArgs),
    /// Two-sided test of a hypothesized slope.
    Test(TestArgs),
    /// P-values over a grid of hypothesized slopes.
    PvalueCurve(PvalueCurveArgs),
    /// Tabulate the local-to-unity least-squares limit law.
    TabulateLtu(TabulateLtuArgs),
    /// Sampling distribution study (local-to-unity or mildly integrated).
    DistStudy(DistStudyArgs),
    /// Interval coverage study.
    Coverage(CoverageArgs),
    /// Raw and size-corrected power study.
    Power(PowerArgs),
    /// Bubble-episode statistics against the linear AR(1) comparator.
    Bubble(BubbleArgs),
    /// Full empirical pipeline on an observed series.
    Apply(ApplyArgs),
    /// Re-estimate over index windows of an observed series.
    WindowScan(WindowScanArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Root seed for all randomness in the run.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn merged(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_path(path)?,
            None => Config::new(),
        };
        if let Some(seed) = self.seed {
            cfg.set("seed", seed);
        }
        Ok(cfg)
    }
}

/// Model and regime flags mirroring the config keys.
#[derive(Args)]
struct ModelArgs {
    /// Model family: inarch, nbar, arg, arg0 or linear_ar1.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Second parameter of the arg0 family.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    /// Regime: local_to_unity or mildly_integrated.
    #[arg(long)]
    regime: Option<String>,
    /// Drift (local-to-unity) or drift sign +-1 (mildly integrated).
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Bandwidth exponent: k_n = n^tau.
    #[arg(long)]
    tau: Option<f64>,
    /// Explicit bandwidth override.
    #[arg(long)]
    kn: Option<f64>,
    /// Transitions per trajectory.
    #[arg(long)]
    n: Option<usize>,
    /// Initial state.
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut Config) {
        set_if(cfg, "family", &self.family);
        set_if(cfg, "mu", &self.mu);
        set_if(cfg, "kappa", &self.kappa);
        set_if(cfg, "c", &self.c);
        set_if(cfg, "theta", &self.theta);
        set_if(cfg, "b", &self.b);
        set_if(cfg, "sigma_eps", &self.sigma_eps);
        set_if(cfg, "regime", &self.regime);
        set_if(cfg, "gamma", &self.gamma);
        set_if(cfg, "tau", &self.tau);
        set_if(cfg, "kn", &self.kn);
        set_if(cfg, "n", &self.n);
        set_if(cfg, "x0", &self.x0);
    }
}

/// Series-input flags mirroring the config keys.
#[derive(Args)]
struct InputArgs {
    /// CSV file holding the series.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Column index (0-based) or header name.
    #[arg(long)]
    column: Option<String>,
    /// The file has a header row.
    #[arg(long)]
    header: bool,
    /// Missing-value policy.
    #[arg(long, value_enum)]
    na: Option<NaArg>,
    /// Unit-conversion multiplier applied to every value.
    #[arg(long)]
    scale: Option<f64>,
    /// Series name for reports (default: file stem).
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    frequency: Option<String>,
    #[arg(long)]
    units: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NaArg {
    Strict,
    Drop,
}

impl InputArgs {
    fn apply(&self, cfg: &mut Config) {
        if let Some(p) = &self.input {
            cfg.set("input", p.display());
        }
        set_if(cfg, "column", &self.column);
        if self.header {
            cfg.set("header", "true");
        }
        if let Some(na) = self.na {
            cfg.set(
                "na",
                match na {
                    NaArg::Strict => "strict",
                    NaArg::Drop => "drop",
                },
            );
        }
        set_if(cfg, "scale", &self.scale);
        set_if(cfg, "name", &self.name);
        set_if(cfg, "frequency", &self.frequency);
        set_if(cfg, "units", &self.units);
    }
}

fn set_if<T: std::fmt::Display>(cfg: &mut Config, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        cfg.set(key, v);
    }
}

/// Load the series named by the merged config's input keys.
fn load_series(cfg: &Config) -> Result<Dataset> {
    let input = cfg
        .get_str("input")
        .ok_or_else(|| Error::InvalidInput("no --input series given".into()))?;
    let has_header = match cfg.get_str("header") {
        None => false,
        Some("true") | Some("1") => true,
        Some("false") | Some("0") => false,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "header must be true or false, got {other:?}"
            )))
        }
    };
    let column = match cfg.get_str("column") {
        None => ColumnSel::Index(0),
        Some(c) => match c.parse::<usize>() {
            Ok(i) => ColumnSel::Index(i),
            Err(_) => ColumnSel::Name(c.to_string()),
        },
    };
    let na_policy = match cfg.get_str("na") {
        None | Some("strict") => NaPolicy::Strict,
        Some("drop") => NaPolicy::Drop,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "na policy must be strict or drop, got {other:?}"
            )))
        }
    };
    let opts = LoadOptions {
        column,
        has_header,
        na_policy,
        scale: cfg.get_f64("scale")?,
        name: cfg.get_str("name").unwrap_or("").to_string(),
        frequency: cfg.get_str("frequency").unwrap_or("").to_string(),
        units: cfg.get_str("units").unwrap_or("").to_string(),
        ..LoadOptions::default()
    };
    dataio::load_csv(input, &opts)
}

// ---------------------------------------------------------------- resolve

fn seed_of(cfg: &mut Config) -> Result<u64> {
    or_set_u64(cfg, "seed", 0)
}

fn or_set_u64(cfg: &mut Config, key: &str, default: u64) -> Result<u64> {
    match cfg.get_u64(key)? {
        Some(v) => Ok(v),
        None => {
            cfg.set(key, default);
            Ok(default)
        }
    }
}

fn or_set_usize(cfg: &mut Config, key: &str, default: usize) -> Result<usize> {
    match cfg.get_usize(key)? {
        Some(v) => Ok(v),
        None => {
            cfg.set(key, default);
            Ok(default)
        }
    }
}

fn or_set_f64(cfg: &mut Config, key: &str, default: f64) -> Result<f64> {
    match cfg.get_f64(key)? {
        Some(v) => Ok(v),
        None => {
            cfg.set(key, default);
            Ok(default)
        }
    }
}

fn or_set_str(cfg: &mut Config, key: &str, default: &str) -> String {
    match cfg.get_str(key) {
        Some(v) => v.to_string(),
        None => {
            cfg.set(key, default);
            default.to_string()
        }
    }
}

/// Comma-separated numbers.
fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number {tok:?}: {e}")))
        })
        .collect()
}

/// Either `start:stop:step` (inclusive of both ends up to rounding) or a
/// comma-separated list.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "grid spec must be start:stop:step, got {s:?}"
            )));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad_grid(s))?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad_grid(s))?;
        let step: f64 = parts[2].trim().parse().map_err(|_| bad_grid(s))?;
        if !(step > 0.0 && stop >= start) {
            return Err(bad_grid(s));
        }
        let count = ((stop - start) / step).round() as usize;
        Ok((0..=count).map(|i| start + step * i as f64).collect())
    } else {
        parse_f64_list(s)
    }
}

fn bad_grid(s: &str) -> Error {
    Error::InvalidInput(format!("bad grid spec {s:?}"))
}

/// Comma-separated `start:end` half-open index ranges.
fn parse_windows(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|tok| {
            let (a, b) = tok
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("window must be start:end, got {tok:?}")))?;
            let start = a.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("bad window start {a:?}"))
            })?;
            let end = b.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("bad window end {b:?}"))
            })?;
            Ok((start, end))
        })
        .collect()
}

// ----------------------------------------------------------------- output

fn write_manifest(out: &Path, command: &str, cfg: &Config) -> Result<()> {
    let mut m = cfg.clone();
    m.set("command", command);
    m.set("version", env!("CARGO_PKG_VERSION"));
    let text = format!(
        "# reproduce with: nearunit {command} --config manifest.txt --out <dir>\n{}",
        m.to_text()
    );
    std::fs::write(out.join("manifest.txt"), text)?;
    Ok(())
}

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn panel_json(p: &Panel) -> serde_json::Value {
    json!({
        "labels": p.labels,
        "count": p.count(),
        "mean": p.mean,
        "cov": p.cov,
    })
}

fn write_panel_csv(out: &Path, file: &str, p: &Panel) -> Result<()> {
    let c0 = p.column(0);
    let c1 = p.column(1);
    report::write_columns_csv(
        out.join(file),
        &[p.labels[0].as_str(), p.labels[1].as_str()],
        &[&c0, &c1],
    )
}

fn write_limit_table(out: &Path, prefix: &str, table: &LimitTable) -> Result<()> {
    report::write_json(
        out.join(format!("{prefix}_summary.json")),
        &json!({
            "labels": table.labels,
            "summary": table.summary,
            "cov": table.cov,
            "meta": table.meta,
        }),
    )?;
    let labels: Vec<&str> = table.labels.iter().map(String::as_str).collect();
    let columns: Vec<&[f64]> = table.columns.iter().map(Vec::as_slice).collect();
    report::write_columns_csv(out.join(format!("{prefix}_draws.csv")), &labels, &columns)?;
    for (label, column) in table.labels.iter().zip(&table.columns) {
        let h = report::histogram(column, 60)?;
        report::write_histogram_csv(out.join(format!("{prefix}_hist_{label}.csv")), &h)?;
    }
    Ok(())
}

fn announce(out: &Path, files: &[&str]) {
    for f in files {
        println!("wrote {}", out.join(f).display());
    }
}

// ------------------------------------------------------------ subcommands

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Trajectory stream id under the root seed.
    #[arg(long)]
    stream: Option<u64>,
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.model.apply(&mut cfg);
    set_if(&mut cfg, "stream", &a.stream);
    let spec = cfg.require_spec()?;
    let regime = cfg.require_regime()?;
    let n = cfg.require_usize("n")?;
    let x0 = or_set_f64(&mut cfg, "x0", 0.0)?;
    let seed = seed_of(&mut cfg)?;
    let stream = or_set_u64(&mut cfg, "stream", 0)?;
    let traj = affine::simulate(&spec, &regime, n, x0, seed, stream)?;
    let out = &a.common.out;
    ensure_out(out)?;
    let t: Vec<f64> = (0..traj.values.len()).map(|i| i as f64).collect();
    report::write_columns_csv(out.join("trajectory.csv"), &["t", "value"], &[&t, &traj.values])?;
    write_manifest(out, "simulate", &cfg)?;
    announce(out, &["trajectory.csv", "manifest.txt"]);
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ols,
    Wls,
    PoissonQml,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ols => Method::Ols,
            MethodArg::Wls => Method::Wls,
            MethodArg::PoissonQml => Method::PoissonQml,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Estimation method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

fn run_estimate(a: &EstimateArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    if let Some(m) = a.method {
        cfg.set("method", Method::from(m).label());
    }
    let method = match or_set_str(&mut cfg, "method", "ols").as_str() {
        "ols" => Method::Ols,
        "wls" => Method::Wls,
        "poisson_qml" => Method::PoissonQml,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?}; expected ols, wls or poisson_qml"
            )))
        }
    };
    let ds = load_series(&cfg)?;
    let est = match method {
        Method::Ols => estimate::ols(&ds.values)?,
        Method::Wls => estimate::wls(&ds.values)?,
        Method::PoissonQml => estimate::poisson_qmle(&ds.values)?,
    };
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("estimate.json"), &est)?;
    write_manifest(out, "estimate", &cfg)?;
    println!(
        "{}",
        json!({
            "name": ds.name,
            "method": est.method,
            "n": est.n,
            "alpha_hat": est.alpha_hat,
            "mu_hat": est.mu_hat,
            "sigma2_hat": est.sigma2_hat,
            "k_hat": est.k_hat,
            "tau_hat": est.tau_hat,
            "variance_warning": est.variance_warning,
        })
    );
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Exp1,
    Degenerate1,
}

impl From<WeightsArg> for WeightDist {
    fn from(w: WeightsArg) -> WeightDist {
        match w {
            WeightsArg::Exp1 => WeightDist::Exp1,
            WeightsArg::Degenerate1 => WeightDist::Degenerate1,
        }
    }
}

fn weights_of(cfg: &mut Config) -> Result<WeightDist> {
    match or_set_str(cfg, "weights", "exp1").as_str() {
        "exp1" => Ok(WeightDist::Exp1),
        "degenerate1" => Ok(WeightDist::Degenerate1),
        other => Err(Error::InvalidInput(format!(
            "unknown weights {other:?}; expected exp1 or degenerate1"
        ))),
    }
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Bootstrap replications.
    #[arg(long)]
    boot: Option<usize>,
    /// Bootstrap weight distribution.
    #[arg(long, value_enum)]
    weights: Option<WeightsArg>,
    /// Confidence level.
    #[arg(long)]
    level: Option<f64>,
}

fn run_bootstrap(a: &BootstrapArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "boot", &a.boot);
    set_if(&mut cfg, "level", &a.level);
    if let Some(w) = a.weights {
        cfg.set("weights", WeightDist::from(w).label());
    }
    let b = or_set_usize(&mut cfg, "boot", 1000)?;
    let level = or_set_f64(&mut cfg, "level", 0.95)?;
    let weights = weights_of(&mut cfg)?;
    let seed = seed_of(&mut cfg)?;
    let ds = load_series(&cfg)?;
    let draws = inference::bootstrap(&ds.values, b, weights, seed)?;
    let ci = inference::bootstrap_ci(&draws, level)?;
    let out = &a.common.out;
    ensure_out(out)?;
    let alpha_draws: Vec<f64> = draws.draws.iter().map(|d| d[0]).collect();
    let mu_draws: Vec<f64> = draws.draws.iter().map(|d| d[1]).collect();
    report::write_columns_csv(
        out.join("bootstrap_draws.csv"),
        &["alpha_draw", "mu_draw"],
        &[&alpha_draws, &mu_draws],
    )?;
    report::write_json(
        out.join("bootstrap.json"),
        &json!({
            "base": draws.base,
            "b": draws.b,
            "weights": draws.weights_dist,
            "resampled": draws.resampled,
            "mean": draws.mean(),
            "cov": draws.cov(),
            "ci": ci,
        }),
    )?;
    write_manifest(out, "bootstrap", &cfg)?;
    println!("{}", serde_json::to_string(&ci)?);
    Ok(())
}

#[derive(Args)]
struct PluginCiArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Confidence level.
    #[arg(long)]
    level: Option<f64>,
}

fn run_plugin_ci(a: &PluginCiArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "level", &a.level);
    let level = or_set_f64(&mut cfg, "level", 0.95)?;
    let ds = load_series(&cfg)?;
    let est = estimate::ols(&ds.values)?;
    let ci = inference::plugin_ci(&est, level)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("plugin_ci.json"), &json!({"estimate_n": est.n, "alpha_hat": est.alpha_hat, "mu_hat": est.mu_hat, "sigma2_hat": est.sigma2_hat, "ci": ci}))?;
    write_manifest(out, "plugin-ci", &cfg)?;
    println!("{}", serde_json::to_string(&ci)?);
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum TestMethodArg {
    Plugin,
    Bootstrap,
    Sandwich,
}

impl From<TestMethodArg> for TestMethod {
    fn from(m: TestMethodArg) -> TestMethod {
        match m {
            TestMethodArg::Plugin => TestMethod::PluginSe,
            TestMethodArg::Bootstrap => TestMethod::BootstrapSe,
            TestMethodArg::Sandwich => TestMethod::SandwichSe,
        }
    }
}

fn test_method_of(cfg: &mut Config, default: &str) -> Result<TestMethod> {
    match or_set_str(cfg, "method", default).as_str() {
        "plugin" => Ok(TestMethod::PluginSe),
        "bootstrap" => Ok(TestMethod::BootstrapSe),
        "sandwich" => Ok(TestMethod::SandwichSe),
        other => Err(Error::InvalidInput(format!(
            "unknown method {other:?}; expected plugin, bootstrap or sandwich"
        ))),
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Hypothesized slope (must be below one).
    #[arg(long)]
    alpha0: Option<f64>,
    /// Standard error in the denominator.
    #[arg(long, value_enum)]
    method: Option<TestMethodArg>,
    /// Bootstrap replications (bootstrap method only).
    #[arg(long)]
    boot: Option<usize>,
    /// Comma-separated decision levels.
    #[arg(long)]
    levels: Option<String>,
}

fn run_test(a: &TestArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "alpha0", &a.alpha0);
    set_if(&mut cfg, "boot", &a.boot);
    set_if(&mut cfg, "levels", &a.levels);
    if let Some(m) = a.method {
        cfg.set("method", TestMethod::from(m).label());
    }
    let alpha0 = cfg.require_f64("alpha0")?;
    let method = test_method_of(&mut cfg, "plugin")?;
    let opts = InferOptions {
        b: or_set_usize(&mut cfg, "boot", 1000)?,
        weights: weights_of(&mut cfg)?,
        seed: seed_of(&mut cfg)?,
        levels: parse_f64_list(&or_set_str(&mut cfg, "levels", "0.01,0.05,0.10"))?,
    };
    let ds = load_series(&cfg)?;
    let result = inference::test_alpha(&ds.values, alpha0, method, &opts)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("test.json"), &result)?;
    write_manifest(out, "test", &cfg)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

#[derive(Args)]
struct PvalueCurveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Standard error in the denominator.
    #[arg(long, value_enum)]
    method: Option<TestMethodArg>,
    /// Hypothesis grid: start:stop:step or a comma list (all below one).
    #[arg(long)]
    grid: Option<String>,
    /// Bootstrap replications (bootstrap method only).
    #[arg(long)]
    boot: Option<usize>,
}

fn run_pvalue_curve(a: &PvalueCurveArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "grid", &a.grid);
    set_if(&mut cfg, "boot", &a.boot);
    if let Some(m) = a.method {
        cfg.set("method", TestMethod::from(m).label());
    }
    let method = test_method_of(&mut cfg, "plugin")?;
    let grid = parse_grid(&or_set_str(&mut cfg, "grid", "0.700:0.999:0.001"))?;
    let opts = InferOptions {
        b: or_set_usize(&mut cfg, "boot", 1000)?,
        weights: weights_of(&mut cfg)?,
        seed: seed_of(&mut cfg)?,
        ..InferOptions::default()
    };
    let ds = load_series(&cfg)?;
    let curve = inference::pvalue_curve(&ds.values, &grid, method, &opts)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("pvalue_curve.json"), &curve)?;
    let alphas: Vec<f64> = curve.points.iter().map(|p| p.0).collect();
    let ps: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    report::write_columns_csv(out.join("pvalue_curve.csv"), &["alpha0", "p_value"], &[&alphas, &ps])?;
    write_manifest(out, "pvalue-curve", &cfg)?;
    announce(out, &["pvalue_curve.json", "pvalue_curve.csv", "manifest.txt"]);
    Ok(())
}

#[derive(Args)]
struct TabulateLtuArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Local-to-unity drift.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Limit intercept.
    #[arg(long)]
    mu: Option<f64>,
    /// Limit noise scale (squared).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Simulated diffusion paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Euler steps per unit of diffusion time.
    #[arg(long)]
    steps: Option<usize>,
}

fn run_tabulate_ltu(a: &TabulateLtuArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    set_if(&mut cfg, "gamma", &a.gamma);
    set_if(&mut cfg, "mu", &a.mu);
    set_if(&mut cfg, "sigma2", &a.sigma2);
    set_if(&mut cfg, "paths", &a.paths);
    set_if(&mut cfg, "steps", &a.steps);
    let params = CirParams {
        mu: or_set_f64(&mut cfg, "mu", 1.0)?,
        gamma: or_set_f64(&mut cfg, "gamma", -1.0)?,
        sigma2: or_set_f64(&mut cfg, "sigma2", 1.0)?,
    };
    let paths = or_set_usize(&mut cfg, "paths", 10_000)?;
    let steps = or_set_usize(&mut cfg, "steps", 1_000)?;
    let seed = seed_of(&mut cfg)?;
    let table = cir::tabulate_ltu_limit(&params, paths, steps, seed)?;
    let out = &a.common.out;
    ensure_out(out)?;
    write_limit_table(out, "ltu", &table)?;
    write_manifest(out, "tabulate-ltu", &cfg)?;
    println!(
        "{}",
        json!({
            "mean": [table.summary[0].mean, table.summary[1].mean],
            "var": [table.summary[0].var, table.summary[1].var],
            "cov": table.cov,
            "resampled": table.meta.resampled,
        })
    );
    Ok(())
}

#[derive(Args)]
struct DistStudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Monte Carlo replications.
    #[arg(long)]
    m: Option<usize>,
    /// Bootstrap replications for the designated-trajectory panel.
    #[arg(long)]
    boot: Option<usize>,
}

fn experiment_config(cfg: &mut Config) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        spec: cfg.require_spec()?,
        regime: cfg.require_regime()?,
        n: cfg.require_usize("n")?,
        m: or_set_usize(cfg, "m", 1000)?,
        b: or_set_usize(cfg, "boot", 1000)?,
        seed: seed_of(cfg)?,
        x0: or_set_f64(cfg, "x0", 0.0)?,
    })
}

fn run_dist_study(a: &DistStudyArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.model.apply(&mut cfg);
    set_if(&mut cfg, "m", &a.m);
    set_if(&mut cfg, "boot", &a.boot);
    let ex = experiment_config(&mut cfg)?;
    let out = &a.common.out;
    ensure_out(out)?;
    match ex.regime {
        nearunit::RegimeSpec::LocalToUnity { .. } => {
            let study = montecarlo::dist_study_ltu(&ex)?;
            report::write_json(
                out.join("study.json"),
                &json!({
                    "kind": "local_to_unity",
                    "gamma": study.gamma,
                    "alpha_n": study.alpha_n,
                    "mu_n": study.mu_n,
                    "n": study.n,
                    "m": study.m,
                    "seed": study.seed,
                    "panel": panel_json(&study.panel),
                }),
            )?;
            write_panel_csv(out, "draws.csv", &study.panel)?;
            for (label, h) in study.panel.labels.iter().zip(&study.histograms) {
                report::write_histogram_csv(out.join(format!("hist_{label}.csv")), h)?;
            }
            write_manifest(out, "dist-study", &cfg)?;
            announce(out, &["study.json", "draws.csv", "manifest.txt"]);
        }
        nearunit::RegimeSpec::MildlyIntegrated { gamma_sign: 1, .. } => {
            let study = montecarlo::dist_study_explosive(&ex)?;
            report::write_json(
                out.join("study.json"),
                &json!({
                    "kind": "mildly_explosive",
                    "alpha_n": study.alpha_n,
                    "kn": study.kn,
                    "mu_n": study.mu_n,
                    "n": study.n,
                    "m": study.m,
                    "seed": study.seed,
                    "target_mean": study.target_mean,
                    "target_var": study.target_var,
                    "panel": panel_json(&study.panel),
                }),
            )?;
            write_panel_csv(out, "draws.csv", &study.panel)?;
            write_manifest(out, "dist-study", &cfg)?;
            announce(out, &["study.json", "draws.csv", "manifest.txt"]);
        }
        nearunit::RegimeSpec::MildlyIntegrated { .. } => {
            let study = montecarlo::dist_study_mild(&ex)?;
            report::write_json(
                out.join("study.json"),
                &json!({
                    "kind": "mildly_integrated",
                    "alpha_n": study.alpha_n,
                    "kn": study.kn,
                    "mu_n": study.mu_n,
                    "n": study.n,
                    "m": study.m,
                    "b": study.b,
                    "seed": study.seed,
                    "benchmark": panel_json(&study.benchmark),
                    "plugin": panel_json(&study.plugin),
                    "plugin_skipped": study.plugin_skipped,
                    "bootstrap": panel_json(&study.bootstrap),
                    "theory_cov": study.theory_cov,
                }),
            )?;
            write_panel_csv(out, "benchmark_draws.csv", &study.benchmark)?;
            write_panel_csv(out, "plugin_draws.csv", &study.plugin)?;
            write_panel_csv(out, "bootstrap_draws.csv", &study.bootstrap)?;
            write_manifest(out, "dist-study", &cfg)?;
            announce(
                out,
                &[
                    "study.json",
                    "benchmark_draws.csv",
                    "plugin_draws.csv",
                    "bootstrap_draws.csv",
                    "manifest.txt",
                ],
            );
        }
    }
    Ok(())
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    boot: Option<usize>,
    /// Comma-separated confidence levels.
    #[arg(long)]
    levels: Option<String>,
}

fn run_coverage(a: &CoverageArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.model.apply(&mut cfg);
    set_if(&mut cfg, "m", &a.m);
    set_if(&mut cfg, "boot", &a.boot);
    set_if(&mut cfg, "levels", &a.levels);
    let ex = experiment_config(&mut cfg)?;
    let levels = parse_f64_list(&or_set_str(&mut cfg, "levels", "0.95"))?;
    let study = montecarlo::coverage_study(&ex, &levels)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("coverage.json"), &study)?;
    write_manifest(out, "coverage", &cfg)?;
    announce(out, &["coverage.json", "manifest.txt"]);
    Ok(())
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    boot: Option<usize>,
    /// Comma-separated hypothesized slopes.
    #[arg(long)]
    alpha0: Option<String>,
    /// Design grid: start:stop:step or a comma list.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Serialize)]
struct PowerRow<'a> {
    method: &'a str,
    alpha0: f64,
    alpha: f64,
    raw: f64,
    corrected: f64,
    unavailable: usize,
}

fn run_power(a: &PowerArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.model.apply(&mut cfg);
    set_if(&mut cfg, "m", &a.m);
    set_if(&mut cfg, "boot", &a.boot);
    set_if(&mut cfg, "alpha0", &a.alpha0);
    set_if(&mut cfg, "grid", &a.grid);
    let ex = experiment_config(&mut cfg)?;
    let alpha0 = parse_f64_list(&or_set_str(&mut cfg, "alpha0", "0.95"))?;
    let grid = parse_grid(&or_set_str(&mut cfg, "grid", "0.80:1.00:0.004"))?;
    let study = montecarlo::power_study(&ex, &alpha0, &grid)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("power.json"), &study)?;
    let mut rows = Vec::new();
    for curve in &study.curves {
        for p in &curve.points {
            rows.push(PowerRow {
                method: curve.method.label(),
                alpha0: curve.alpha0,
                alpha: p.alpha,
                raw: p.raw,
                corrected: p.corrected,
                unavailable: p.unavailable,
            });
        }
    }
    report::write_rows_csv(out.join("power_curves.csv"), &rows)?;
    write_manifest(out, "power", &cfg)?;
    announce(out, &["power.json", "power_curves.csv", "manifest.txt"]);
    Ok(())
}

#[derive(Args)]
struct BubbleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    m: Option<usize>,
    /// Number of equal blocks (must divide n).
    #[arg(long)]
    block_count: Option<usize>,
    /// Episode threshold as a multiple of the marginal mean.
    #[arg(long)]
    threshold_multiple: Option<f64>,
}

fn run_bubble(a: &BubbleArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.model.apply(&mut cfg);
    set_if(&mut cfg, "m", &a.m);
    set_if(&mut cfg, "block_count", &a.block_count);
    set_if(&mut cfg, "threshold_multiple", &a.threshold_multiple);
    let ex = experiment_config(&mut cfg)?;
    let block_count = cfg.require_usize("block_count")?;
    let threshold_multiple = or_set_f64(&mut cfg, "threshold_multiple", 3.0)?;
    let study = montecarlo::bubble_study(&ex, block_count, threshold_multiple)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("bubble.json"), &study)?;
    write_manifest(out, "bubble", &cfg)?;
    announce(out, &["bubble.json", "manifest.txt"]);
    Ok(())
}

#[derive(Args)]
struct ApplyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    boot: Option<usize>,
    /// Interval confidence level.
    #[arg(long)]
    level: Option<f64>,
    /// Comma list of p-value-curve methods (plugin, bootstrap, sandwich).
    #[arg(long)]
    methods: Option<String>,
    /// Hypothesis grid for the p-value curves.
    #[arg(long)]
    grid: Option<String>,
}

fn run_apply(a: &ApplyArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "boot", &a.boot);
    set_if(&mut cfg, "level", &a.level);
    set_if(&mut cfg, "methods", &a.methods);
    set_if(&mut cfg, "grid", &a.grid);
    let methods = or_set_str(&mut cfg, "methods", "plugin,bootstrap")
        .split(',')
        .map(|tok| match tok.trim() {
            "plugin" => Ok(TestMethod::PluginSe),
            "bootstrap" => Ok(TestMethod::BootstrapSe),
            "sandwich" => Ok(TestMethod::SandwichSe),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let options = PipelineOptions {
        b: or_set_usize(&mut cfg, "boot", 1000)?,
        level: or_set_f64(&mut cfg, "level", 0.95)?,
        grid: parse_grid(&or_set_str(&mut cfg, "grid", "0.700:0.999:0.001"))?,
        methods,
        weights: weights_of(&mut cfg)?,
        seed: seed_of(&mut cfg)?,
    };
    let ds = load_series(&cfg)?;
    let bundle = dataio::apply_pipeline(&ds, &options)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("report.json"), &bundle)?;
    report::write_rows_csv(out.join("persistence.csv"), std::slice::from_ref(&bundle.row))?;
    for curve in &bundle.curves {
        let alphas: Vec<f64> = curve.points.iter().map(|p| p.0).collect();
        let ps: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        report::write_columns_csv(
            out.join(format!("pvalue_curve_{}.csv", curve.method.label())),
            &["alpha0", "p_value"],
            &[&alphas, &ps],
        )?;
    }
    write_manifest(out, "apply", &cfg)?;
    println!("{}", serde_json::to_string(&bundle.row)?);
    Ok(())
}

#[derive(Args)]
struct WindowScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Comma list of half-open index ranges, e.g. 0:63,10:103.
    #[arg(long)]
    windows: Option<String>,
}

fn run_window_scan(a: &WindowScanArgs) -> Result<()> {
    let mut cfg = a.common.merged()?;
    a.input.apply(&mut cfg);
    set_if(&mut cfg, "windows", &a.windows);
    let windows = parse_windows(
        cfg.get_str("windows")
            .ok_or_else(|| Error::InvalidInput("no --windows given".into()))?,
    )?;
    let ds = load_series(&cfg)?;
    let rows = dataio::window_sensitivity(&ds, &windows)?;
    let out = &a.common.out;
    ensure_out(out)?;
    report::write_json(out.join("windows.json"), &rows)?;
    report::write_rows_csv(out.join("windows.csv"), &rows)?;
    write_manifest(out, "window-scan", &cfg)?;
    announce(out, &["windows.json", "windows.csv", "manifest.txt"]);
    Ok(())
}

// ------------------------------------------------------------------- main

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::PluginCi(a) => run_plugin_ci(a),
        Command::Test(a) => run_test(a),
        Command::PvalueCurve(a) => run_pvalue_curve(a),
        Command::TabulateLtu(a) => run_tabulate_ltu(a),
        Command::DistStudy(a) => run_dist_study(a),
        Command::Coverage(a) => run_coverage(a),
        Command::Power(a) => run_power(a),
        Command::Bubble(a) => run_bubble(a),
        Command::Apply(a) => run_apply(a),
        Command::WindowScan(a) => run_window_scan(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors, 0 on --help/--version
        Err(e) => e.exit(),
    };
    if let Some(t) = cli.threads {
        // a hint only: per-replication random streams make results
        // identical at any worker count
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.code(), "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
