//! The `tarma` command-line tool.
//!
//! Human-readable summaries go to standard output; every artifact goes to a
//! file, together with a [`RunManifest`] that `tarma replay` can re-run.
//! Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.

pub mod manifest;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use manifest::{sha256_file, write_json, InputDigest, RunManifest};

use crate::error::{ErrorClass, Result, TarmaError};
use crate::estimation::{profile_search, robust_outlier_weights, FitConfig, FitResult};
use crate::evaluation::{
    asymptotic_bias_curve, forecast_horizon, iterated_forecasts, mape, mape_sum, run_mc_experiment, select_alpha,
    write_long_csv, BiasCurveConfig, McConfig,
};
use crate::model::{
    contaminate, contaminate_innovations, simulate, ContaminationSpec, InnovationKind, InnovationSpec, OutlierKind,
    Pattern, TarmaParams, DEFAULT_BURN_IN,
};
use crate::rng::{replication_seed, Purpose};
use crate::series::{load_csv, log_returns, split, ColumnSelector, TimeSeries};

#[derive(Debug, Parser)]
#[command(name = "tarma", version, about = "Robust estimation, simulation and forecasting for threshold ARMA models")]
pub struct Cli {
    /// Worker threads for grid searches and Monte Carlo runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a TARMA series.
    Simulate(SimulateArgs),
    /// Add additive or replacement outliers to a series.
    Contaminate(ContaminateArgs),
    /// Fit a TARMA model by robust profile M-estimation.
    Fit(FitArgs),
    /// Forecast from a fitted model.
    Forecast(ForecastArgs),
    /// Monte Carlo bias and variance across alpha.
    Montecarlo(ExperimentArgs),
    /// Asymptotic squared bias against outlier size.
    Biascurve(ExperimentArgs),
    /// Robust weights and the most down-weighted observations of a fit.
    Outliers(OutliersArgs),
    /// Choose alpha by out-of-sample MAPE.
    SelectAlpha(SelectAlphaArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Value column, by header name or 0-based position.
    #[arg(long, default_value = "value")]
    pub column: String,
    /// Model log returns `ln(y_t / y_{t-1})` of the column instead.
    #[arg(long)]
    pub log_returns: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TARMA parameters as JSON.
    #[arg(long, conflicts_with = "case", required_unless_present = "case")]
    pub params: Option<PathBuf>,
    /// One of the four reference parameterisations.
    #[arg(long)]
    pub case: Option<usize>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Innovation variance of Gaussian innovations.
    #[arg(long, default_value_t = 1.0, conflicts_with = "innovations")]
    pub sigma2: f64,
    /// Innovation distribution as JSON, e.g. a Gaussian mixture.
    #[arg(long)]
    pub innovations: Option<PathBuf>,
    /// Contamination spec as JSON (ao, ro or io).
    #[arg(long)]
    pub contamination: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    EquallySpaced,
    Bernoulli,
    Patchy,
}

#[derive(Debug, Args)]
pub struct ContaminateArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub k: f64,
    #[arg(long, default_value_t = 0.95)]
    pub sign_prob: f64,
    #[arg(long, value_enum, default_value = "equally-spaced")]
    pub pattern: PatternArg,
    /// Probability of staying in the outlier state (patchy pattern).
    #[arg(long, default_value_t = 0.8)]
    pub persistence: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Fit configuration as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the loss with the power divergence at this alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixes the threshold (requires --delay).
    #[arg(long, requires = "delay", allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Fixes the delay (requires --threshold).
    #[arg(long, requires = "threshold")]
    pub delay: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Series the model was fitted to.
    #[command(flatten)]
    pub input: DataArgs,
    /// Fit JSON written by `tarma fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    /// Actual values over the horizon (same column and transform as --data).
    /// With actuals the forecasts are one step ahead; without, iterated.
    #[arg(long)]
    pub actuals: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutliersArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub top_m: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectAlphaArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Base fit configuration; its loss is replaced by each alpha.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub alphas: Vec<f64>,
    /// Observations held out at the end of the series.
    #[arg(long, default_value_t = 12)]
    pub test_len: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses `args` (program name first), runs, reports errors on standard
/// error and maps them to exit codes.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &args[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &TarmaError) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Numeric => 3,
    }
}

pub fn run(cli: Cli, args: &[String]) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            if j == 0 {
                return Err(TarmaError::InvalidArgument("--jobs must be >= 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| TarmaError::InvalidArgument(e.to_string()))?
    };
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Contaminate(a) => cmd_contaminate(a, args),
        Command::Fit(a) => cmd_fit(a, args),
        Command::Forecast(a) => cmd_forecast(a, args),
        Command::Montecarlo(a) => cmd_montecarlo(a, args),
        Command::Biascurve(a) => cmd_biascurve(a, args),
        Command::Outliers(a) => cmd_outliers(a, args),
        Command::SelectAlpha(a) => cmd_select_alpha(a, args),
        Command::Replay(a) => cmd_replay(a),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| TarmaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| TarmaError::InvalidArgument(format!("{}: {e}", path.display())))
}

fn manifest_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn load_data(d: &DataArgs, manifest: &mut RunManifest) -> Result<TimeSeries> {
    manifest.input(&d.data)?;
    let s = load_csv(&d.data, &ColumnSelector::from(d.column.as_str()))?;
    if d.log_returns {
        log_returns(&s)
    } else {
        Ok(s)
    }
}

fn data_config(d: &DataArgs) -> serde_json::Value {
    serde_json::json!({
        "data": d.data,
        "column": d.column,
        "log_returns": d.log_returns,
    })
}

fn write_series_csv(path: &Path, series: &TimeSeries, flags: Option<&[bool]>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| TarmaError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| TarmaError::Csv(e.to_string());
    let mut header = vec!["t"];
    if series.timestamps().is_some() {
        header.push("timestamp");
    }
    header.push("value");
    if flags.is_some() {
        header.push("outlier");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, v) in series.values().iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        if let Some(ts) = series.timestamps() {
            rec.push(ts[i].clone());
        }
        rec.push(v.to_string());
        if let Some(f) = flags {
            rec.push(u8::from(f[i]).to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| TarmaError::io(path, e))
}

fn cmd_simulate(a: SimulateArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("simulate", args);
    m.master_seed = Some(a.seed);
    let params: TarmaParams = match (&a.params, a.case) {
        (Some(p), _) => {
            m.input(p)?;
            read_json(p)?
        }
        (None, Some(c)) => TarmaParams::benchmark_case(c)
            .ok_or_else(|| TarmaError::InvalidArgument(format!("unknown case {c}; expected 1 to 4")))?,
        (None, None) => return Err(TarmaError::InvalidArgument("--params or --case is required".into())),
    };
    params.validate(false)?;
    if a.n == 0 {
        return Err(TarmaError::InvalidArgument("n must be >= 1".into()));
    }
    let kind: InnovationKind = match &a.innovations {
        Some(p) => {
            m.input(p)?;
            read_json(p)?
        }
        None => InnovationKind::Gaussian { sigma2: a.sigma2 },
    };
    let contamination: Option<ContaminationSpec> = match &a.contamination {
        Some(p) => {
            m.input(p)?;
            Some(read_json(p)?)
        }
        None => None,
    };
    let mut innov = InnovationSpec {
        kind,
        seed: replication_seed(a.seed, 0, Purpose::Innovations),
        contamination: None,
    };
    if let Some(c) = contamination.as_ref().filter(|c| c.kind == OutlierKind::Io) {
        innov = contaminate_innovations(&innov, c)?;
    }
    innov.validate()?;
    let mut series = simulate(&params, a.n, &innov, a.burn_in)?;
    let mut flags = None;
    if let Some(c) = contamination.as_ref().filter(|c| c.kind != OutlierKind::Io) {
        let (s, times) = contaminate(&series, c, replication_seed(a.seed, 0, Purpose::Contamination))?;
        let mut f = vec![false; s.len()];
        for t in times {
            f[t - 1] = true;
        }
        series = s;
        flags = Some(f);
    }
    write_series_csv(&a.out, &series, flags.as_deref())?;
    m.config = serde_json::json!({
        "params": params,
        "n": a.n,
        "burn_in": a.burn_in,
        "innovations": innov,
        "contamination": contamination,
    });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    let v = series.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let upper = (params.d..v.len()).filter(|&i| v[i - params.d] > params.r).count();
    println!(
        "simulated {} observations (seed {}); mean {:.4}; upper-regime share {:.3}",
        v.len(),
        a.seed,
        mean,
        upper as f64 / (v.len() - params.d.min(v.len())).max(1) as f64
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_contaminate(a: ContaminateArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("contaminate", args);
    m.master_seed = Some(a.seed);
    let series = load_data(&a.input, &mut m)?;
    let kind: OutlierKind = serde_json::from_value(serde_json::Value::String(a.kind.to_ascii_lowercase()))
        .map_err(|_| TarmaError::InvalidArgument(format!("unknown outlier kind `{}`; expected ao or ro", a.kind)))?;
    if kind == OutlierKind::Io {
        return Err(TarmaError::InvalidArgument(
            "innovation outliers act through the recursion; use `tarma simulate --contamination` instead".into(),
        ));
    }
    let pattern = match a.pattern {
        PatternArg::EquallySpaced => Pattern::EquallySpaced,
        PatternArg::Bernoulli => Pattern::IidBernoulli,
        PatternArg::Patchy => Pattern::Patchy {
            persistence: a.persistence,
        },
    };
    let spec = ContaminationSpec {
        sign_prob: a.sign_prob,
        pattern,
        ..ContaminationSpec::new(kind, a.epsilon, a.k)
    };
    let (out, times) = contaminate(&series, &spec, replication_seed(a.seed, 0, Purpose::Contamination))?;
    let mut flags = vec![false; out.len()];
    for &t in &times {
        flags[t - 1] = true;
    }
    write_series_csv(&a.out, &out, Some(&flags))?;
    m.config = serde_json::json!({ "input": data_config(&a.input), "contamination": spec });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    println!("{} outliers injected into {} observations", times.len(), out.len());
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Reads a fit configuration, defaulting the loss to alpha = 0 with a
/// warning when it is absent.
pub fn resolve_fit_config(path: Option<&Path>, alpha: Option<f64>, fixed: Option<(f64, usize)>) -> Result<FitConfig> {
    let mut value: serde_json::Value = match path {
        Some(p) => read_json(p)?,
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| TarmaError::InvalidArgument("fit configuration must be a JSON object".into()))?;
    if let Some(a) = alpha {
        obj.insert(
            "loss".into(),
            serde_json::json!({ "family": "power_divergence", "alpha": a }),
        );
    }
    let loss = obj
        .entry("loss")
        .or_insert_with(|| serde_json::json!({ "family": "power_divergence" }));
    if let Some(l) = loss.as_object_mut() {
        let family = l.get("family").and_then(|f| f.as_str()).unwrap_or("power_divergence").to_string();
        if family == "power_divergence" && !l.contains_key("alpha") {
            log::warn!("alpha not given; using alpha = 0 (least squares)");
            l.insert("family".into(), "power_divergence".into());
            l.insert("alpha".into(), 0.0.into());
        }
    }
    let mut cfg: FitConfig = serde_json::from_value(value)
        .map_err(|e| TarmaError::InvalidArgument(format!("fit configuration: {e}")))?;
    if let Some((r, d)) = fixed {
        cfg = cfg.fixed(r, d);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_num(v: f64) -> String {
    format!("{v:>10.4}")
}

/// Coefficient table with standard errors in parentheses beneath.
pub fn fit_summary(fit: &FitResult) -> String {
    let p = &fit.params;
    let se = fit.std_errors.as_deref();
    let layout = p.layout();
    let mut out = String::new();
    let loss = match fit.loss.family {
        crate::loss::LossFamily::PowerDivergence { alpha } => format!("power divergence, alpha = {alpha}"),
        crate::loss::LossFamily::Bisquare { c } => format!("bisquare, c = {c}"),
        crate::loss::LossFamily::LeastSquares => "least squares".into(),
    };
    let _ = writeln!(out, "TARMA({}, {})  r = {:.4}  d = {}  [{loss}]", p.p, p.q, p.r, p.d);
    let _ = writeln!(out, "{:<12}{:>12}{:>12}", "", "lower", "upper");
    let mut rows: Vec<(String, usize, usize)> = Vec::new();
    for j in 0..=p.p {
        let name = if j == 0 { "intercept".to_string() } else { format!("ar{j}") };
        rows.push((name, layout.phi(0) + j, layout.phi(1) + j));
    }
    for j in 0..p.q {
        rows.push((format!("ma{}", j + 1), layout.theta(0) + j, layout.theta(1) + j));
    }
    let lam = p.lambda();
    for (name, lo, hi) in rows {
        let _ = writeln!(out, "{name:<12}  {}  {}", fmt_num(lam[lo]), fmt_num(lam[hi]));
        if let Some(se) = se {
            let _ = writeln!(
                out,
                "{:<12}  {:>10}  {:>10}",
                "",
                format!("({:.4})", se[lo]),
                format!("({:.4})", se[hi])
            );
        }
    }
    if se.is_none() {
        let _ = writeln!(
            out,
            "standard errors unavailable: {}",
            fit.covariance_error.as_deref().unwrap_or("not computed")
        );
    }
    let _ = writeln!(
        out,
        "sigma_hat = {:.4}  objective = {:.4}  IRLS passes = {}  converged = {}",
        fit.sigma_hat, fit.objective, fit.convergence.iterations, fit.convergence.converged
    );
    out
}

fn cmd_fit(a: FitArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("fit", args);
    let series = load_data(&a.input, &mut m)?;
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    let fixed = a.threshold.zip(a.delay);
    let cfg = resolve_fit_config(a.config.as_deref(), a.alpha, fixed)?;
    let fit = profile_search(&series, &cfg)?;
    write_json(&a.out, &fit)?;
    m.config = serde_json::json!({ "input": data_config(&a.input), "fit": to_value(&cfg)? });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    print!("{}", fit_summary(&fit));
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ForecastOutput {
    horizon: usize,
    one_step: bool,
    forecasts: Vec<f64>,
    actuals: Option<Vec<f64>>,
    mape: Option<f64>,
    mape_sum: Option<f64>,
}

fn cmd_forecast(a: ForecastArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("forecast", args);
    if a.horizon == 0 {
        return Err(TarmaError::InvalidArgument("horizon must be >= 1".into()));
    }
    let train = load_data(&a.input, &mut m)?;
    m.input(&a.fit)?;
    let fit: FitResult = read_json(&a.fit)?;
    let out = match &a.actuals {
        Some(p) => {
            let actual_args = DataArgs {
                data: p.clone(),
                column: a.input.column.clone(),
                log_returns: a.input.log_returns,
            };
            let actuals = load_data(&actual_args, &mut m)?;
            if actuals.len() < a.horizon {
                return Err(TarmaError::InvalidArgument(format!(
                    "{} actual values for horizon {}",
                    actuals.len(),
                    a.horizon
                )));
            }
            let test = TimeSeries::new(actuals.values()[..a.horizon].to_vec())?;
            let f = forecast_horizon(&train, &test, &fit)?;
            ForecastOutput {
                horizon: a.horizon,
                one_step: true,
                mape: Some(mape(test.values(), &f)?),
                mape_sum: Some(mape_sum(test.values(), &f)?),
                actuals: Some(test.into_values()),
                forecasts: f,
            }
        }
        None => ForecastOutput {
            horizon: a.horizon,
            one_step: false,
            forecasts: iterated_forecasts(&train, &fit.params, fit.residual_start - 1, a.horizon)?,
            actuals: None,
            mape: None,
            mape_sum: None,
        },
    };
    write_json(&a.out, &out)?;
    m.config = serde_json::json!({ "input": data_config(&a.input), "horizon": a.horizon, "actuals": a.actuals });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    for (i, f) in out.forecasts.iter().enumerate() {
        match &out.actuals {
            Some(act) => println!("h={:<3} forecast {:>10.4}  actual {:>10.4}", i + 1, f, act[i]),
            None => println!("h={:<3} forecast {:>10.4}", i + 1, f),
        }
    }
    if let Some(v) = out.mape {
        println!("MAPE = {v:.4}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TarmaError::io(dir, e))
}

fn write_csv_rows(path: &Path, rows: &[crate::evaluation::LongRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| TarmaError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_long_csv(rows, &mut w)?;
    w.flush().map_err(|e| TarmaError::io(path, e))
}

fn cmd_montecarlo(a: ExperimentArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("montecarlo", args);
    m.input(&a.config)?;
    let mut cfg: McConfig = read_json(&a.config)?;
    cfg.master_seed = a.seed;
    m.master_seed = Some(a.seed);
    let report = run_mc_experiment(&cfg)?;
    ensure_dir(&a.out_dir)?;
    let json = a.out_dir.join("mc_report.json");
    let csv = a.out_dir.join("mc_report.csv");
    write_json(&json, &report)?;
    write_csv_rows(&csv, &report.long_rows())?;
    m.config = to_value(&cfg)?;
    m.outputs = vec![json, csv];
    m.write(&a.out_dir.join("manifest.json"))?;
    println!("{:>6} {:>6} {:>10} {:>10} {:>10} {:>8}", "alpha", "n", "bias2", "variance", "mse", "failed");
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for c in &report.cells {
        println!(
            "{:>6} {:>6} {:>10} {:>10} {:>10} {:>8}",
            c.alpha,
            c.n,
            show(c.bias2),
            show(c.variance),
            show(c.mse),
            c.failures
        );
    }
    println!("wrote {}", a.out_dir.display());
    if report.all_failed() {
        return Err(TarmaError::AllFailed("every Monte Carlo cell failed".into()));
    }
    Ok(())
}

fn cmd_biascurve(a: ExperimentArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("biascurve", args);
    m.input(&a.config)?;
    let mut cfg: BiasCurveConfig = read_json(&a.config)?;
    cfg.master_seed = a.seed;
    m.master_seed = Some(a.seed);
    let report = asymptotic_bias_curve(&cfg)?;
    ensure_dir(&a.out_dir)?;
    let json = a.out_dir.join("bias_curve.json");
    let csv = a.out_dir.join("bias_curve.csv");
    write_json(&json, &report)?;
    write_csv_rows(&csv, &report.long_rows())?;
    m.config = to_value(&cfg)?;
    m.outputs = vec![json, csv];
    m.write(&a.out_dir.join("manifest.json"))?;
    println!("{:>8} {:>6} {:>6} {:>12}", "epsilon", "k", "alpha", "median B");
    for md in &report.medians {
        let b = md.b.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
        println!("{:>8} {:>6} {:>6} {:>12}", md.epsilon, md.k, md.alpha, b);
    }
    println!("wrote {}", a.out_dir.display());
    if report.all_failed() {
        return Err(TarmaError::AllFailed("every bias-curve cell failed".into()));
    }
    Ok(())
}

fn cmd_outliers(a: OutliersArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("outliers", args);
    let series = load_data(&a.input, &mut m)?;
    m.input(&a.fit)?;
    let fit: FitResult = read_json(&a.fit)?;
    if fit.n_obs != series.len() {
        return Err(TarmaError::InvalidArgument(format!(
            "fit was made on {} observations but the data has {}",
            fit.n_obs,
            series.len()
        )));
    }
    let w = robust_outlier_weights(&fit, a.top_m)?;
    let file = std::fs::File::create(&a.out).map_err(|e| TarmaError::io(&a.out, e))?;
    let mut out = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| TarmaError::Csv(e.to_string());
    let stamps = series.timestamps().is_some();
    let mut header = vec!["t"];
    if stamps {
        header.push("timestamp");
    }
    header.extend(["x", "residual", "weight"]);
    out.write_record(&header).map_err(csv_err)?;
    println!("{:>6} {:>12} {:>12} {:>14}", "t", "x_t", "residual", "weight");
    for &t in &w.flagged {
        let i = t - w.first_time;
        let mut rec = vec![t.to_string()];
        if let Some(ts) = series.timestamps() {
            rec.push(ts[t - 1].clone());
        }
        let x = series.values()[t - 1];
        rec.extend([x.to_string(), fit.residuals[i].to_string(), w.weights[i].to_string()]);
        out.write_record(&rec).map_err(csv_err)?;
        println!("{:>6} {:>12.4} {:>12.4} {:>14.6e}", t, x, fit.residuals[i], w.weights[i]);
    }
    out.flush().map_err(|e| TarmaError::io(&a.out, e))?;
    m.config = serde_json::json!({ "input": data_config(&a.input), "fit": a.fit, "top_m": a.top_m });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_select_alpha(a: SelectAlphaArgs, args: &[String]) -> Result<()> {
    let mut m = RunManifest::new("select-alpha", args);
    let series = load_data(&a.input, &mut m)?;
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    let base = resolve_fit_config(a.config.as_deref(), Some(0.0), None)?;
    let (train, test) = split(&series, a.test_len)?;
    let sel = select_alpha(&train, &test, &a.alphas, &base)?;
    write_json(&a.out, &sel)?;
    m.config = serde_json::json!({
        "input": data_config(&a.input),
        "base": to_value(&base)?,
        "alphas": a.alphas,
        "test_len": a.test_len,
    });
    m.outputs.push(a.out.clone());
    m.write(&manifest_path(&a.manifest, &a.out))?;
    println!("{:>6} {:>10}", "alpha", "MAPE");
    for row in &sel.table {
        let v = row.mape.map_or_else(|| "failed".to_string(), |x| format!("{x:.4}"));
        println!("{:>6} {:>10}", row.alpha, v);
    }
    println!("selected alpha = {} (MAPE {:.4})", sel.alpha, sel.mape);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    manifest.verify_inputs()?;
    let argv: Vec<String> = std::iter::once("tarma".to_string()).chain(manifest.args.iter().cloned()).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| TarmaError::InvalidArgument(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(TarmaError::InvalidArgument("a manifest cannot replay a replay".into()));
    }
    run(cli, &manifest.args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_defaults_to_zero() {
        let cfg = resolve_fit_config(None, None, Some((0.0, 1))).unwrap();
        assert_eq!(cfg.loss.alpha(), Some(0.0));
        let cfg = resolve_fit_config(None, Some(0.8), None).unwrap();
        assert_eq!(cfg.loss.alpha(), Some(0.8));
    }

    #[test]
    fn summary_lists_every_coefficient() {
        let p = TarmaParams::benchmark_case(2).unwrap();
        let s = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 1), 500).unwrap();
        let cfg = FitConfig::new(1, 1, crate::LossSpec::power_divergence(0.8)).fixed(0.0, 1);
        let fit = profile_search(&s, &cfg).unwrap();
        let text = fit_summary(&fit);
        for name in ["intercept", "ar1", "ma1"] {
            assert!(text.contains(name));
        }
        assert_eq!(text.matches('(').count(), 2 * 3 + 1);
    }

    #[test]
    fn parses_subcommands() {
        assert!(Cli::try_parse_from(["tarma", "simulate", "--case", "1", "--n", "5", "--out", "x"]).is_err());
        assert!(Cli::try_parse_from(["tarma", "simulate", "--case", "1", "--n", "5", "--seed", "1", "--out", "x"]).is_ok());
        assert!(Cli::try_parse_from(["tarma", "montecarlo", "--config", "c", "--out-dir", "o"]).is_err());
        let c = Cli::try_parse_from(["tarma", "--jobs", "2", "select-alpha", "--data", "d", "--out", "o", "--alphas", "0.2,0.4"])
            .unwrap();
        match c.command {
            Command::SelectAlpha(a) => assert_eq!(a.alphas, vec![0.2, 0.4]),
            _ => panic!(),
        }
    }
}
