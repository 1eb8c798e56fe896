use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qcnn_var::backtest::score_forecast;
use qcnn_var::baselines::GarchParams;
use qcnn_var::conv::checkpoint;
use qcnn_var::data::{fit_scaler, load_prices, log_returns, ReturnSeries};
use qcnn_var::harness::{
    fit_single_qcnn, qcnn_forecast, rebuild_summaries, run_experiment, run_single, single_seed,
    summary_text, write_report, ExperimentConfig, Method,
};
use qcnn_var::synth::{simulate_panel, write_panel, Process, SimSpec};
use qcnn_var::Error;

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  1  usage or configuration error
  2  data error (missing or malformed input, too little data)
  3  fit failure

Settings are resolved as: built-in defaults, then the --config file, then flags.

Report layout written by `run` (under --out):
  run_manifest.json, failures.csv,
  summary_theta_<θ>.csv and .txt,
  theta_<θ>/<method>.csv (asset_id,exceedance_rate,dq_stat,p_value,mean_var),
  theta_<θ>/<method>_fits.json, theta_<θ>/joint_qcnn.ckpt,
  theta_<θ>/forecasts/<method>/<asset>.csv (date,return,var,exceedance)";

/// One-day-ahead Value at Risk with quantile convolutional networks and
/// GARCH / quantile-regression / historical baselines.
#[derive(Parser, Debug)]
#[command(name = "qcnn", version, after_help = AFTER_HELP)]
struct Cli {
    /// Log more (-v info, -vv debug); warnings are always shown
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a panel of return series and write price CSVs plus manifest.txt
    Simulate(SimulateArgs),
    /// Run the full comparison experiment and write a report directory
    Run(RunArgs),
    /// Train a single-asset network on one price file and save a checkpoint
    Train(TrainArgs),
    /// Forecast VaR over the test segment of one price file
    Forecast(ForecastArgs),
    /// Score a forecast CSV against the returns of a price file
    Backtest(BacktestArgs),
    /// Recompute the summary tables of an existing report directory
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
enum ProcessKind {
    IidNormal,
    Garch11,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "garch11")]
    process: ProcessKind,
    /// Returns per series
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent series
    #[arg(long, default_value_t = 1)]
    assets: usize,
    /// Mean return (both processes)
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    /// Standard deviation of iid_normal returns
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = 2e-6)]
    omega: f64,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value_t = 0.85)]
    beta: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Flags mirroring the `[model]`, `[train]` and `[data]` config keys.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// Config file (TOML with [data], [experiment], [model], [train])
    #[arg(long)]
    config: Option<PathBuf>,
    /// experiment.seed
    #[arg(long)]
    seed: Option<u64>,
    /// data.stride
    #[arg(long)]
    stride: Option<usize>,
    /// model.window
    #[arg(long)]
    window: Option<usize>,
    /// model.hidden_layers
    #[arg(long)]
    hidden_layers: Option<usize>,
    /// model.filters
    #[arg(long)]
    filters: Option<usize>,
    /// model.kernel
    #[arg(long)]
    kernel: Option<usize>,
    /// model.qr_lags
    #[arg(long)]
    qr_lags: Option<usize>,
    /// train.epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// train.batch_size
    #[arg(long)]
    batch_size: Option<usize>,
    /// train.rho
    #[arg(long)]
    rho: Option<f64>,
    /// train.epsilon
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// data.manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// data.sample_size
    #[arg(long)]
    sample_size: Option<usize>,
    /// experiment.thetas (comma-separated or repeated)
    #[arg(long = "theta", value_delimiter = ',')]
    thetas: Vec<f64>,
    /// experiment.methods: constant, garch, qr, qcnn, joint_qcnn
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// experiment.output
    #[arg(long)]
    out: Option<PathBuf>,
    /// experiment.workers (0: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// experiment.forecasts
    #[arg(long)]
    forecasts: Option<bool>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Price CSV (date,close)
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    theta: f64,
    /// Checkpoint to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Price CSV (date,close)
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the checkpoint's level, else 0.05
    #[arg(long)]
    theta: Option<f64>,
    /// constant, garch, qr or qcnn
    #[arg(long, default_value = "qcnn")]
    method: String,
    /// Checkpoint from `train`; without it a qcnn is trained first
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output CSV (date,return,var); standard output if omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    /// Price CSV (date,close)
    #[arg(long)]
    data: PathBuf,
    /// Forecast CSV with `date` and `var` columns
    #[arg(long)]
    forecast: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    theta: f64,
    /// Also write the result as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report directory written by `run`
    #[arg(long)]
    dir: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FitFailure(_) => 3,
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn base_config(flags: &ModelFlags) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_model_flags(&mut cfg, flags);
    Ok(cfg)
}

fn apply_model_flags(cfg: &mut ExperimentConfig, f: &ModelFlags) {
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = f.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(
        seed => experiment.seed,
        stride => data.stride,
        window => model.window,
        hidden_layers => model.hidden_layers,
        filters => model.filters,
        kernel => model.kernel,
        qr_lags => model.qr_lags,
        epochs => train.epochs,
        batch_size => train.batch_size,
        rho => train.rho,
        epsilon => train.epsilon,
    );
}

/// Defaults, then the config file, then flags.
fn resolve_run_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = base_config(&args.model)?;
    if let Some(m) = &args.manifest {
        cfg.data.manifest = m.clone();
    }
    if let Some(k) = args.sample_size {
        cfg.data.sample_size = Some(k);
    }
    if !args.thetas.is_empty() {
        cfg.experiment.thetas = args.thetas.clone();
    }
    if !args.methods.is_empty() {
        cfg.experiment.methods = args.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    }
    if let Some(out) = &args.out {
        cfg.experiment.output = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.experiment.workers = w;
    }
    if let Some(f) = args.forecasts {
        cfg.experiment.forecasts = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn load_series(path: &Path) -> Result<ReturnSeries, Error> {
    log_returns(&load_prices(path)?)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Error> {
    let process = match a.process {
        ProcessKind::IidNormal => Process::IidNormal { mu: a.mu, sigma: a.sigma },
        ProcessKind::Garch11 => Process::Garch11(GarchParams {
            omega: a.omega,
            alpha: a.alpha,
            beta: a.beta,
            mu: a.mu,
        }),
    };
    if a.assets == 0 {
        return Err(Error::Config("--assets must be at least 1".into()));
    }
    let spec = SimSpec {
        process,
        length: a.n,
        seed: a.seed,
    };
    let sims = simulate_panel(&spec, a.assets)?;
    let manifest = write_panel(&sims, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), Error> {
    let cfg = resolve_run_config(a)?;
    let exp = in_pool(cfg.experiment.workers, || run_experiment(&cfg))??;
    let files = write_report(&exp, &cfg.experiment.output)?;
    for res in &exp.results {
        print!("{}", summary_text(&res.summary));
        println!();
    }
    let failures: usize = exp.results.iter().map(|r| r.failures.len()).sum();
    log::info!("wrote {} files to {}", files.files.len(), cfg.experiment.output.display());
    if failures > 0 {
        eprintln!("{failures} task(s) failed; see failures.csv");
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    asset_id: String,
    theta: f64,
    seed: u64,
    windows: usize,
    initial_loss: f64,
    final_loss: f64,
    steps: usize,
    checkpoint: String,
}

fn cmd_train(a: &TrainArgs) -> Result<(), Error> {
    let cfg = base_config(&a.model)?;
    cfg.train_config(0).validate()?;
    let series = load_series(&a.data)?;
    let (_, trained) = fit_single_qcnn(&series, a.theta, &cfg)?;
    checkpoint::save(&trained.model, &a.out)?;
    let summary = TrainSummary {
        asset_id: series.asset_id.clone(),
        theta: a.theta,
        seed: single_seed(cfg.experiment.seed, &series.asset_id, a.theta),
        windows: (series.train().len() - cfg.model.window).div_ceil(cfg.data.stride),
        initial_loss: trained.report.initial_loss,
        final_loss: trained.report.final_loss,
        steps: trained.report.steps,
        checkpoint: a.out.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ForecastRow {
    date: String,
    #[serde(rename = "return")]
    ret: f64,
    var: f64,
}

fn cmd_forecast(a: &ForecastArgs) -> Result<(), Error> {
    let cfg = base_config(&a.model)?;
    let series = load_series(&a.data)?;
    let method: Method = a.method.parse()?;
    let var = match (method, &a.checkpoint) {
        (Method::Qcnn, Some(path)) => {
            let model = checkpoint::load(path)?;
            if let Some(t) = a.theta {
                if t != model.theta {
                    return Err(Error::Config(format!(
                        "--theta {t} does not match the checkpoint's level {}",
                        model.theta
                    )));
                }
            }
            let scaler = fit_scaler(&series)?;
            qcnn_forecast(&model, &scaler, &series)?
        }
        (Method::JointQcnn, _) => {
            return Err(Error::Config(
                "joint_qcnn needs several assets; use `run` or a checkpoint with --method qcnn".into(),
            ))
        }
        (m, Some(_)) if m != Method::Qcnn => {
            return Err(Error::Config("--checkpoint only applies to --method qcnn".into()))
        }
        (m, _) => {
            cfg.train_config(0).validate()?;
            run_single(&series, a.theta.unwrap_or(0.05), m, &cfg)?.forecast.var
        }
    };
    let rows = series
        .test_dates()
        .iter()
        .zip(series.test())
        .zip(&var)
        .map(|((d, &y), &v)| ForecastRow {
            date: d.to_string(),
            ret: y,
            var: v,
        });
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Domain(format!("writing forecasts: {e}")))?;
    }
    w.flush().map_err(|e| Error::Domain(format!("writing forecasts: {e}")))?;
    Ok(())
}

#[derive(Deserialize)]
struct ForecastInput {
    date: String,
    var: f64,
}

fn cmd_backtest(a: &BacktestArgs) -> Result<(), Error> {
    let series = load_series(&a.data)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: a.forecast.clone(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(&a.forecast).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&a.forecast, io),
        other => parse_err(0, format!("{other:?}")),
    })?;
    let mut returns = Vec::new();
    let mut var = Vec::new();
    for row in reader.deserialize::<ForecastInput>() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let idx = series
            .dates
            .iter()
            .position(|d| d.to_string() == row.date)
            .ok_or_else(|| parse_err(0, format!("no return on {} in {}", row.date, a.data.display())))?;
        returns.push(series.returns[idx]);
        var.push(row.var);
    }
    let result = score_forecast(&returns, &var, a.theta)?;
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    if let Some(p) = &a.out {
        fs::write(p, format!("{json}\n")).map_err(|e| Error::io(p, e))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<(), Error> {
    for table in rebuild_summaries(&a.dir)? {
        print!("{}", summary_text(&table));
        println!();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Report(a) => cmd_report(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(argv: &[&str]) -> RunArgs {
        let cli = Cli::try_parse_from(std::iter::once("qcnn").chain(argv.iter().copied())).unwrap();
        match cli.command {
            Command::Run(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(
            &path,
            "[data]\nmanifest = \"m.txt\"\n[experiment]\nseed = 5\nthetas = [0.01]\n[train]\nepochs = 7\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();

        let from_file = resolve_run_config(&run_args(&["run", "--config", p])).unwrap();
        assert_eq!(from_file.experiment.seed, 5);
        assert_eq!(from_file.experiment.thetas, vec![0.01]);
        assert_eq!(from_file.train.epochs, 7);
        assert_eq!(from_file.train.batch_size, 128);
        assert_eq!(from_file.data.manifest, dir.path().join("m.txt"));

        let flagged = resolve_run_config(&run_args(&[
            "run", "--config", p, "--seed", "9", "--theta", "0.05,0.001", "--epochs", "3", "--methods",
            "qr,garch", "--manifest", "other.txt", "--out", "rep",
        ]))
        .unwrap();
        assert_eq!(flagged.experiment.seed, 9);
        assert_eq!(flagged.experiment.thetas, vec![0.05, 0.001]);
        assert_eq!(flagged.train.epochs, 3);
        assert_eq!(flagged.experiment.methods, vec![Method::Qr, Method::Garch]);
        assert_eq!(flagged.data.manifest, PathBuf::from("other.txt"));
        assert_eq!(flagged.experiment.output, PathBuf::from("rep"));
    }

    #[test]
    fn every_config_key_has_a_flag() {
        let cfg = ExperimentConfig::default();
        let table: toml::Table = toml::from_str(&cfg.to_toml()).unwrap();
        let help = {
            let mut cmd = <Cli as clap::CommandFactory>::command();
            cmd.find_subcommand_mut("run").unwrap().render_long_help().to_string()
        };
        for (section, keys) in &table {
            for key in keys.as_table().unwrap().keys() {
                let doc = format!("{section}.{key}");
                assert!(help.contains(&doc), "no flag documents {doc}");
            }
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::FitFailure("x".into())), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Domain("x".into())), 2);
    }
}
