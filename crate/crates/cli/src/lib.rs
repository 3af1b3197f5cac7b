//! Command-line driver: `predict`, `experiment`, `scan` and `stationarity`.
//!
//! The machine-readable payload goes to standard output (or the configured
//! `output` file); progress and diagnostics go to standard error.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use minrisk::experiment::{failed_csv_row, sample_trial_market, solve_trial_market, EXPERIMENT_CSV_HEADER};
use minrisk::replica::stationary::{stationarity_diagnostic, StationaryOptions};
use minrisk::replica::PREDICTION_CSV_HEADER;
use minrisk::{
    compare, compute_moments, predict, run_experiment, scan, AggregateResult, ComparisonReport, EnsembleAverages,
    EnsembleMoments, ReplicaPrediction, ScanAxis, TrialConfig,
};
use serde::Serialize;
use serde_json::json;

pub use config::{OutputFormat, PredictionMoments, RunConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_REGIME: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_NON_CONVERGENCE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] minrisk::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

pub fn core_exit_code(e: &minrisk::Error) -> i32 {
    use minrisk::Error::*;
    match e.root() {
        Regime { .. } => EXIT_REGIME,
        Degenerate(_) => EXIT_DEGENERATE,
        NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "minrisk", version, about = "Replica predictions and Monte Carlo checks for minimum-risk portfolios")]
pub struct Cli {
    /// Worker threads for trials (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the config's output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Overrides the config's output path.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the replica prediction for a config.
    Predict { config: PathBuf },
    /// Run the Monte Carlo experiment and compare with the prediction.
    Experiment {
        config: PathBuf,
        /// Write trial 0's X, J (binary) and portfolio (CSV) here.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        /// Write the JSON summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run one experiment per grid value along an axis.
    Scan {
        config: PathBuf,
        /// alpha, N or F_scale.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Solve the free-energy stationarity conditions at finite beta.
    Stationarity {
        config: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Core(minrisk::Error::NonConvergence { residual, .. }) = &e {
                let _ = writeln!(stderr, "residuals: {residual:?}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let load = |path: &Path| -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(path)?;
        if let Some(f) = cli.format {
            c.format = f;
        }
        if let Some(o) = &cli.output {
            c.output = Some(o.clone());
        }
        Ok(c)
    };
    match &cli.command {
        Command::Predict { config } => cmd_predict(&load(config)?, stdout),
        Command::Experiment {
            config,
            dump_dir,
            summary,
        } => {
            let mut c = load(config)?;
            if dump_dir.is_some() {
                c.dump_dir = dump_dir.clone();
            }
            if summary.is_some() {
                c.summary = summary.clone();
            }
            cmd_experiment(&c, stdout, stderr)
        }
        Command::Scan {
            config,
            axis,
            grid,
            summary,
        } => {
            let mut c = load(config)?;
            if summary.is_some() {
                c.summary = summary.clone();
            }
            let axis = match axis {
                Some(a) => a.parse::<ScanAxis>().map_err(|e| CliError::Config(e.to_string()))?,
                None => c
                    .scan
                    .as_ref()
                    .map(|s| s.axis)
                    .ok_or_else(|| CliError::Config("no scan axis given (--axis or scan.axis)".into()))?,
            };
            let grid = match grid {
                Some(g) => g.clone(),
                None => c.scan.as_ref().map(|s| s.grid.clone()).unwrap_or_default(),
            };
            cmd_scan(&c, axis, &grid, stdout, stderr)
        }
        Command::Stationarity { config, beta } => {
            let mut c = load(config)?;
            if let Some(b) = beta {
                c.stationarity.beta = *b;
            }
            cmd_stationarity(&c, stdout, stderr)
        }
    }
}

/// Writes `payload` to the configured output file, or to `stdout`.
fn emit(config: &RunConfig, stdout: &mut dyn Write, payload: &str) -> Result<(), CliError> {
    match &config.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(payload.as_bytes())?;
            f.flush()?;
        }
        None => stdout.write_all(payload.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable payload");
    s.push('\n');
    s
}

fn write_summary<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::write(path, to_json(value))?;
    }
    Ok(())
}

fn prediction_moments(config: &RunConfig, trial: &TrialConfig) -> Result<EnsembleMoments, CliError> {
    Ok(match config.prediction_moments {
        PredictionMoments::Analytic => {
            let averages = EnsembleAverages::analytic(&trial.v_spec, &trial.b_spec)?;
            trial.f_spec.validate()?;
            EnsembleMoments::from_averages(&averages, trial.f_spec.second_moment())?
        }
        PredictionMoments::Realized => {
            let market = sample_trial_market(trial, 0)?;
            compute_moments(&market.ensemble, market.factors.strength())?
        }
    })
}

pub fn cmd_predict(config: &RunConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    config.check_paths()?;
    let trial = config.trial_config();
    if trial.n < 2 {
        return Err(CliError::Config(format!("N: need at least 2 assets, got {}", trial.n)));
    }
    if !(trial.alpha.is_finite() && trial.alpha > 1.0) || trial.periods() <= trial.n {
        return Err(minrisk::Error::Regime { alpha: trial.alpha }.into());
    }
    let moments = prediction_moments(config, &trial)?;
    let prediction = predict(&moments, trial.effective_alpha())?;
    let payload = match config.format {
        OutputFormat::Csv => format!("{PREDICTION_CSV_HEADER}\n{}\n", prediction.csv_row()),
        OutputFormat::Json => to_json(&PredictReport {
            config,
            moments: &moments,
            prediction: &prediction,
        }),
    };
    emit(config, stdout, &payload)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct PredictReport<'a> {
    config: &'a RunConfig,
    moments: &'a EnsembleMoments,
    prediction: &'a ReplicaPrediction,
}

#[derive(Serialize)]
struct ExperimentReport<'a> {
    config: &'a RunConfig,
    result: &'a AggregateResult,
    comparison: &'a ComparisonReport,
}

fn dump_trial_zero(trial: &TrialConfig, dir: &Path) -> Result<(), CliError> {
    let market = sample_trial_market(trial, 0)?;
    let (j, realized, _) = solve_trial_market(&market, trial.effective_alpha())?;
    market
        .returns
        .write_binary(BufWriter::new(File::create(dir.join("trial0_X.bin"))?))?;
    j.write_binary(BufWriter::new(File::create(dir.join("trial0_J.bin"))?))?;
    realized
        .portfolio
        .write_csv(BufWriter::new(File::create(dir.join("trial0_portfolio.csv"))?))?;
    Ok(())
}

pub fn cmd_experiment(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    config.check_paths()?;
    let tolerances = config.tolerances()?;
    let trial = config.trial_config();
    trial.validate()?;
    if trial.trials < 2 {
        return Err(CliError::Config(format!(
            "trials: need at least 2 for a standard error, got {}",
            trial.trials
        )));
    }
    writeln!(stderr, "running {} trials at N={}, p={}", trial.trials, trial.n, trial.periods())?;
    let result = run_experiment(&trial)?;
    let report = compare(&result, &tolerances);
    for v in &report.verdicts {
        writeln!(
            stderr,
            "{:<10} mean {:.6} (se {:.2e}) replica {:.6} dev {:+.3}% z {:.2} {}",
            v.quantity.name(),
            v.empirical,
            v.se,
            v.predicted,
            100.0 * v.relative_deviation,
            v.z_score,
            if v.pass { "ok" } else { "FAIL" }
        )?;
    }
    if let Some(dir) = &config.dump_dir {
        dump_trial_zero(&trial, dir)?;
        writeln!(stderr, "wrote trial 0 dumps to {}", dir.display())?;
    }
    let summary = ExperimentReport {
        config,
        result: &result,
        comparison: &report,
    };
    let payload = match config.format {
        OutputFormat::Csv => format!("{EXPERIMENT_CSV_HEADER}\n{}\n", result.csv_row(&report.status())),
        OutputFormat::Json => to_json(&summary),
    };
    emit(config, stdout, &payload)?;
    write_summary(&config.summary, &summary)?;
    Ok(if report.pass { EXIT_PASS } else { EXIT_TOLERANCE })
}

pub fn cmd_scan(
    config: &RunConfig,
    axis: ScanAxis,
    grid: &[f64],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    config.check_paths()?;
    let tolerances = config.tolerances()?;
    if grid.is_empty() {
        return Err(CliError::Config("scan grid is empty".into()));
    }
    let trial = config.trial_config();
    let points = scan(&trial, axis, grid)?;

    let mut csv = format!("{EXPERIMENT_CSV_HEADER}\n");
    let mut json_points = Vec::with_capacity(points.len());
    let mut first_error: Option<i32> = None;
    let mut any_tolerance_failure = false;
    for point in &points {
        match &point.outcome {
            Ok(result) => {
                let report = compare(result, &tolerances);
                any_tolerance_failure |= !report.pass;
                writeln!(stderr, "{}={}: {}", axis.name(), point.value, report.status())?;
                csv.push_str(&result.csv_row(&report.status()));
                json_points.push(json!({
                    "value": point.value,
                    "result": result,
                    "comparison": report,
                }));
            }
            Err(e) => {
                first_error.get_or_insert(core_exit_code(e));
                writeln!(stderr, "{}={}: error: {e}", axis.name(), point.value)?;
                let status = format!("error: {e}");
                csv.push_str(&failed_csv_row(&point.config, &status));
                json_points.push(json!({
                    "value": point.value,
                    "config": point.config,
                    "error": e.to_string(),
                }));
            }
        }
        csv.push('\n');
    }
    let summary = json!({
        "config": config,
        "axis": axis,
        "grid": grid,
        "points": json_points,
    });
    let payload = match config.format {
        OutputFormat::Csv => csv,
        OutputFormat::Json => to_json(&summary),
    };
    emit(config, stdout, &payload)?;
    write_summary(&config.summary, &summary)?;
    Ok(match first_error {
        Some(code) => code,
        None if any_tolerance_failure => EXIT_TOLERANCE,
        None => EXIT_PASS,
    })
}

pub fn cmd_stationarity(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    config.check_paths()?;
    let settings = &config.stationarity;
    if !(settings.beta.is_finite() && settings.beta > 0.0) {
        return Err(CliError::Config(format!(
            "stationarity.beta: must be finite and positive, got {}",
            settings.beta
        )));
    }
    let trial = config.trial_config();
    trial.validate()?;
    let market = sample_trial_market(&trial, 0)?;
    trial.f_spec.validate()?;
    let diagnostic = stationarity_diagnostic(
        &market.ensemble,
        trial.f_spec.second_moment(),
        trial.effective_alpha(),
        settings.beta,
        &StationaryOptions::default(),
    )?;
    let pass = diagnostic.passes(settings.gradient_tolerance, settings.gap_tolerance);
    writeln!(
        stderr,
        "beta={} max|grad|={:.3e} epsilon: derivative {:.6} replica {:.6} gap {:.3e} {}",
        settings.beta,
        diagnostic.max_abs_gradient,
        diagnostic.epsilon_beta_derivative,
        diagnostic.epsilon_predicted,
        diagnostic.relative_gap,
        if pass { "ok" } else { "FAIL" }
    )?;
    let payload = to_json(&json!({
        "config": config,
        "diagnostic": diagnostic,
        "pass": pass,
    }));
    emit(config, stdout, &payload)?;
    Ok(if pass { EXIT_PASS } else { EXIT_TOLERANCE })
}
