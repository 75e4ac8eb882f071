//! `dyadreg` command line: `fit` and `simulate`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | output could not be written |
//! | 2 | invalid flags or input data (unreadable file, parse error, bad panel) |
//! | 3 | estimation did not converge (fit report still written) |
//! | 4 | variance estimation failed: singular Gamma or a non-positive variance (report still written) |

pub mod io;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::data::{expand_node_covariates, DataError};
use crate::fit::{fit_poisson_pml, FitError, FitOptions, FitResult};
use crate::simulate::{run_coverage, SimConfig, SimError};
use crate::vcov::{assemble_vcov, sym_scores, Estimator, Sigma1Denominator, VcovOptions};

use self::io::{load_dyads_csv, load_nodes_csv, DyadColumns};
use self::report::{write_coverage_csv, write_fit_csv, write_json, FitReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_VARIANCE: i32 = 4;

/// Environment variable supplying the default for `--threads`.
pub const THREADS_ENV: &str = "DYADREG_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row}: cannot parse {column} value `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid flag: {0}")]
    InvalidFlag(String),
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => EXIT_OUTPUT,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dyadreg", version, about = "Dyadic Poisson pseudo-maximum-likelihood regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a PPML model to a directed-dyad CSV file and report standard errors.
    Fit(FitArgs),
    /// Run the Monte Carlo coverage experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VcovArg {
    Huber,
    Dyad,
    Fg,
}

impl From<VcovArg> for Estimator {
    fn from(v: VcovArg) -> Self {
        match v {
            VcovArg::Huber => Estimator::Huber,
            VcovArg::Dyad => Estimator::Dyad,
            VcovArg::Fg => Estimator::Fg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    Printed,
    #[value(name = "n-2")]
    NMinus2,
}

impl From<DenominatorArg> for Sigma1Denominator {
    fn from(d: DenominatorArg) -> Self {
        match d {
            DenominatorArg::Printed => Sigma1Denominator::Printed,
            DenominatorArg::NMinus2 => Sigma1Denominator::NMinus2,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directed-dyad CSV file, one row per ordered pair.
    #[arg(long)]
    pub dyads: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// Dyad-level regressor columns (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "")]
    pub regressors: Vec<String>,
    /// Column holding the sending node's label.
    #[arg(long)]
    pub ego: String,
    /// Column holding the receiving node's label.
    #[arg(long)]
    pub alter: String,
    /// Node attribute CSV file.
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Label column of the node file (default: first column).
    #[arg(long)]
    pub node_label: Option<String>,
    /// Node columns appended with the ego's values.
    #[arg(long, value_delimiter = ',')]
    pub ego_cols: Vec<String>,
    /// Node columns appended with the alter's values.
    #[arg(long, value_delimiter = ',')]
    pub alter_cols: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Variance estimators to report (repeatable; default all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub vcov: Vec<VcovArg>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Printed)]
    pub sigma1_denominator: DenominatorArg,
    /// Include full covariance matrices in the JSON report.
    #[arg(long)]
    pub covariance: bool,
    /// Convergence threshold on the score's infinity norm.
    #[arg(long, default_value_t = 1e-10)]
    pub gradient_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub sigma_a: f64,
    /// True (dist, w3_ego, w3_alter) coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,-0.5,0.5")]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Fit without the nuisance intercept.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub vcov: Vec<VcovArg>,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Printed)]
    pub sigma1_denominator: DenominatorArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_DATA } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fit(args) => with_threads(args.threads, || cmd_fit(&args)),
        Command::Simulate(args) => with_threads(args.threads, || cmd_simulate(&args)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_threads<F>(threads: Option<usize>, f: F) -> Result<i32, CliError>
where
    F: FnOnce() -> Result<i32, CliError> + Send,
{
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::InvalidFlag(format!("{THREADS_ENV}=`{v}` is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    match threads {
        None => f(),
        Some(0) => Err(CliError::InvalidFlag("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::InvalidFlag(format!("--threads: {e}")))?
            .install(f),
    }
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::InvalidFlag(format!("--level {level} must lie in (0, 1)")))
    }
}

fn estimators(args: &[VcovArg]) -> Vec<Estimator> {
    if args.is_empty() {
        return Estimator::ALL.to_vec();
    }
    let mut out: Vec<Estimator> = args.iter().map(|&a| a.into()).collect();
    out.sort();
    out.dedup();
    out
}

fn write_output<F>(out: &Option<PathBuf>, render: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let result = match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            render(&mut w).and_then(|_| w.flush().map_err(|e| CliError::Output(e.to_string())))
        }
        None => render(&mut std::io::stdout().lock()),
    };
    result.map_err(|e| match e {
        CliError::Output(_) => e,
        other => CliError::Output(other.to_string()),
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    check_level(args.level)?;
    if !(args.gradient_tol > 0.0) || args.max_iter == 0 {
        return Err(CliError::InvalidFlag(
            "--gradient-tol must be positive and --max-iter at least 1".into(),
        ));
    }
    let columns = DyadColumns {
        outcome: args.outcome.clone(),
        regressors: args.regressors.iter().filter(|s| !s.is_empty()).cloned().collect(),
        ego: args.ego.clone(),
        alter: args.alter.clone(),
    };
    let mut dataset = load_dyads_csv(&args.dyads, &columns, false)?;
    if let Some(path) = &args.nodes {
        let table = load_nodes_csv(path, args.node_label.as_deref())?;
        dataset = expand_node_covariates(&dataset, &table, &args.ego_cols, &args.alter_cols)?;
    } else if !args.ego_cols.is_empty() || !args.alter_cols.is_empty() {
        return Err(CliError::InvalidFlag("--ego-cols/--alter-cols require --nodes".into()));
    }
    if !args.no_intercept {
        dataset = dataset.with_intercept();
    }
    if dataset.n_regressors() == 0 {
        return Err(CliError::InvalidFlag("model has no regressors".into()));
    }

    let options = FitOptions {
        max_iterations: args.max_iter,
        gradient_tolerance: args.gradient_tol,
        ..Default::default()
    };
    let ests = estimators(&args.vcov);
    let denominator: Sigma1Denominator = args.sigma1_denominator.into();

    let (fit, mut code): (FitResult, i32) = match fit_poisson_pml(&dataset, &options) {
        Ok(fit) => (fit, EXIT_OK),
        Err(FitError::NotConverged(partial)) => (*partial, EXIT_NOT_CONVERGED),
        Err(FitError::AllZeroOutcomes) => {
            return Err(CliError::InvalidFlag(
                "all outcomes are zero; drop the intercept or check --outcome".into(),
            ))
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_NOT_CONVERGED);
        }
    };

    let mut extra_warnings = Vec::new();
    let vcov = if fit.converged {
        let opts = VcovOptions {
            denominator,
            estimators: ests.clone(),
        };
        match sym_scores(&dataset, &fit.theta_hat).and_then(|sym| assemble_vcov(&fit, &sym, &opts)) {
            Ok(v) => Some(v),
            Err(e) => {
                eprintln!("error: {e}");
                extra_warnings.push(e.to_string());
                code = EXIT_VARIANCE;
                None
            }
        }
    } else {
        eprintln!(
            "warning: no convergence after {} iterations (score norm {:.3e})",
            fit.iterations, fit.final_score_norm
        );
        None
    };

    let mut report = FitReport::new(
        &dataset,
        &fit,
        vcov.as_ref(),
        &ests,
        args.level,
        denominator,
        args.covariance,
    );
    report.warnings.extend(extra_warnings);
    write_output(&args.out, |w| match args.format {
        Format::Json => write_json(&report, w),
        Format::Csv => write_fit_csv(&report, w),
    })
    .map(|_| code)
    .or_else(|e| {
        eprintln!("error: {e}");
        Ok(EXIT_OUTPUT)
    })
}

pub fn sim_config(args: &SimulateArgs) -> Result<SimConfig, CliError> {
    check_level(args.level)?;
    let theta: [f64; 3] = args.theta.as_slice().try_into().map_err(|_| {
        CliError::InvalidFlag(format!("--theta needs 3 values, got {}", args.theta.len()))
    })?;
    let config = SimConfig {
        n_nodes: args.n,
        theta_true: theta,
        sigma: args.sigma,
        sigma_a: args.sigma_a,
        n_reps: args.reps,
        nominal_level: args.level,
        master_seed: args.seed,
        estimators: estimators(&args.vcov),
        sigma1_denominator: args.sigma1_denominator.into(),
        intercept: !args.no_intercept,
    };
    config
        .validate()
        .map_err(|e| CliError::InvalidFlag(e.to_string()))?;
    Ok(config)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let config = sim_config(args)?;
    let report = match run_coverage(&config) {
        Ok(r) => r,
        Err(e @ SimError::AllReplicationsFailed(_)) => {
            eprintln!("error: {e}");
            return Ok(EXIT_NOT_CONVERGED);
        }
        Err(e) => return Err(CliError::InvalidFlag(e.to_string())),
    };
    write_output(&args.out, |w| match args.format {
        Format::Json => write_json(&report, w),
        Format::Csv => write_coverage_csv(&report, w),
    })
    .map(|_| EXIT_OK)
    .or_else(|e| {
        eprintln!("error: {e}");
        Ok(EXIT_OUTPUT)
    })
}
