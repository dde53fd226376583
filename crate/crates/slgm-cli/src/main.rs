//! Command-line front end: simulate synthetic datasets, fit sparse plus
//! low-rank spectral models, scan hyperparameter grids, and export latent
//! components as plot-ready CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use slgm::data::{
    covariance_lags, decimate, gen_hopfield, gen_linear_ar, read_csv, write_csv, HopfieldConfig,
    LinearArConfig,
};
use slgm::model::{
    fit_with, latent_components, score, spectra, write_component_slices_csv, write_components_csv,
    write_spectra_csv, FitOptions, SLModel,
};
use slgm::{toeplitz, Error, IterationRecord, SolverConfig};

#[derive(Parser)]
#[command(name = "slgm", version, about = "Sparse plus low-rank graphical models of AR processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV (plus a metadata sidecar).
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Fit one model: covariance lags -> ADMM solve -> primal recovery.
    Fit(FitArgs),
    /// Fit a (lambda, lambda*gamma) grid and tabulate scores.
    Scan(ScanArgs),
    /// Export latent components of a fitted model on a frequency grid.
    Components(ComponentsArgs),
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Linear AR(1) network with a latent hub.
    LinearAr(SimLinearArgs),
    /// Nonlinear Hopfield oscillator network.
    Hopfield(SimHopfieldArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearPreset {
    /// Ten observed channels, seven chain edges, one white latent hub.
    Fig1,
}

#[derive(Clone, Copy, ValueEnum)]
enum HopfieldPreset {
    /// Two 4-node rings locked to a shared frequency by inter-cluster links.
    Coupled,
    /// Two independent clusters oscillating at distinct frequencies.
    Decoupled,
}

#[derive(Args)]
struct SimLinearArgs {
    #[arg(long, value_enum, required_unless_present = "config", conflicts_with = "config")]
    preset: Option<LinearPreset>,
    /// Full generator configuration as a JSON file (alternative to a preset).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of samples to keep after burn-in (presets only).
    #[arg(long, default_value_t = 4096, conflicts_with = "config")]
    n: usize,
    #[arg(long, default_value_t = 17, conflicts_with = "config")]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimHopfieldArgs {
    #[arg(long, value_enum, required_unless_present = "config", conflicts_with = "config")]
    preset: Option<HopfieldPreset>,
    /// Full generator configuration as a JSON file (alternative to a preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 7, conflicts_with = "config")]
    seed: u64,
    /// Keep every k-th sample (1 = no decimation).
    #[arg(long, default_value_t = 1)]
    decimate: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    rho0: f64,
    #[arg(long, default_value_t = 1.1)]
    tau: f64,
    #[arg(long, default_value_t = 1000.0)]
    rhomax: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps_rel: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Projected-gradient steps per ADMM iteration.
    #[arg(long, default_value_t = 1)]
    n_inner: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut config = SolverConfig::new(self.lambda, self.gamma);
        config.rho0 = self.rho0;
        config.tau = self.tau;
        config.rho_max = self.rhomax;
        config.eps_abs = self.eps_abs;
        config.eps_rel = self.eps_rel;
        config.max_iter = self.max_iter;
        config.n_inner = self.n_inner;
        config
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// AR order of the fitted model.
    #[arg(short, long)]
    p: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Relative edge-detection threshold.
    #[arg(long, default_value_t = 1e-3)]
    support_threshold: f64,
    /// Relative eigenvalue threshold for the latent rank.
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Stream the per-iteration solver log to this CSV file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    p: usize,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    /// Comma-separated lambda*gamma values (pair-budget bounds).
    #[arg(long, value_delimiter = ',', required = true)]
    lambda_gammas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho0: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1000.0)]
    rhomax: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-7)]
    eps_rel: f64,
    #[arg(long, default_value_t = 40000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1)]
    n_inner: usize,
    #[arg(long, default_value_t = 1e-3)]
    support_threshold: f64,
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    /// Worker threads for the grid (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(short, long)]
    output: PathBuf,
    /// Also save the best-scoring converged model here.
    #[arg(long)]
    best_model: Option<PathBuf>,
}

#[derive(Args)]
struct ComponentsArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Frequency grid size (even values include theta = pi).
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Also export the sampled spectra (sigma and lambda) to this CSV.
    #[arg(long)]
    spectra: Option<PathBuf>,
}

/// Process failure with one of the documented exit codes:
/// 1 I/O, 2 configuration, 3 solver.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Parse { .. } => 1,
            Error::InvalidConfig(_)
            | Error::DimensionMismatch(_)
            | Error::InsufficientData(_)
            | Error::UnstableSystem(_)
            | Error::EmptyResult(_) => 2,
            Error::InfeasibleData(_)
            | Error::NotPositiveDefinite
            | Error::SingularBlock
            | Error::EigenFailure
            | Error::DegenerateRecovery(_) => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(SimulateCommand::LinearAr(args)) => simulate_linear(&args),
        Command::Simulate(SimulateCommand::Hopfield(args)) => simulate_hopfield(&args),
        Command::Fit(args) => run_fit(&args),
        Command::Scan(args) => run_scan(&args),
        Command::Components(args) => run_components(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_sidecar(path: &Path, meta: serde_json::Value) -> Result<(), CliError> {
    let sidecar = path.with_extension("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata is serializable");
    std::fs::write(&sidecar, text).map_err(|e| CliError::io(format!("{}: {e}", sidecar.display())))
}

fn simulate_linear(args: &SimLinearArgs) -> Result<(), CliError> {
    let (cfg, source) = match (&args.preset, &args.config) {
        (Some(LinearPreset::Fig1), None) => {
            (LinearArConfig::fig1(args.n, args.seed), "preset fig1".to_string())
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(CliError::io(format!("config file not found: {}", path.display())));
            }
            (LinearArConfig::load(path)?, format!("config {}", path.display()))
        }
        _ => unreachable!("clap enforces preset xor config"),
    };
    let ts = gen_linear_ar(&cfg)?;
    write_csv(&ts, &args.output)?;
    write_sidecar(
        &args.output,
        serde_json::json!({
            "command": "simulate linear-ar",
            "source": source,
            "channels": ts.n_channels(),
            "config": serde_json::to_value(&cfg).expect("config is serializable"),
            "created_unix": unix_now(),
        }),
    )?;
    println!(
        "wrote {} ({} samples x {} channels)",
        args.output.display(),
        ts.n_samples(),
        ts.n_channels()
    );
    Ok(())
}

fn simulate_hopfield(args: &SimHopfieldArgs) -> Result<(), CliError> {
    let (cfg, source) = match (&args.preset, &args.config) {
        (Some(HopfieldPreset::Coupled), None) => {
            (HopfieldConfig::coupled(args.seed), "preset coupled".to_string())
        }
        (Some(HopfieldPreset::Decoupled), None) => {
            (HopfieldConfig::decoupled(args.seed), "preset decoupled".to_string())
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(CliError::io(format!("config file not found: {}", path.display())));
            }
            (HopfieldConfig::load(path)?, format!("config {}", path.display()))
        }
        _ => unreachable!("clap enforces preset xor config"),
    };
    let ts = gen_hopfield(&cfg)?;
    let ts = decimate(&ts, args.decimate.max(1))?;
    write_csv(&ts, &args.output)?;
    write_sidecar(
        &args.output,
        serde_json::json!({
            "command": "simulate hopfield",
            "source": source,
            "decimate": args.decimate,
            "config": serde_json::to_value(&cfg).expect("config is serializable"),
            "created_unix": unix_now(),
        }),
    )?;
    println!(
        "wrote {} ({} samples x {} channels)",
        args.output.display(),
        ts.n_samples(),
        ts.n_channels()
    );
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    if !args.input.exists() {
        return Err(CliError::io(format!(
            "input file not found: {}",
            args.input.display()
        )));
    }
    let ts = read_csv(&args.input)?;
    let lags = covariance_lags(&ts, args.p)?;
    let c = toeplitz(&lags);
    let config = args.solver.config();
    let opts = FitOptions {
        support_threshold: args.support_threshold,
        rank_tol: args.rank_tol,
    };
    let mut log = match &args.log {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{}", IterationRecord::CSV_HEADER)
                .map_err(|e| CliError::io(e.to_string()))?;
            Some(w)
        }
        None => None,
    };
    let model = fit_with(&c, &config, &opts, |record| {
        if let Some(w) = log.as_mut() {
            let _ = writeln!(w, "{}", record.csv_row());
        }
    })?;
    if let Some(mut w) = log {
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    if !model.converged {
        eprintln!(
            "warning: solver did not converge within {} iterations (model written anyway)",
            config.max_iter
        );
    }
    let s = score(&model, &c, ts.n_samples());
    model.save(&args.output)?;
    println!(
        "fit: m={} p={} converged={} iterations={} rank={} edges={} score={:.6}",
        model.m,
        model.p,
        model.converged,
        model.iterations,
        model.rank,
        model.nnz_pairs(),
        s
    );
    Ok(())
}

struct ScanRow {
    lambda: f64,
    lambda_gamma: f64,
    status: &'static str,
    nnz: Option<usize>,
    rank: Option<usize>,
    fit: Option<f64>,
    score: Option<f64>,
    model: Option<SLModel>,
}

fn run_scan(args: &ScanArgs) -> Result<(), CliError> {
    if !args.input.exists() {
        return Err(CliError::io(format!(
            "input file not found: {}",
            args.input.display()
        )));
    }
    let ts = read_csv(&args.input)?;
    let lags = covariance_lags(&ts, args.p)?;
    let c = toeplitz(&lags);
    let opts = FitOptions {
        support_threshold: args.support_threshold,
        rank_tol: args.rank_tol,
    };
    let grid: Vec<(f64, f64)> = args
        .lambdas
        .iter()
        .flat_map(|&lam| args.lambda_gammas.iter().map(move |&lg| (lam, lg)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError {
            code: 2,
            message: e.to_string(),
        })?;
    let n_samples = ts.n_samples();
    let rows: Vec<ScanRow> = pool.install(|| {
        grid.par_iter()
            .map(|&(lambda, lambda_gamma)| {
                let mut config = SolverConfig::new(lambda, lambda_gamma / lambda);
                config.rho0 = args.rho0;
                config.tau = args.tau;
                config.rho_max = args.rhomax;
                config.eps_abs = args.eps_abs;
                config.eps_rel = args.eps_rel;
                config.max_iter = args.max_iter;
                config.n_inner = args.n_inner;
                match slgm::model::fit(&c, &config, &opts) {
                    Ok(model) => {
                        let s = score(&model, &c, n_samples);
                        let f = slgm::model::fit_term(&model, &c);
                        ScanRow {
                            lambda,
                            lambda_gamma,
                            status: if model.converged { "converged" } else { "not_converged" },
                            nnz: Some(model.nnz_pairs()),
                            rank: Some(model.rank),
                            fit: Some(f),
                            score: Some(s),
                            model: Some(model),
                        }
                    }
                    Err(_) => ScanRow {
                        lambda,
                        lambda_gamma,
                        status: "failed",
                        nnz: None,
                        rank: None,
                        fit: None,
                        score: None,
                        model: None,
                    },
                }
            })
            .collect()
    });

    // Argmin of the score among converged rows.
    let best_index = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status == "converged")
        .min_by(|(_, a), (_, b)| {
            a.score
                .unwrap_or(f64::INFINITY)
                .partial_cmp(&b.score.unwrap_or(f64::INFINITY))
                .unwrap()
        })
        .map(|(i, _)| i);
    if best_index.is_none() {
        eprintln!("warning: no grid point converged");
    }

    let file = File::create(&args.output)
        .map_err(|e| CliError::io(format!("{}: {e}", args.output.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "lambda,lambda_gamma,status,nnz_pairs,rank,fit,score,best")
        .map_err(|e| CliError::io(e.to_string()))?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let fmt_u = |v: Option<usize>| v.map_or(String::new(), |x| format!("{x}"));
    for (i, row) in rows.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.lambda,
            row.lambda_gamma,
            row.status,
            fmt_u(row.nnz),
            fmt_u(row.rank),
            fmt(row.fit),
            fmt(row.score),
            if Some(i) == best_index { "true" } else { "false" }
        )
        .map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))?;

    if let (Some(path), Some(i)) = (&args.best_model, best_index) {
        if let Some(model) = &rows[i].model {
            model.save(path)?;
        }
    }
    println!("wrote {} ({} grid points)", args.output.display(), rows.len());
    Ok(())
}

fn run_components(args: &ComponentsArgs) -> Result<(), CliError> {
    if !args.model.exists() {
        return Err(CliError::io(format!(
            "model file not found: {}",
            args.model.display()
        )));
    }
    let model = SLModel::load(&args.model)?;
    let sf = spectra(&model.x_star, &model.l_star, args.grid);
    let sf = latent_components(sf, args.rank_tol)?;
    let file = File::create(&args.output)
        .map_err(|e| CliError::io(format!("{}: {e}", args.output.display())))?;
    let mut w = BufWriter::new(file);
    write_components_csv(&sf, &mut w).map_err(|e| CliError::io(e.to_string()))?;
    w.flush().map_err(|e| CliError::io(e.to_string()))?;

    if model.p >= 1 && sf.index_pi().is_some() {
        let slices_path = args.output.with_extension("slices.csv");
        let file = File::create(&slices_path)
            .map_err(|e| CliError::io(format!("{}: {e}", slices_path.display())))?;
        let mut w = BufWriter::new(file);
        write_component_slices_csv(&sf, &mut w).map_err(|e| CliError::io(e.to_string()))?;
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
        println!("wrote {} and {}", args.output.display(), slices_path.display());
    } else {
        println!("wrote {}", args.output.display());
    }

    if let Some(path) = &args.spectra {
        let file =
            File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_spectra_csv(&sf, &mut w).map_err(|e| CliError::io(e.to_string()))?;
        w.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(())
}
