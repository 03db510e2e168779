//! Command-line front end: market smile ingestion, calibration pipeline
//! orchestration, one-off pricing, and simulation, with plot-ready CSV
//! outputs.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure,
//! 4 non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ousv::calibration::fit_smile_stats;
use ousv::cumulants::SmileStats;
use ousv::market::load_market_csv;
use ousv::montecarlo::{mc_smile_stats, simulate, write_ensemble, SimConfig};
use ousv::pipeline::{
    self, run_pipeline, replay_pipeline, PipelineConfig, RunManifest,
};
use ousv::pricer::{self, ContourConfig};
use ousv::{Error, ModelKind, ModelParams};

#[derive(Parser)]
#[command(
    name = "ousv",
    version,
    about = "Linear OU stochastic-volatility model: pricing, calibration, simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Model kind for calibration and simulation dynamics. Pricing always
    /// evaluates the linear-model characteristic function; calibrated
    /// parent parameters price through the stationary-start identity map.
    #[arg(long, global = true, default_value = "linear")]
    model: ModelKind,

    /// Master RNG seed for every simulation-backed stage.
    #[arg(long, global = true, default_value_t = 20_071_122)]
    seed: u64,

    /// Monte Carlo path count.
    #[arg(long, global = true, default_value_t = 100_000)]
    paths: usize,

    /// Euler steps per year.
    #[arg(long = "steps-per-year", global = true, default_value_t = 250)]
    steps_per_year: usize,

    /// Contour placement as a fraction of the CF pole ordinate.
    #[arg(long, global = true, default_value_t = pricer::DEFAULT_LAMBDA)]
    lambda: f64,

    /// Absolute quadrature tolerance (as a fraction of spot for prices).
    #[arg(long = "quad-tol", global = true, default_value_t = pricer::DEFAULT_QUAD_ABS_TOL)]
    quad_tol: f64,

    /// Directory for report files.
    #[arg(long = "out-dir", global = true, default_value = "ousv-out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-maturity (sigma, zeta, kappa) from a market smile CSV.
    FitSmile {
        /// Market smile CSV (tau_yr, r_per_yr, log_moneyness, implied_vol).
        #[arg(long)]
        input: PathBuf,
    },
    /// Two-step calibration, smile reconstruction, and full reporting.
    Calibrate {
        /// Market smile CSV.
        #[arg(long)]
        input: PathBuf,
        /// Also emit the return density curve.
        #[arg(long = "emit-pdf")]
        emit_pdf: bool,
        /// Horizon for the density curve, in years.
        #[arg(long = "pdf-tau", default_value_t = 1.0)]
        pdf_tau: f64,
        /// Multistart seed "alpha,k,m,rho" (repeatable); default is an
        /// eight-point design over the standard bounds box.
        #[arg(long = "seed-point", value_parser = parse_seed_point, allow_hyphen_values = true)]
        seed_points: Vec<SeedPoint>,
        /// Replay a recorded manifest instead of configuring a fresh run.
        #[arg(long = "from-manifest")]
        from_manifest: Option<PathBuf>,
    },
    /// Price one European call at fixed parameters.
    Price {
        /// TOML file with alpha, k, m, rho, z0 (and optional r).
        #[arg(long = "params-file")]
        params_file: PathBuf,
        #[arg(long)]
        s0: f64,
        #[arg(long)]
        strike: f64,
        /// Maturity in years.
        #[arg(long)]
        tau: f64,
        /// Risk-free rate, per year.
        #[arg(long, default_value_t = 0.0)]
        r: f64,
    },
    /// Reprice a dataset's full strike grid at fixed parameters.
    Smile {
        /// Market smile CSV supplying the (tau, strike, rate) grid.
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "params-file")]
        params_file: PathBuf,
    },
    /// Emit the return density curve at fixed parameters.
    Pdf {
        #[arg(long = "params-file")]
        params_file: PathBuf,
        /// Horizon in years.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long = "x-lo", default_value_t = -2.0, allow_negative_numbers = true)]
        x_lo: f64,
        #[arg(long = "x-hi", default_value_t = 2.0, allow_negative_numbers = true)]
        x_hi: f64,
        #[arg(long, default_value_t = 801)]
        points: usize,
    },
    /// Simulate terminal log-returns and report their smile statistics.
    Simulate {
        #[arg(long = "params-file")]
        params_file: PathBuf,
        /// Horizon in years.
        #[arg(long)]
        tau: f64,
    },
}

#[derive(Clone, Debug)]
struct SeedPoint([f64; 4]);

fn parse_seed_point(s: &str) -> Result<SeedPoint, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected 'alpha,k,m,rho', got '{s}'"));
    }
    let mut v = [0.0_f64; 4];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("'{}' is not a number", p.trim()))?;
    }
    Ok(SeedPoint(v))
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        // malformed or invalid inputs
        Error::InvalidParameter { .. }
        | Error::ParseError { .. }
        | Error::SchemaMismatch { .. }
        | Error::EmptyBlock { .. }
        | Error::Io { .. }
        | Error::InsufficientQuotes { .. }
        | Error::UnsupportedKind { .. }
        | Error::StationarityViolation { .. }
        | Error::DegenerateGamma { .. } => 2,
        // numerical failures
        Error::SingularDenominator { .. }
        | Error::ContourSingularity { .. }
        | Error::StripViolation { .. }
        | Error::EmptyContourRegion { .. }
        | Error::QuadratureNonConvergence { .. }
        | Error::OutOfBounds { .. }
        | Error::NonPositiveVariance { .. } => 3,
        // iteration budgets exhausted
        Error::NoConvergence { .. }
        | Error::NonConvergence { .. }
        | Error::AllStartsFailed { .. } => 4,
    }
}

fn load_params(path: &Path) -> ousv::Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let params: ModelParams = toml::from_str(&text).map_err(|e| Error::SchemaMismatch {
        message: format!("{}: {e}", path.display()),
    })?;
    params.check()?;
    Ok(params)
}

fn load_manifest(path: &Path) -> ousv::Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::SchemaMismatch {
        message: format!("{}: {e}", path.display()),
    })
}

fn write_out(dir: &Path, name: &str, content: &str) -> ousv::Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(path)
}

fn contour_for(params: &ModelParams, cli: &Cli) -> ousv::Result<ContourConfig> {
    let base = pricer::contour_offset(params, cli.lambda)?;
    Ok(ContourConfig {
        quad_abs_tol: cli.quad_tol,
        quad_rel_tol: pricer::DEFAULT_QUAD_REL_TOL,
        ..base
    })
}

fn run(cli: &Cli) -> ousv::Result<()> {
    match &cli.command {
        Command::FitSmile { input } => {
            let dataset = load_market_csv(input)?;
            let stats: Vec<SmileStats> = dataset
                .quote_blocks
                .iter()
                .map(|b| fit_smile_stats(&b.quotes, dataset.s0))
                .collect::<ousv::Result<_>>()?;
            print!("{}", pipeline::fitted_stats_txt(&stats));
            let csv_path = write_out(&cli.out_dir, "fitted_stats.csv", &pipeline::fitted_stats_csv(&stats))?;
            write_out(&cli.out_dir, "fitted_stats.txt", &pipeline::fitted_stats_txt(&stats))?;
            println!("\nwrote {}", csv_path.display());
            Ok(())
        }
        Command::Calibrate { input, emit_pdf, pdf_tau, seed_points, from_manifest } => {
            let dataset = load_market_csv(input)?;
            let bundle = match from_manifest {
                Some(mpath) => {
                    let manifest = load_manifest(mpath)?;
                    replay_pipeline(&manifest, &dataset, &cli.out_dir)?
                }
                None => {
                    let mut config = PipelineConfig::new(cli.model, &cli.out_dir);
                    config.command = "calibrate".into();
                    config.seed = cli.seed;
                    config.n_paths = cli.paths;
                    config.n_steps = cli.steps_per_year;
                    config.lambda = cli.lambda;
                    config.quad_abs_tol = cli.quad_tol;
                    config.emit_pdf = *emit_pdf;
                    config.pdf_tau = *pdf_tau;
                    config.seed_points = seed_points.iter().map(|s| s.0).collect();
                    run_pipeline(&dataset, &config)?
                }
            };
            print!("{}", pipeline::fitted_stats_txt(&bundle.fitted_stats));
            println!();
            print!(
                "{}",
                pipeline::parameters_txt(
                    bundle.calibration.as_ref(),
                    &bundle.params_used,
                    bundle.manifest.model
                )
            );
            println!("\nwrote {} files under {}", bundle.files.len(), cli.out_dir.display());
            Ok(())
        }
        Command::Price { params_file, s0, strike, tau, r } => {
            let params = load_params(params_file)?;
            let cc = contour_for(&params, cli)?;
            let price = pricer::lewis_call(*s0, *strike, *r, *tau, &params, 0.0, params.z0, &cc)?;
            println!("price {price}");
            match pricer::implied_vol(price, *s0, *strike, *r, *tau) {
                Ok(iv) => println!("implied_vol {iv}"),
                Err(Error::OutOfBounds { .. }) => {
                    println!("implied_vol n/a (price at a no-arbitrage bound)")
                }
                Err(e) => return Err(e),
            }
            Ok(())
        }
        Command::Smile { input, params_file } => {
            let dataset = load_market_csv(input)?;
            let params = load_params(params_file)?;
            let mut config = PipelineConfig::new(cli.model, &cli.out_dir);
            config.command = "smile".into();
            config.lambda = cli.lambda;
            config.quad_abs_tol = cli.quad_tol;
            config.fixed_params = Some(params);
            let bundle = run_pipeline(&dataset, &config)?;
            print!("{}", pipeline::smiles_txt(&bundle.smile_rows));
            println!("\nwrote {} files under {}", bundle.files.len(), cli.out_dir.display());
            Ok(())
        }
        Command::Pdf { params_file, tau, x_lo, x_hi, points } => {
            let params = load_params(params_file)?;
            if !(points > &1) || !(x_hi > x_lo) {
                return Err(Error::InvalidParameter {
                    name: "points/x range",
                    value: *points as f64,
                    requirement: "need points > 1 and x_hi > x_lo",
                });
            }
            let mut curve = Vec::with_capacity(*points);
            for i in 0..*points {
                let x = x_lo + (x_hi - x_lo) * i as f64 / (*points - 1) as f64;
                let d = pricer::pdf_from_cf(x, *tau, 0.0, params.z0, &params)?;
                curve.push((x, d));
            }
            let mass: f64 = curve
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum();
            let path = write_out(&cli.out_dir, "pdf.csv", &pipeline::pdf_csv(&curve))?;
            println!("points {points}");
            println!("mass_on_grid {mass}");
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Simulate { params_file, tau } => {
            let params = load_params(params_file)?;
            let cfg = SimConfig::new(cli.paths, cli.steps_per_year, cli.seed)?;
            let ensemble = simulate(cli.model, &params, *tau, &cfg)?;
            let stats = mc_smile_stats(&ensemble)?;
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::Io {
                path: cli.out_dir.display().to_string(),
                message: e.to_string(),
            })?;
            let bin_path = cli.out_dir.join("ensemble.f64");
            write_ensemble(&bin_path, &ensemble, cli.model)?;
            println!("model {}", cli.model);
            println!("tau {tau}");
            println!("paths {}", cli.paths);
            println!("sigma {} +/- {}", stats.sigma, stats.sigma_err);
            println!("zeta {} +/- {}", stats.zeta, stats.zeta_err);
            println!("kappa {} +/- {}", stats.kappa, stats.kappa_err);
            println!("wrote {}", bin_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
