//! Euler-Maruyama simulation of the risk-neutral dynamics and Monte Carlo
//! estimators with standard errors.
//!
//! All three dynamics share the driver convention of the calibration
//! workflow: the parameter vector is the linear-model one, and each kind
//! reads it through its own map. `Linear` evolves `Z` directly with the
//! deterministic martingale correction integrated exactly over each step
//! (the closed-form correction integral is differenced on the grid, so no
//! derivative noise enters the drift). `ExpOU` runs `Y = Z−1` as a
//! centered OU process under `σ = m·e^Y`; `SteinStein` runs `Y = Z` under
//! `σ = m·Y` (the sign of σ is immaterial to the law and is kept).
//!
//! Reproducibility: each path owns a counter-based RNG stream keyed by
//! `(seed, path index)`, so ensembles are bit-identical for a fixed seed
//! no matter how the paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn;
use crate::cumulants::SmileStats;
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelParams};

/// Time-stepping scheme. Only explicit Euler-Maruyama is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    EulerMaruyama,
}

/// Simulation settings. `n_steps` is per year; the step count for a
/// horizon τ is `max(1, round(n_steps·τ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig { n_paths, n_steps, seed, scheme: Scheme::EulerMaruyama };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                value: self.n_paths as f64,
                requirement: "must be >= 100",
            });
        }
        if self.n_steps < 50 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                value: self.n_steps as f64,
                requirement: "must be >= 50 per year",
            });
        }
        Ok(())
    }
}

/// Terminal centered log-returns from one simulation batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEnsemble {
    pub terminal_x: Vec<f64>,
    pub tau: f64,
    pub config: SimConfig,
}

/// A Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Number of contiguous jackknife batches for estimator standard errors.
const JACKKNIFE_BATCHES: usize = 100;

/// Per-step state update coefficients, resolved once per simulation.
enum Dynamics {
    /// Z mean-reverts to 1; drift carries the per-step exact correction
    /// integral.
    Linear { correction: Vec<f64> },
    /// Y = Z−1 mean-reverts to 0; σ = m·e^Y.
    ExpOu,
    /// Y = Z mean-reverts to 1; σ = m·Y.
    SteinStein,
}

/// Simulate terminal log-returns at a single horizon.
pub fn simulate(kind: ModelKind, p: &ModelParams, tau: f64, cfg: &SimConfig) -> Result<McEnsemble> {
    let mut ensembles = simulate_terminal_grid(kind, p, &[tau], cfg)?;
    Ok(ensembles.pop().expect("one horizon in, one ensemble out"))
}

/// Simulate once, recording the terminal log-return at every horizon in
/// `taus` (strictly increasing). All horizons share the same paths, which
/// is what a common-random-numbers calibration objective needs; it also
/// makes a τ grid cost one simulation instead of one per maturity.
pub fn simulate_terminal_grid(
    kind: ModelKind,
    p: &ModelParams,
    taus: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<McEnsemble>> {
    p.check()?;
    cfg.check()?;
    if taus.is_empty() || taus.windows(2).any(|w| w[1] <= w[0]) || taus[0] <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "taus",
            value: f64::NAN,
            requirement: "must be non-empty and strictly increasing with taus[0] > 0",
        });
    }

    // One global grid: each inter-maturity segment gets its own rounded
    // step count so every maturity lands exactly on a grid node.
    let mut grid_times = vec![0.0_f64];
    let mut record_at = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { taus[i - 1] };
        let seg = ((tau - prev) * cfg.n_steps as f64).round().max(1.0) as usize;
        let last = *grid_times.last().expect("grid never empty");
        for j in 1..=seg {
            grid_times.push(last + (tau - prev) * j as f64 / seg as f64);
        }
        record_at.push(grid_times.len() - 1);
    }

    let dynamics = match kind {
        ModelKind::Linear => {
            // I(t) = ∫₀^t M ds on the grid; per-step corrections by
            // differencing, so each step's drift integral is exact.
            let mut integral = Vec::with_capacity(grid_times.len());
            for &t in &grid_times {
                integral.push(charfn::martingale_integral(t, p, 0.0)?);
            }
            let correction =
                integral.windows(2).map(|w| w[1] - w[0]).collect();
            Dynamics::Linear { correction }
        }
        ModelKind::ExpOU => Dynamics::ExpOu,
        ModelKind::SteinStein => Dynamics::SteinStein,
    };

    let alpha = p.alpha;
    let k = p.k;
    let m = p.m;
    let rho = p.rho;
    let rho_perp = (1.0 - rho * rho).sqrt();
    let half_m2 = 0.5 * m * m;

    let paths: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path_idx as u64);
            let normal = StandardNormal;
            let mut x = 0.0_f64;
            // state: Z for Linear/SteinStein, Y = Z−1 for ExpOU
            let mut state = match dynamics {
                Dynamics::ExpOu => p.z0 - 1.0,
                _ => p.z0,
            };
            let mut recorded = Vec::with_capacity(record_at.len());
            let mut next_record = 0;
            for step in 0..grid_times.len() - 1 {
                let dt = grid_times[step + 1] - grid_times[step];
                let sqrt_dt = dt.sqrt();
                let z1: f64 = normal.sample(&mut rng);
                let z2: f64 = normal.sample(&mut rng);
                let dw_spot = sqrt_dt * z1;
                let dw_driver = sqrt_dt * (rho * z1 + rho_perp * z2);
                match &dynamics {
                    Dynamics::Linear { correction } => {
                        let z = state;
                        x += -half_m2 * ((2.0 * z - 1.0) * dt + correction[step])
                            + m * z * dw_spot;
                        state = z + alpha * (1.0 - z) * dt + k * dw_driver;
                    }
                    Dynamics::ExpOu => {
                        let sigma = m * state.exp();
                        x += -0.5 * sigma * sigma * dt + sigma * dw_spot;
                        state += -alpha * state * dt + k * dw_driver;
                    }
                    Dynamics::SteinStein => {
                        let sigma = m * state;
                        x += -0.5 * sigma * sigma * dt + sigma * dw_spot;
                        state += alpha * (1.0 - state) * dt + k * dw_driver;
                    }
                }
                if next_record < record_at.len() && step + 1 == record_at[next_record] {
                    recorded.push(x);
                    next_record += 1;
                }
            }
            recorded
        })
        .collect();

    Ok((0..taus.len())
        .map(|j| McEnsemble {
            terminal_x: paths.iter().map(|p| p[j]).collect(),
            tau: taus[j],
            config: *cfg,
        })
        .collect())
}

/// Centered power sums (about `mean`) of a slice, orders 1..4.
fn centered_sums(xs: &[f64], mean: f64) -> [f64; 4] {
    let mut s = [0.0_f64; 4];
    for &x in xs {
        let c = x - mean;
        let c2 = c * c;
        s[0] += c;
        s[1] += c2;
        s[2] += c2 * c;
        s[3] += c2 * c2;
    }
    s
}

/// (σ, ζ, κ) from centered sums of `n` points: Bessel-corrected standard
/// deviation, moment-ratio skewness, moment-ratio excess kurtosis. `delta`
/// shifts the centering to the subsample mean.
fn stats_from_sums(s: &[f64; 4], n: f64) -> Option<(f64, f64, f64)> {
    let delta = s[0] / n;
    let m2 = s[1] / n - delta * delta;
    let m3 = s[2] / n - 3.0 * delta * s[1] / n + 2.0 * delta * delta * delta;
    let m4 = s[3] / n - 4.0 * delta * s[2] / n + 6.0 * delta * delta * s[1] / n
        - 3.0 * delta * delta * delta * delta;
    if !(m2 > 0.0) {
        return None;
    }
    let sigma = (m2 * n / (n - 1.0)).sqrt();
    Some((sigma, m3 / (m2 * m2.sqrt()), m4 / (m2 * m2) - 3.0))
}

/// Sample smile statistics of an ensemble with jackknife standard errors.
///
/// Errors come from leave-one-out over 100 contiguous path batches, which
/// stays honest for the heavy-tailed fourth-moment estimator where the
/// Gaussian plug-in formulas do not.
pub fn mc_smile_stats(e: &McEnsemble) -> Result<SmileStats> {
    let n = e.terminal_x.len();
    if n < 1000 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: n as f64,
            requirement: "must be >= 1000 for kurtosis error validity",
        });
    }
    let mean = e.terminal_x.iter().sum::<f64>() / n as f64;

    let batches = JACKKNIFE_BATCHES;
    let mut batch_sums = Vec::with_capacity(batches);
    let mut total = [0.0_f64; 4];
    for b in 0..batches {
        let lo = n * b / batches;
        let hi = n * (b + 1) / batches;
        let s = centered_sums(&e.terminal_x[lo..hi], mean);
        for j in 0..4 {
            total[j] += s[j];
        }
        batch_sums.push((s, (hi - lo) as f64));
    }

    let (sigma, zeta, kappa) = stats_from_sums(&total, n as f64)
        .ok_or(Error::NonPositiveVariance { value: 0.0 })?;

    // leave-one-batch-out replicates
    let mut reps = Vec::with_capacity(batches);
    for (s, nb) in &batch_sums {
        let left = [total[0] - s[0], total[1] - s[1], total[2] - s[2], total[3] - s[3]];
        let rep = stats_from_sums(&left, n as f64 - nb)
            .ok_or(Error::NonPositiveVariance { value: 0.0 })?;
        reps.push(rep);
    }
    let se = |pick: &dyn Fn(&(f64, f64, f64)) -> f64| -> f64 {
        let mean_rep = reps.iter().map(|r| pick(r)).sum::<f64>() / batches as f64;
        let ss = reps.iter().map(|r| (pick(r) - mean_rep).powi(2)).sum::<f64>();
        ((batches as f64 - 1.0) / batches as f64 * ss).sqrt()
    };

    Ok(SmileStats {
        sigma,
        zeta,
        kappa,
        sigma_err: se(&|r| r.0),
        zeta_err: se(&|r| r.1),
        kappa_err: se(&|r| r.2),
        tau: e.tau,
    })
}

/// Discounted-payoff estimate of a call from an ensemble:
/// `e^{−rτ}·mean[(S0·e^{rτ+X} − K)⁺]` with its standard error.
pub fn mc_call_price(e: &McEnsemble, s0: f64, strike: f64, r: f64) -> McEstimate {
    let n = e.terminal_x.len();
    let disc = (-r * e.tau).exp();
    let growth = (r * e.tau).exp();
    let mut sum = 0.0_f64;
    let mut sum2 = 0.0_f64;
    for &x in &e.terminal_x {
        let payoff = (s0 * growth * x.exp() - strike).max(0.0);
        sum += payoff;
        sum2 += payoff * payoff;
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
    McEstimate {
        value: disc * mean,
        std_error: disc * (var / n as f64).sqrt(),
        n,
    }
}

/// Write an ensemble as a raw little-endian f64 column plus a JSON sidecar
/// (`<path>.meta.json`) carrying tau, seed, path count, and model kind.
pub fn write_ensemble(path: &std::path::Path, e: &McEnsemble, kind: ModelKind) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: source.to_string(),
    };
    let mut bytes = Vec::with_capacity(e.terminal_x.len() * 8);
    for &x in &e.terminal_x {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err)?;
    let sidecar = serde_json::json!({
        "tau": e.tau,
        "seed": e.config.seed,
        "n_paths": e.terminal_x.len(),
        "n_steps_per_year": e.config.n_steps,
        "model": kind.to_string(),
    });
    let meta_path = path.with_extension("meta.json");
    std::fs::write(&meta_path, serde_json::to_vec_pretty(&sidecar).expect("static json"))
        .map_err(|source| Error::Io {
            path: meta_path.display().to_string(),
            message: source.to_string(),
        })
}
