//! End-to-end orchestration: per-maturity smile fits, global calibration,
//! smile reconstruction with error bands, optional density curve, and a
//! replayable run manifest.
//!
//! Every emitted table exists twice: a machine-readable CSV with floats
//! in shortest round-trip form, and an aligned text rendering for humans.
//! Runs are deterministic for a fixed manifest, so regenerating a report
//! from its manifest reproduces the machine-readable outputs byte for
//! byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    calibrate, fit_smile_stats, CalibrationResult, McCalibConfig, ParamBounds,
};
use crate::cumulants::SmileStats;
use crate::error::{Error, Result};
use crate::market::MarketDataset;
use crate::model::{ModelKind, ModelParams};
use crate::pricer::{self, ContourConfig};

/// Resolved settings for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub command: String,
    pub model: ModelKind,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub lambda: f64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub out_dir: PathBuf,
    pub emit_pdf: bool,
    pub pdf_tau: f64,
    /// When set, calibration is skipped and these parameters price the
    /// smile directly (no error bands).
    pub fixed_params: Option<ModelParams>,
    pub bounds: ParamBounds,
    /// Natural-coordinate multistart seeds; empty means the default
    /// eight-point design over `bounds`.
    pub seed_points: Vec<[f64; 4]>,
}

impl PipelineConfig {
    pub fn new(model: ModelKind, out_dir: &Path) -> Self {
        PipelineConfig {
            command: "pipeline".into(),
            model,
            seed: 20_071_122,
            n_paths: 100_000,
            n_steps: 250,
            lambda: pricer::DEFAULT_LAMBDA,
            quad_abs_tol: pricer::DEFAULT_QUAD_ABS_TOL,
            quad_rel_tol: pricer::DEFAULT_QUAD_REL_TOL,
            out_dir: out_dir.to_path_buf(),
            emit_pdf: false,
            pdf_tau: 1.0,
            fixed_params: None,
            bounds: ParamBounds::default(),
            seed_points: Vec::new(),
        }
    }
}

/// Everything needed to reproduce a run bit for bit, minus the input
/// data itself, which is pinned by digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the dataset's canonical CSV serialization.
    pub input_digest: String,
    pub model: ModelKind,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub lambda: f64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub emit_pdf: bool,
    pub pdf_tau: f64,
    pub fixed_params: Option<ModelParams>,
    pub bounds: ParamBounds,
    pub seed_points: Vec<[f64; 4]>,
}

/// One reconstructed smile point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileRow {
    pub tau: f64,
    pub log_moneyness: f64,
    pub model_iv: f64,
    pub band_std: f64,
}

/// In-memory result of a pipeline run; the same content is written under
/// `out_dir`.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub fitted_stats: Vec<SmileStats>,
    pub calibration: Option<CalibrationResult>,
    pub params_used: ModelParams,
    pub smile_rows: Vec<SmileRow>,
    pub pdf_curve: Option<Vec<(f64, f64)>>,
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
}

fn dataset_digest(dataset: &MarketDataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(dataset.to_csv_string().as_bytes());
    format!("{:x}", hasher.finalize())
}

fn manifest_from_config(config: &PipelineConfig, dataset: &MarketDataset) -> RunManifest {
    RunManifest {
        command: config.command.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input_digest: dataset_digest(dataset),
        model: config.model,
        seed: config.seed,
        n_paths: config.n_paths,
        n_steps: config.n_steps,
        lambda: config.lambda,
        quad_abs_tol: config.quad_abs_tol,
        quad_rel_tol: config.quad_rel_tol,
        emit_pdf: config.emit_pdf,
        pdf_tau: config.pdf_tau,
        fixed_params: config.fixed_params,
        bounds: config.bounds,
        seed_points: config.seed_points.clone(),
    }
}

fn write_file(dir: &Path, name: &str, content: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    files.push(path);
    Ok(())
}

/// Machine-readable per-maturity stats table.
pub fn fitted_stats_csv(stats: &[SmileStats]) -> String {
    let mut out = String::from("tau_yr,sigma,sigma_err,zeta,zeta_err,kappa,kappa_err\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.tau, s.sigma, s.sigma_err, s.zeta, s.zeta_err, s.kappa, s.kappa_err
        ));
    }
    out
}

/// Aligned text rendering of the per-maturity stats table.
pub fn fitted_stats_txt(stats: &[SmileStats]) -> String {
    let mut out = String::from(
        "Market-calibrated normalized cumulants per maturity\n\n  tau (yr)   sigma_tau +/- err       zeta +/- err          kappa +/- err\n",
    );
    for s in stats {
        out.push_str(&format!(
            "  {:<8.4}   {:>8.4} +/- {:<8.4}  {:>8.3} +/- {:<8.3}  {:>8.2} +/- {:<8.2}\n",
            s.tau, s.sigma, s.sigma_err, s.zeta, s.zeta_err, s.kappa, s.kappa_err
        ));
    }
    out
}

/// Machine-readable parameter table; without a calibration result the
/// error columns are zero and the objective is blank.
pub fn parameters_csv(result: Option<&CalibrationResult>, params: &ModelParams, model: ModelKind) -> String {
    let mut out = String::from(
        "model,alpha,alpha_err,k,k_err,m,m_err,rho,rho_err,beta,beta_err,objective\n",
    );
    match result {
        Some(r) => out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.params.alpha,
            r.param_errors[0],
            r.params.k,
            r.param_errors[1],
            r.params.m,
            r.param_errors[2],
            r.params.rho,
            r.param_errors[3],
            r.beta,
            r.beta_err,
            r.objective_value
        )),
        None => out.push_str(&format!(
            "{},{},0,{},0,{},0,{},0,{},0,\n",
            model,
            params.alpha,
            params.k,
            params.m,
            params.rho,
            params.beta()
        )),
    }
    out
}

/// Aligned text rendering of the parameter table.
pub fn parameters_txt(result: Option<&CalibrationResult>, params: &ModelParams, model: ModelKind) -> String {
    let mut out = String::from("Optimal parameters\n\n");
    match result {
        Some(r) => {
            out.push_str(&format!("  model     {}\n", r.model));
            out.push_str(&format!(
                "  alpha     {:>9.4} +/- {:.4}\n",
                r.params.alpha, r.param_errors[0]
            ));
            out.push_str(&format!("  k         {:>9.4} +/- {:.4}\n", r.params.k, r.param_errors[1]));
            out.push_str(&format!("  m         {:>9.5} +/- {:.5}\n", r.params.m, r.param_errors[2]));
            out.push_str(&format!("  rho       {:>9.4} +/- {:.4}\n", r.params.rho, r.param_errors[3]));
            out.push_str(&format!("  beta      {:>9.4} +/- {:.4}\n", r.beta, r.beta_err));
            out.push_str(&format!("  objective {:>9.4}\n", r.objective_value));
            if let Some(se) = r.seed_resampled_errors {
                out.push_str(&format!(
                    "  seed-resampled spread: alpha {:.4}, k {:.4}, m {:.5}, rho {:.4}\n",
                    se[0], se[1], se[2], se[3]
                ));
            }
        }
        None => {
            out.push_str(&format!("  model     {model} (fixed parameters, no calibration)\n"));
            out.push_str(&format!("  alpha     {:>9.4}\n", params.alpha));
            out.push_str(&format!("  k         {:>9.4}\n", params.k));
            out.push_str(&format!("  m         {:>9.5}\n", params.m));
            out.push_str(&format!("  rho       {:>9.4}\n", params.rho));
            out.push_str(&format!("  beta      {:>9.4}\n", params.beta()));
        }
    }
    out
}

/// Machine-readable reconstructed smile table.
pub fn smiles_csv(rows: &[SmileRow]) -> String {
    let mut out = String::from("tau_yr,log_moneyness,model_iv,band_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.tau, r.log_moneyness, r.model_iv, r.band_std
        ));
    }
    out
}

/// Aligned text rendering of the reconstructed smile table.
pub fn smiles_txt(rows: &[SmileRow]) -> String {
    let mut out = String::from(
        "Reconstructed model smiles\n\n  tau (yr)   log(S0/K)   model iv   +/- band\n",
    );
    for r in rows {
        out.push_str(&format!(
            "  {:<8.4}   {:>9.4}   {:>8.4}   {:>8.4}\n",
            r.tau, r.log_moneyness, r.model_iv, r.band_std
        ));
    }
    out
}

/// Machine-readable density curve.
pub fn pdf_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("x,density\n");
    for (x, d) in curve {
        out.push_str(&format!("{x},{d}\n"));
    }
    out
}

/// Number of points in the emitted density curve over `x ∈ [−2, 2]`.
const PDF_POINTS: usize = 801;
const PDF_X_RANGE: (f64, f64) = (-2.0, 2.0);

/// Fit, calibrate, price, and report. With `fixed_params` set, the fit
/// and calibration stages are skipped and the given parameters drive the
/// pricing stage directly.
pub fn run_pipeline(dataset: &MarketDataset, config: &PipelineConfig) -> Result<ReportBundle> {
    dataset.check()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::Io {
        path: config.out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let manifest = manifest_from_config(config, dataset);
    let mut files = Vec::new();

    // stage 1 + 2, or neither in pricing-only mode
    let (fitted_stats, calibration, params_used) = match config.fixed_params {
        Some(p) => {
            p.check()?;
            (Vec::new(), None, p)
        }
        None => {
            let stats: Vec<SmileStats> = dataset
                .quote_blocks
                .iter()
                .map(|b| fit_smile_stats(&b.quotes, dataset.s0))
                .collect::<Result<_>>()?;
            let mc_cfg = McCalibConfig {
                n_paths: config.n_paths,
                n_steps: config.n_steps,
                seed: config.seed,
            };
            let result = calibrate(
                &stats,
                config.model,
                &config.bounds,
                &config.seed_points,
                Some(&mc_cfg),
            )?;
            let params = result.params;
            (stats, Some(result), params)
        }
    };

    // stage 3: reprice the market grid; the calibrated parameters read as
    // linear-model parameters (the parent maps are identity under the
    // stationary start used for calibration)
    let base_cc = pricer::contour_offset(&params_used, config.lambda)?;
    let cc = ContourConfig {
        quad_abs_tol: config.quad_abs_tol,
        quad_rel_tol: config.quad_rel_tol,
        ..base_cc
    };
    let grid: Vec<(f64, f64, f64)> = dataset
        .quote_blocks
        .iter()
        .flat_map(|b| {
            b.quotes
                .iter()
                .map(|q| (q.tau, dataset.s0 * (-q.log_moneyness).exp(), q.r))
        })
        .collect();
    let curve = pricer::smile_curve(&params_used, dataset.s0, &grid, &cc)?;
    let bands = match calibration.as_ref() {
        Some(r) => pricer::smile_error_band(&params_used, &r.covariance, dataset.s0, &grid, &cc)?,
        None => vec![0.0; grid.len()],
    };
    let log_ms: Vec<f64> = dataset
        .quote_blocks
        .iter()
        .flat_map(|b| b.quotes.iter().map(|q| q.log_moneyness))
        .collect();
    let smile_rows: Vec<SmileRow> = curve
        .iter()
        .zip(&bands)
        .zip(&log_ms)
        .map(|((q, &band), &lm)| SmileRow {
            tau: q.tau,
            log_moneyness: lm,
            model_iv: q.implied_vol,
            band_std: band,
        })
        .collect();

    // stage 4: optional density curve
    let pdf_curve = if config.emit_pdf {
        let (lo, hi) = PDF_X_RANGE;
        let mut curve = Vec::with_capacity(PDF_POINTS);
        for i in 0..PDF_POINTS {
            let x = lo + (hi - lo) * i as f64 / (PDF_POINTS - 1) as f64;
            let d = pricer::pdf_from_cf(x, config.pdf_tau, 0.0, params_used.z0, &params_used)?;
            curve.push((x, d));
        }
        Some(curve)
    } else {
        None
    };

    // stage 5: reports
    if !fitted_stats.is_empty() {
        write_file(&config.out_dir, "fitted_stats.csv", &fitted_stats_csv(&fitted_stats), &mut files)?;
        write_file(&config.out_dir, "fitted_stats.txt", &fitted_stats_txt(&fitted_stats), &mut files)?;
    }
    write_file(
        &config.out_dir,
        "parameters.csv",
        &parameters_csv(calibration.as_ref(), &params_used, config.model),
        &mut files,
    )?;
    write_file(
        &config.out_dir,
        "parameters.txt",
        &parameters_txt(calibration.as_ref(), &params_used, config.model),
        &mut files,
    )?;
    write_file(&config.out_dir, "smiles.csv", &smiles_csv(&smile_rows), &mut files)?;
    write_file(&config.out_dir, "smiles.txt", &smiles_txt(&smile_rows), &mut files)?;
    if let Some(curve) = &pdf_curve {
        write_file(&config.out_dir, "pdf.csv", &pdf_csv(curve), &mut files)?;
    }
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&config.out_dir, "manifest.json", &manifest_json, &mut files)?;

    Ok(ReportBundle {
        fitted_stats,
        calibration,
        params_used,
        smile_rows,
        pdf_curve,
        manifest,
        files,
    })
}

/// Re-run a recorded manifest against the same dataset. The dataset is
/// pinned by digest; outputs land in `out_dir` and match the original
/// run's machine-readable files byte for byte.
pub fn replay_pipeline(
    manifest: &RunManifest,
    dataset: &MarketDataset,
    out_dir: &Path,
) -> Result<ReportBundle> {
    let digest = dataset_digest(dataset);
    if digest != manifest.input_digest {
        return Err(Error::SchemaMismatch {
            message: format!(
                "dataset digest {digest} does not match the manifest's {}",
                manifest.input_digest
            ),
        });
    }
    let config = PipelineConfig {
        command: manifest.command.clone(),
        model: manifest.model,
        seed: manifest.seed,
        n_paths: manifest.n_paths,
        n_steps: manifest.n_steps,
        lambda: manifest.lambda,
        quad_abs_tol: manifest.quad_abs_tol,
        quad_rel_tol: manifest.quad_rel_tol,
        out_dir: out_dir.to_path_buf(),
        emit_pdf: manifest.emit_pdf,
        pdf_tau: manifest.pdf_tau,
        fixed_params: manifest.fixed_params,
        bounds: manifest.bounds,
        seed_points: manifest.seed_points.clone(),
    };
    run_pipeline(dataset, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::bundled_dataset;

    fn temp_out(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("ousv-pipeline-tests").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    fn table3_params() -> ModelParams {
        ModelParams { alpha: 5.6, k: 1.9, m: 0.264, rho: -0.41, z0: 1.0, r: 0.0 }
    }

    #[test]
    fn pricing_only_run_emits_smiles_without_calibration() {
        let dataset = bundled_dataset().unwrap();
        let out = temp_out("pricing-only");
        let mut config = PipelineConfig::new(ModelKind::Linear, &out);
        config.fixed_params = Some(table3_params());
        let bundle = run_pipeline(&dataset, &config).unwrap();

        assert!(bundle.calibration.is_none());
        assert!(bundle.fitted_stats.is_empty());
        assert_eq!(bundle.smile_rows.len(), 38);
        assert!(bundle.smile_rows.iter().all(|r| r.band_std == 0.0));
        assert!(bundle.smile_rows.iter().all(|r| r.model_iv > 0.15 && r.model_iv < 0.45));
        assert!(out.join("smiles.csv").exists());
        assert!(out.join("parameters.csv").exists());
        assert!(out.join("manifest.json").exists());
        assert!(!out.join("fitted_stats.csv").exists());
    }

    #[test]
    fn replay_reproduces_machine_outputs_byte_for_byte() {
        let dataset = bundled_dataset().unwrap();
        let out_a = temp_out("replay-a");
        let mut config = PipelineConfig::new(ModelKind::Linear, &out_a);
        config.fixed_params = Some(table3_params());
        config.emit_pdf = true;
        config.pdf_tau = 0.25;
        let bundle = run_pipeline(&dataset, &config).unwrap();

        let out_b = temp_out("replay-b");
        let replayed = replay_pipeline(&bundle.manifest, &dataset, &out_b).unwrap();
        assert_eq!(bundle.manifest, replayed.manifest);
        for name in ["parameters.csv", "smiles.csv", "pdf.csv", "manifest.json"] {
            let a = std::fs::read(out_a.join(name)).unwrap();
            let b = std::fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between run and replay");
        }
    }

    #[test]
    fn replay_rejects_a_tampered_dataset() {
        let dataset = bundled_dataset().unwrap();
        let out = temp_out("tamper-a");
        let mut config = PipelineConfig::new(ModelKind::Linear, &out);
        config.fixed_params = Some(table3_params());
        let bundle = run_pipeline(&dataset, &config).unwrap();

        let mut tampered = dataset.clone();
        tampered.quote_blocks[0].quotes[0].implied_vol += 1e-4;
        let err = replay_pipeline(&bundle.manifest, &tampered, &temp_out("tamper-b")).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch { .. }));
    }

    #[test]
    fn calibrated_linear_run_lands_near_the_published_row() {
        // single warm seed keeps this a fast smoke test; the multistart
        // reproduction is exercised by the acceptance suite
        let dataset = bundled_dataset().unwrap();
        let out = temp_out("linear-calib");
        let mut config = PipelineConfig::new(ModelKind::Linear, &out);
        config.seed_points = vec![[4.0, 1.5, 0.3, -0.3]];
        let bundle = run_pipeline(&dataset, &config).unwrap();

        let r = bundle.calibration.as_ref().unwrap();
        assert!((r.params.alpha - 5.6).abs() < 2.0 * 1.3, "alpha {}", r.params.alpha);
        assert!((r.params.k - 1.9).abs() < 2.0 * 0.4, "k {}", r.params.k);
        assert!((r.params.m - 0.264).abs() < 2.0 * 0.008, "m {}", r.params.m);
        assert!((r.params.rho - -0.41).abs() < 2.0 * 0.07, "rho {}", r.params.rho);
        assert_eq!(bundle.fitted_stats.len(), 6);
        assert!(bundle.smile_rows.iter().any(|row| row.band_std > 0.0));
        assert!(out.join("fitted_stats.csv").exists());
    }
}
