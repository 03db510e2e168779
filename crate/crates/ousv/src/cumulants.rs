//! Analytic cumulants of the log-return and normalized smile statistics.
//!
//! The first four cumulants of `x_τ` have closed forms: polynomials in
//! `e^{−ατ}` through `e^{−4ατ}`, `ατ`, the start offset `Z₀−1`, and powers
//! of ρ. They follow from differentiating the characteristic exponent at
//! φ = 0. The drift cumulant `k₁` reuses the closed-form martingale
//! integral, so nothing here is numerical.
//!
//! Smile statistics normalize the cumulants to the horizon: `σ_τ = √k₂`
//! (std dev over the horizon, not annualized), skewness `ζ_τ = k₃/σ_τ³`,
//! excess kurtosis `κ_τ = k₄/σ_τ⁴`.

use serde::{Deserialize, Serialize};

use crate::charfn;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// First four cumulants of the log-return at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub tau: f64,
}

/// Normalized smile statistics (σ_τ, ζ_τ, κ_τ) with standard errors.
///
/// Errors are zero on the analytic path and populated by fits and Monte
/// Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileStats {
    pub sigma: f64,
    pub zeta: f64,
    pub kappa: f64,
    pub sigma_err: f64,
    pub zeta_err: f64,
    pub kappa_err: f64,
    pub tau: f64,
}

/// Closed-form `k₁..k₄` at horizon `tau` started from `(x0, z0)`.
pub fn analytic_cumulants(tau: f64, p: &ModelParams, x0: f64, z0: f64) -> Result<CumulantSet> {
    p.check()?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            value: tau,
            requirement: "must be >= 0",
        });
    }
    let al = p.alpha;
    let k = p.k;
    let m = p.m;
    let rho = p.rho;
    let m2 = m * m;
    let x = al * tau;
    let u = (-x).exp();
    let v = (-2.0 * x).exp();
    let w = (-3.0 * x).exp();
    let q = (-4.0 * x).exp();
    let zm = z0 - 1.0;
    let kma = k * m / al;

    let p_at_z0 = ModelParams { z0, ..*p };
    let int_m = charfn::martingale_integral(tau, &p_at_z0, x0)?;

    let k1 = -m2 / 2.0 * int_m + m2 / al * zm * (u - 1.0) - m2 / 2.0 * tau + x0;

    let k2 = 0.25 * m2 / al
        * (-2.0 * kma * kma * (v - 4.0 * u - 2.0 * x + 3.0)
            + k * k / al * (v + 2.0 * x - 1.0)
            - 2.0 * zm * zm * (v - 1.0)
            - 8.0 * zm * (u - 1.0)
            + 4.0 * x)
        + 2.0 * k * m * m2 / (al * al)
            * rho
            * (zm * (u + x * u - 1.0) - (u + x - 1.0));

    let k3 = 1.5 * k * k * m2 * m2 / (al * al * al)
        * (zm * (w - 2.0 * v + u * (3.0 + 2.0 * x) - 2.0) + 2.0 * (v - 4.0 * u - 2.0 * x + 3.0))
        + 1.5 * k * m * m2 / (al * al)
            * rho
            * (kma * kma * (-v * (3.0 + 2.0 * x) + 4.0 * u * (3.0 + x) + 4.0 * x - 9.0)
                + k * k / al * (v * (1.0 + x) + x - 1.0)
                - zm * zm * (v * (1.0 + 2.0 * x) - 1.0)
                + 2.0 * zm * (v - 2.0 * u * (2.0 + x) + 3.0)
                + 4.0 * (u + x - 1.0))
        + 3.0 * k * k * m2 * m2 / (al * al * al)
            * rho
            * rho
            * (zm * (u * (2.0 + 2.0 * x + x * x) - 2.0) - 2.0 * (u * (2.0 + x) + x - 2.0));

    let k4 = 3.0 * k * k * m2 * m2 / (al * al * al)
        * (0.5 * kma * kma
            * (-q + 4.0 * w - 4.0 * v * (3.0 + x) + 4.0 * u * (7.0 + 2.0 * x) + 8.0 * x - 19.0)
            + k * k / (8.0 * al) * (q + 4.0 * v * (1.0 + 2.0 * x) + 4.0 * x - 5.0)
            - 0.5 * zm * zm * (q + 4.0 * x * v - 1.0)
            + 2.0 * zm * (-w + 2.0 * v - u * (3.0 + 2.0 * x) + 2.0)
            + 2.0 * (-v + 4.0 * u + 2.0 * x - 3.0))
        + 6.0 * k * k * k * m2 * m2 * m / (al * al * al * al)
            * rho
            * (zm * (3.0 * w * (1.0 + x) - 2.0 * v * (3.0 + 2.0 * x)
                + u * (9.0 + 7.0 * x + 2.0 * x * x)
                - 6.0)
                + (-w + 2.0 * v * (5.0 + 2.0 * x) - u * (35.0 + 10.0 * x) - 12.0 * x + 26.0))
        + 3.0 * k * k * m2 * m2 / (al * al * al)
            * rho
            * rho
            * (4.0 * kma * kma
                * (-v * (3.0 + 3.0 * x + x * x) + u * (12.0 + 6.0 * x + x * x) + 3.0 * x - 9.0)
                + k * k / al * (v * (3.0 + 4.0 * x + 2.0 * x * x) + 2.0 * x - 3.0)
                - 2.0 * zm * zm * (v * (1.0 + 2.0 * x + 2.0 * x * x) - 1.0)
                + 4.0 * zm * (2.0 * v * (1.0 + x) - u * (6.0 + 4.0 * x + x * x) + 4.0)
                - 2.0 * (v - 4.0 * u * (3.0 + x) - 6.0 * x + 11.0))
        + 4.0 * k * k * k * m2 * m2 * m / (al * al * al * al)
            * rho
            * rho
            * rho
            * (zm * (u * (6.0 + 6.0 * x + 3.0 * x * x + x * x * x) - 6.0)
                - 3.0 * (u * (6.0 + 4.0 * x + x * x) + 2.0 * x - 6.0));

    Ok(CumulantSet { k1, k2, k3, k4, tau })
}

/// Normalize a cumulant set into `(σ, ζ, κ)`; errors are zero on this path.
pub fn smile_stats_from_cumulants(c: &CumulantSet) -> Result<SmileStats> {
    if !(c.k2 > 0.0) {
        return Err(Error::NonPositiveVariance { value: c.k2 });
    }
    let sigma = c.k2.sqrt();
    Ok(SmileStats {
        sigma,
        zeta: c.k3 / (sigma * sigma * sigma),
        kappa: c.k4 / (c.k2 * c.k2),
        sigma_err: 0.0,
        zeta_err: 0.0,
        kappa_err: 0.0,
        tau: c.tau,
    })
}

/// Leading small-τ behaviour of skewness and excess kurtosis:
/// `ζ ≈ 3kρ√τ/Z₀`, `κ ≈ 4k²(1+2ρ²)τ/Z₀²`.
pub fn small_tau_asymptotics(tau: f64, p: &ModelParams) -> (f64, f64) {
    let zeta = 3.0 * p.k * p.rho * tau.sqrt() / p.z0;
    let kappa = 4.0 * p.k * p.k * (1.0 + 2.0 * p.rho * p.rho) * tau / (p.z0 * p.z0);
    (zeta, kappa)
}
