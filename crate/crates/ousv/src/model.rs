//! Parameter types, the measure change, and the linearization maps.
//!
//! The objective-measure dynamics are written in terms of an OU driver Y
//! with mean reversion `alpha`, stationary mean `gamma`, and vol-of-vol `k`.
//! Volatility is `m·e^Y` (ExpOU) or `m·Y` (Stein-Stein). Expanding either
//! map to first order around the risk-neutral stationary mean produces one
//! common linear model with volatility `m·Z`, `Z` mean-reverting to 1; that
//! linear model is what the closed-form machinery prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on `beta = k²/(2α)` above which the linearization is stretched.
pub const BETA_WARN_THRESHOLD: f64 = 0.10;

/// Parameters of the objective-measure dynamics.
///
/// `mu` is the objective drift of the spot. It is carried for completeness
/// and never used in pricing: pricing happens under the risk-neutral measure
/// where the drift is the rate `r` supplied with each quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub mu: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub k: f64,
    pub rho: f64,
    pub m: f64,
    pub y0: f64,
    pub s0: f64,
}

impl ObjectiveParams {
    /// Hard domain constraints. Violations are errors, not warnings.
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                requirement: "must be > 0",
            });
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidParameter {
                name: "k",
                value: self.k,
                requirement: "must be > 0",
            });
        }
        if !(self.m > 0.0) {
            return Err(Error::InvalidParameter {
                name: "m",
                value: self.m,
                requirement: "must be > 0",
            });
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                requirement: "must lie in [-1, 1]",
            });
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "s0",
                value: self.s0,
                requirement: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Market price of volatility risk, linear in the driver: η(Y) = η₀ + η₁·Y.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketPriceOfRisk {
    pub eta0: f64,
    pub eta1: f64,
}

/// Which volatility map the driver feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Volatility `m·Z` with `Z` mean-reverting to 1. The tractable model.
    Linear,
    /// Volatility `m·e^Y`. Simulated exactly, priced via its linearization.
    ExpOU,
    /// Volatility `m·Y` (Stein-Stein). Simulated exactly, priced via its
    /// linearization.
    SteinStein,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::ExpOU => write!(f, "expou"),
            ModelKind::SteinStein => write!(f, "stein-stein"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(ModelKind::Linear),
            "expou" | "exp-ou" => Ok(ModelKind::ExpOU),
            "stein-stein" | "steinstein" | "s2" => Ok(ModelKind::SteinStein),
            other => Err(format!(
                "unknown model kind '{other}' (expected linear, expou, or stein-stein)"
            )),
        }
    }
}

/// Risk-neutral parameters of the linear model: volatility `m·Z`,
/// `dZ = α(1−Z)dt + k dW` with correlation `rho` to the spot driver,
/// started at `z0`.
///
/// `r` is a convenience default rate for single-rate uses; pipeline pricing
/// overrides it per maturity with the quote's own rate. `k = 0` is admitted
/// as the deterministic-volatility limit (the model degenerates to
/// Black-Scholes with σ = m when z0 = 1), which anchors several oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub k: f64,
    pub m: f64,
    pub rho: f64,
    pub z0: f64,
    #[serde(default)]
    pub r: f64,
}

impl ModelParams {
    /// Stationary variance of the driver; the small parameter of the
    /// linearization.
    pub fn beta(&self) -> f64 {
        self.k * self.k / (2.0 * self.alpha)
    }

    /// Hard domain constraints. `k = 0` passes (Gaussian limit); the
    /// linearization-quality warning lives in [`validate`], not here.
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                requirement: "must be > 0",
            });
        }
        if !(self.k >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "k",
                value: self.k,
                requirement: "must be >= 0",
            });
        }
        if !(self.m > 0.0) {
            return Err(Error::InvalidParameter {
                name: "m",
                value: self.m,
                requirement: "must be > 0",
            });
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                requirement: "must lie in [-1, 1]",
            });
        }
        if !(self.z0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "z0",
                value: self.z0,
                requirement: "must be > 0",
            });
        }
        if !self.r.is_finite() {
            return Err(Error::InvalidParameter {
                name: "r",
                value: self.r,
                requirement: "must be finite",
            });
        }
        Ok(())
    }
}

/// Outcome of [`validate`]: hard violations, soft warnings, and the derived
/// `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub beta: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.warnings.is_empty()
    }
}

/// Change of measure. Maps `(alpha, gamma)` to their risk-neutral values
/// `alpha + k·eta1` and `(alpha·gamma − k·eta0)/(alpha + k·eta1)`; the other
/// fields pass through (the spot drift becomes the risk-free rate, supplied
/// separately at pricing time).
pub fn risk_neutral_transform(
    obj: &ObjectiveParams,
    eta: &MarketPriceOfRisk,
) -> Result<ObjectiveParams> {
    obj.check()?;
    let alpha_tilde = obj.alpha + obj.k * eta.eta1;
    if !(alpha_tilde > 0.0) {
        return Err(Error::StationarityViolation { alpha: alpha_tilde });
    }
    let gamma_tilde = (obj.alpha * obj.gamma - obj.k * eta.eta0) / alpha_tilde;
    Ok(ObjectiveParams {
        alpha: alpha_tilde,
        gamma: gamma_tilde,
        ..*obj
    })
}

/// First-order Taylor expansion of the volatility map around the stationary
/// mean, producing linear-model parameters.
///
/// `obj` must already be under the risk-neutral measure (its `gamma` is the
/// risk-neutral mean). ExpOU: `m → m·e^γ`, `k` unchanged, `Z₀ = Y₀+1−γ`.
/// Stein-Stein: `m → m·γ`, `k → k/γ`, `Z₀ = Y₀/γ`, degenerate at γ = 0.
/// In both cases a stationary start `Y₀ = γ` lands exactly on `Z₀ = 1`.
/// `alpha` and `rho` are unchanged; `r` defaults to 0 and is overridden
/// per maturity by pricing callers.
pub fn linearize(obj: &ObjectiveParams, kind: ModelKind) -> Result<ModelParams> {
    obj.check()?;
    let (m, k, z0) = match kind {
        // deviation first, so y0 = gamma lands on 1 without cancellation
        ModelKind::ExpOU => (obj.m * obj.gamma.exp(), obj.k, 1.0 + (obj.y0 - obj.gamma)),
        ModelKind::SteinStein => {
            if obj.gamma.abs() < 1e-12 {
                return Err(Error::DegenerateGamma { gamma: obj.gamma });
            }
            (obj.m * obj.gamma, obj.k / obj.gamma, obj.y0 / obj.gamma)
        }
        ModelKind::Linear => {
            return Err(Error::UnsupportedKind {
                kind,
                op: "linearize",
            })
        }
    };
    Ok(ModelParams {
        alpha: obj.alpha,
        k,
        m,
        rho: obj.rho,
        z0,
        r: 0.0,
    })
}

/// Report-only inspection of a parameter set: every violated invariant as a
/// message, plus a warning when `beta` exceeds [`BETA_WARN_THRESHOLD`]
/// (the linearization is only trustworthy for small driver variance; the
/// threshold is advisory, since useful fits do land above it).
pub fn validate(params: &ModelParams) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    if !(params.alpha > 0.0) {
        violations.push(format!("alpha = {} must be > 0", params.alpha));
    }
    if !(params.k >= 0.0) {
        violations.push(format!("k = {} must be >= 0", params.k));
    }
    if !(params.m > 0.0) {
        violations.push(format!("m = {} must be > 0", params.m));
    }
    if !(params.rho >= -1.0 && params.rho <= 1.0) {
        violations.push(format!("rho = {} must lie in [-1, 1]", params.rho));
    }
    if !(params.z0 > 0.0) {
        violations.push(format!("z0 = {} must be > 0", params.z0));
    }
    let beta = params.beta();
    if violations.is_empty() && beta > BETA_WARN_THRESHOLD {
        warnings.push(format!(
            "linearization regime warning: beta = {beta:.4} > {BETA_WARN_THRESHOLD}"
        ));
    }
    ValidationReport {
        violations,
        warnings,
        beta,
    }
}
