//! European call pricing from the characteristic function.
//!
//! The call price is a contour integral of the CF along `Im(z) = c`, with
//! the offset `c` inside the CF's strip of regularity and above the payoff
//! transform's pole at 1. Splitting into sine and cosine transforms of one
//! complex integrand gives
//!
//! `C = −(S0/2π)·e^{D(c−1)} ∫₀^∞ [cos(ωD)·2Re X + sin(ωD)·2Im X] dω`
//!
//! with `D = ln(S0/K) + rτ`, `X = W(ω+ic)·conj(f(ω−ic))`, and
//! `W(z) = 1/(z²−iz)`. The two conjugate contour legs collapse into one CF
//! evaluation per node. Quadrature is adaptive trapezoid with Richardson
//! acceptance; the tail is truncated where the non-oscillatory envelope
//! `2|W||f|` underflows the tolerance.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::cell::RefCell;
use std::f64::consts::PI;

use crate::charfn::{self, strip_bounds};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad;

/// Contour and quadrature settings, validated at construction.
///
/// `quad_abs_tol` is in units of spot (the price tolerance is
/// `quad_abs_tol·S0`); `omega_max` caps the envelope walk that picks the
/// truncation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    pub lambda: f64,
    pub c: f64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub omega_max: f64,
}

/// One priced strike: inputs, the model price, and its implied volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub s0: f64,
    pub strike: f64,
    pub r: f64,
    pub tau: f64,
    pub price: f64,
    pub implied_vol: f64,
}

/// Default fraction of the upper pole ordinate used for the contour.
pub const DEFAULT_LAMBDA: f64 = 0.5;
/// Price tolerance as a fraction of spot.
pub const DEFAULT_QUAD_ABS_TOL: f64 = 1e-9;
pub const DEFAULT_QUAD_REL_TOL: f64 = 1e-8;
/// Hard cap on the truncation frequency.
pub const DEFAULT_OMEGA_MAX: f64 = 1e6;
/// Stand-in for the pole ordinate when the CF is entire (k = 0 or ρ = −1):
/// any finite contour works, so the offset is taken as a fraction of this.
const UNBOUNDED_C_PLUS: f64 = 40.0;

/// Resolve the contour offset `c = λ·c₊` with `c₊ = α/[km(1+ρ)]` and
/// validate `1 < c < c₊`.
///
/// The admissible region is `{c > 1} ∩ {c < c₊}`; it is empty when
/// `c₊ ≤ 1` (extreme vol-of-vol against correlation). A λ that lands the
/// offset outside the region, while the region itself is non-empty, is a
/// configuration error rather than a model degeneracy.
pub fn contour_offset(p: &ModelParams, lambda: f64) -> Result<ContourConfig> {
    p.check()?;
    if !(p.rho > -1.0 && p.rho < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: p.rho,
            requirement: "must lie in (-1, 1) for contour pricing",
        });
    }
    let (lo, _) = strip_bounds(p);
    let c_plus = if lo.is_finite() { -lo } else { UNBOUNDED_C_PLUS };
    if c_plus <= 1.0 {
        return Err(Error::EmptyContourRegion { lo: 1.0, hi: c_plus });
    }
    let c = lambda * c_plus;
    if !(c > 1.0 && c < c_plus) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            requirement: "must place c = lambda*c_plus strictly inside (1, c_plus)",
        });
    }
    Ok(ContourConfig {
        lambda,
        c,
        quad_abs_tol: DEFAULT_QUAD_ABS_TOL,
        quad_rel_tol: DEFAULT_QUAD_REL_TOL,
        omega_max: DEFAULT_OMEGA_MAX,
    })
}

/// European call by contour quadrature.
///
/// Strikes far in the money concentrate the value in high-frequency
/// cancellation scaled by `e^{D(c−1)}`; price those with a contour close
/// to 1 (small λ). The guard below rejects scale factors whose
/// cancellation cannot be resolved in f64.
#[allow(clippy::too_many_arguments)]
pub fn lewis_call(
    s0: f64,
    strike: f64,
    r: f64,
    tau: f64,
    p: &ModelParams,
    x0: f64,
    z0: f64,
    cc: &ContourConfig,
) -> Result<f64> {
    p.check()?;
    if !(strike > 0.0) {
        return Err(Error::InvalidParameter {
            name: "strike",
            value: strike,
            requirement: "must be > 0",
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            value: tau,
            requirement: "must be > 0",
        });
    }
    // Contour invariance leaves the price free of c, but not the f64
    // budget: the transform's amplitude at the contour foot, |f(−ic)|,
    // multiplies every evaluation and must cancel back out of the
    // integral. Cap it at e^{18} (noise ~5e-12 of the peak) by walking the
    // configured offset toward the payoff pole until the amplitude fits;
    // high-variance inputs otherwise lose the price in cancellation.
    const CF_DAMP_LIMIT: f64 = 18.0;
    let mut c = cc.c;
    loop {
        let foot = charfn::cf(Complex64::new(0.0, -c), tau, x0, z0, p)?.value;
        if foot.norm().ln() <= CF_DAMP_LIMIT {
            break;
        }
        let next = 1.0 + 0.7 * (c - 1.0);
        if next <= 1.0 + 1e-9 {
            let (lo, hi) = strip_bounds(p);
            return Err(Error::EmptyContourRegion { lo, hi });
        }
        c = next;
    }
    let big_d = (s0 / strike).ln() + r * tau;
    let scale_exp = big_d * (c - 1.0);
    if scale_exp > 34.0 {
        // e^{34} ≈ 6e14: more dynamic range than the integral's relative
        // accuracy can pay for.
        return Err(Error::QuadratureNonConvergence {
            context: "lewis_call scale factor",
            estimate: scale_exp,
            tolerance: 34.0,
        });
    }

    // The whole contour must sit inside the strip; checking the offset once
    // covers every node.
    let probe = Complex64::new(0.0, -c);
    let (lo, hi) = strip_bounds(p);
    if probe.im <= lo || probe.im >= hi {
        return Err(Error::StripViolation { im_phi: probe.im, lo, hi });
    }

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let eval_x = |omega: f64| -> Option<Complex64> {
        let z_plus = Complex64::new(omega, c);
        let w = 1.0 / (z_plus * z_plus - Complex64::i() * z_plus);
        match charfn::cf(Complex64::new(omega, -c), tau, x0, z0, p) {
            Ok(v) => Some(w * v.value.conj()),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                None
            }
        }
    };

    let prefactor = s0 / (2.0 * PI) * scale_exp.exp();
    let envelope = |omega: f64| match eval_x(omega) {
        Some(x) => 2.0 * x.norm() * prefactor / s0,
        None => 0.0,
    };
    let omega_hi = quad::truncation_point(&envelope, 16.0, 1e-12, cc.omega_max);

    let integrand = |omega: f64| match eval_x(omega) {
        Some(x) => 2.0 * ((omega * big_d).cos() * x.re + (omega * big_d).sin() * x.im),
        None => 0.0,
    };
    let abs_tol = cc.quad_abs_tol * s0 / prefactor;
    let periods = omega_hi * big_d.abs() / (2.0 * PI);
    let result = quad::integrate(
        &integrand,
        0.0,
        omega_hi,
        abs_tol,
        cc.quad_rel_tol,
        periods,
        "lewis_call",
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let price = -prefactor * result.value;
    // No-arbitrage bounds; absorb quadrature-level jitter at the edges.
    let lower = (s0 - strike * (-r * tau).exp()).max(0.0);
    let tol = 1e-6 * s0;
    if price < lower - tol || price > s0 + tol {
        return Err(Error::QuadratureNonConvergence {
            context: "lewis_call bounds",
            estimate: (price - price.clamp(lower, s0)).abs(),
            tolerance: tol,
        });
    }
    Ok(price.clamp(lower, s0))
}

/// Standard Black-Scholes call.
pub fn black_scholes(s0: f64, strike: f64, r: f64, tau: f64, sigma: f64) -> f64 {
    let disc_k = strike * (-r * tau).exp();
    let vol = sigma * tau.sqrt();
    if vol <= 0.0 {
        return (s0 - disc_k).max(0.0);
    }
    let norm = Normal::new(0.0, 1.0).unwrap();
    let d1 = ((s0 / strike).ln() + r * tau) / vol + 0.5 * vol;
    let d2 = d1 - vol;
    s0 * norm.cdf(d1) - disc_k * norm.cdf(d2)
}

/// Vega of the Black-Scholes call (used by the implied-vol Newton step).
fn bs_vega(s0: f64, strike: f64, r: f64, tau: f64, sigma: f64) -> f64 {
    let vol = sigma * tau.sqrt();
    if vol <= 0.0 {
        return 0.0;
    }
    let norm = Normal::new(0.0, 1.0).unwrap();
    let d1 = ((s0 / strike).ln() + r * tau) / vol + 0.5 * vol;
    s0 * norm.pdf(d1) * tau.sqrt()
}

/// Bracket for the implied-vol root, per √yr.
pub const IV_BRACKET: (f64, f64) = (1e-4, 5.0);

/// Invert Black-Scholes for volatility: safeguarded Newton inside
/// [`IV_BRACKET`], bisection fallback, 200-iteration budget, terminal
/// residual below 1e−10.
pub fn implied_vol(price: f64, s0: f64, strike: f64, r: f64, tau: f64) -> Result<f64> {
    let lower_bound = (s0 - strike * (-r * tau).exp()).max(0.0);
    if !(price > lower_bound && price < s0) {
        return Err(Error::OutOfBounds { price, lo: lower_bound, hi: s0 });
    }
    let (mut lo, mut hi) = IV_BRACKET;
    let f_lo = black_scholes(s0, strike, r, tau, lo) - price;
    let f_hi = black_scholes(s0, strike, r, tau, hi) - price;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::OutOfBounds {
            price,
            lo: black_scholes(s0, strike, r, tau, lo),
            hi: black_scholes(s0, strike, r, tau, hi),
        });
    }
    let mut sigma = 0.3_f64.clamp(lo, hi);
    for _ in 0..200 {
        let diff = black_scholes(s0, strike, r, tau, sigma) - price;
        if diff.abs() < 1e-10 {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let vega = bs_vega(s0, strike, r, tau, sigma);
        let newton = sigma - diff / vega;
        sigma = if vega > 1e-300 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence { iterations: 200 })
}

/// Risk-neutral density of the log-return by Fourier inversion:
/// `p(x) = (1/π)∫₀^∞ [cos(φx)·Re f + sin(φx)·Im f] dφ`.
pub fn pdf_from_cf(x: f64, tau: f64, x0: f64, z0: f64, p: &ModelParams) -> Result<f64> {
    p.check()?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            value: tau,
            requirement: "must be > 0",
        });
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let eval = |phi: f64| -> Complex64 {
        match charfn::cf(Complex64::new(phi, 0.0), tau, x0, z0, p) {
            Ok(v) => v.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let envelope = |phi: f64| eval(phi).norm();
    let phi_hi = quad::truncation_point(&envelope, 16.0, 1e-12, 1e6);
    let integrand = |phi: f64| {
        let f = eval(phi);
        (phi * x).cos() * f.re + (phi * x).sin() * f.im
    };
    let periods = phi_hi * x.abs() / (2.0 * PI);
    let result = quad::integrate(&integrand, 0.0, phi_hi, 1e-9, 1e-8, periods, "pdf_from_cf")?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(result.value / PI)
}

/// Price a strike grid and invert each price to an implied vol.
/// Evaluations run in parallel; the output order follows the input.
/// The state starts at `(x0, z0) = (0, p.z0)`: pricing happens at the
/// valuation date.
pub fn smile_curve(
    p: &ModelParams,
    s0: f64,
    quotes: &[(f64, f64, f64)],
    cc: &ContourConfig,
) -> Result<Vec<OptionQuote>> {
    quotes
        .par_iter()
        .map(|&(tau, strike, r)| {
            let price = lewis_call(s0, strike, r, tau, p, 0.0, p.z0, cc)?;
            let iv = implied_vol(price, s0, strike, r, tau)?;
            Ok(OptionQuote { s0, strike, r, tau, price, implied_vol: iv })
        })
        .collect()
}

/// First-order error bands for the smile: per point,
/// `band² = J^T·Cov·J` with `J = ∂(implied vol)/∂(α,k,m,ρ)` from central
/// differences, steps `1e−3·|param|` floored at `1e−5`.
pub fn smile_error_band(
    p: &ModelParams,
    param_cov: &[[f64; 4]; 4],
    s0: f64,
    quotes: &[(f64, f64, f64)],
    cc: &ContourConfig,
) -> Result<Vec<f64>> {
    let bump = |p: &ModelParams, i: usize, dx: f64| -> ModelParams {
        let mut q = *p;
        match i {
            0 => q.alpha += dx,
            1 => q.k += dx,
            2 => q.m += dx,
            _ => q.rho += dx,
        }
        q
    };
    let values = [p.alpha, p.k, p.m, p.rho];
    quotes
        .par_iter()
        .map(|&(tau, strike, r)| {
            let mut jac = [0.0_f64; 4];
            for (i, &v) in values.iter().enumerate() {
                let h = (1e-3 * v.abs()).max(1e-5);
                let up = bump(p, i, h);
                let dn = bump(p, i, -h);
                // The bumped contour keeps the configured lambda: the offset
                // must stay valid for the perturbed parameters.
                let cc_up = contour_offset(&up, cc.lambda)?;
                let cc_dn = contour_offset(&dn, cc.lambda)?;
                let price_up = lewis_call(s0, strike, r, tau, &up, 0.0, up.z0, &cc_up)?;
                let price_dn = lewis_call(s0, strike, r, tau, &dn, 0.0, dn.z0, &cc_dn)?;
                let iv_up = implied_vol(price_up, s0, strike, r, tau)?;
                let iv_dn = implied_vol(price_dn, s0, strike, r, tau)?;
                jac[i] = (iv_up - iv_dn) / (2.0 * h);
            }
            let mut var = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    var += jac[i] * param_cov[i][j] * jac[j];
                }
            }
            Ok(var.max(0.0).sqrt())
        })
        .collect()
}
