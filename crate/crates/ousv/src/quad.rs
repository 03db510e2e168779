//! Adaptive quadrature for the oscillatory transform integrals.
//!
//! The pricing and density integrands are smooth, exponentially decaying
//! envelopes times sine/cosine oscillations. Each initial panel is sized to
//! resolve at most a few oscillation periods, then refined by interval
//! bisection: trapezoid estimates at three nesting levels are Richardson
//! extrapolated, and an interval is accepted when consecutive extrapolants
//! agree within its share of the tolerance budget.

use crate::error::{Error, Result};

/// Integral value with the accumulated acceptance-error estimate and the
/// number of integrand evaluations spent.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Maximum bisection depth below one initial panel. 2^40 subdivisions of
/// any finite panel reach spacings below f64 resolution, so hitting this
/// limit means the integrand violates the smoothness assumption.
const MAX_DEPTH: u32 = 40;

struct Workspace<'a> {
    f: &'a dyn Fn(f64) -> f64,
    evaluations: usize,
    error_estimate: f64,
}

impl Workspace<'_> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evaluations += 1;
        (self.f)(x)
    }
}

/// Adaptively integrate `f` over `[a, b]`.
///
/// `periods_hint` is the expected number of oscillation periods over the
/// whole interval; it sets the initial uniform panelling (minimum 8
/// panels, 2 per period). The effective tolerance is
/// `max(abs_tol, rel_tol·|rough|)` with `rough` a coarse whole-interval
/// estimate, distributed over panels by width.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    periods_hint: f64,
    context: &'static str,
) -> Result<QuadResult> {
    assert!(b > a, "integration interval must be ordered");
    let n_panels = (2.0 * periods_hint).ceil().max(8.0) as usize;
    let mut ws = Workspace { f, evaluations: 0, error_estimate: 0.0 };

    // Coarse scale estimate used only to convert rel_tol into an absolute
    // budget; one trapezoid sample per panel boundary.
    let width = b - a;
    let mut rough = 0.0;
    let mut prev = ws.eval(a);
    for i in 1..=n_panels {
        let x = a + width * i as f64 / n_panels as f64;
        let fx = ws.eval(x);
        rough += 0.5 * (prev + fx) * width / n_panels as f64;
        prev = fx;
    }
    let mut budget = abs_tol.max(rel_tol * rough.abs());

    let run = |ws: &mut Workspace, budget: f64| -> Result<f64> {
        ws.error_estimate = 0.0;
        let mut total = 0.0;
        for i in 0..n_panels {
            let lo = a + width * i as f64 / n_panels as f64;
            let hi = a + width * (i + 1) as f64 / n_panels as f64;
            let panel_tol = budget * (hi - lo) / width;
            total += refine(ws, lo, hi, panel_tol, 0, context)?;
        }
        Ok(total)
    };

    let mut total = run(&mut ws, budget)?;
    // The coarse estimate overshoots badly when the integrand cancels
    // heavily, which would silently loosen the relative budget. Re-derive
    // the budget from the converged value and pay for one more pass when
    // the first one was materially under-resolved.
    let honest = abs_tol.max(rel_tol * total.abs());
    if budget > 2.0 * honest {
        budget = honest;
        total = run(&mut ws, budget)?;
    }
    Ok(QuadResult { value: total, error_estimate: ws.error_estimate, evaluations: ws.evaluations })
}

/// One interval: trapezoid at 2, 3, and 5 nodes, two Richardson levels.
/// Accept when the two first-level extrapolants agree within `tol`,
/// returning the second-level extrapolant; otherwise bisect.
fn refine(
    ws: &mut Workspace,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
    context: &'static str,
) -> Result<f64> {
    let h = b - a;
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (ws.eval(a), ws.eval(m), ws.eval(b));
    let fl = ws.eval(0.5 * (a + m));
    let fr = ws.eval(0.5 * (m + b));

    let t1 = 0.5 * h * (fa + fb);
    let t2 = 0.25 * h * (fa + 2.0 * fm + fb);
    let t4 = 0.125 * h * (fa + 2.0 * fl + 2.0 * fm + 2.0 * fr + fb);
    let r1 = (4.0 * t2 - t1) / 3.0;
    let r2 = (4.0 * t4 - t2) / 3.0;
    let err = (r2 - r1).abs();
    // the interval's absolute mass bounds what any scheme can resolve in
    // f64; an estimate at that floor cannot improve under bisection
    let mass = 0.125 * h * (fa.abs() + 2.0 * fl.abs() + 2.0 * fm.abs() + 2.0 * fr.abs() + fb.abs());
    if err <= tol || err <= 4e-14 * mass || h <= 1e-15 * (a.abs() + b.abs()).max(1.0) {
        ws.error_estimate += err / 15.0;
        return Ok((16.0 * r2 - r1) / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureNonConvergence {
            context,
            estimate: err,
            tolerance: tol,
        });
    }
    let left = refine(ws, a, m, 0.5 * tol, depth + 1, context)?;
    let right = refine(ws, m, b, 0.5 * tol, depth + 1, context)?;
    Ok(left + right)
}

/// Find a truncation point beyond which `envelope` stays below `tol`.
///
/// Doubles from `start` until the envelope is below tolerance at the
/// candidate point and at an incommensurate interior probe (guarding
/// against sampling an accidental dip), or the hard cap is reached.
pub fn truncation_point(
    envelope: &dyn Fn(f64) -> f64,
    start: f64,
    tol: f64,
    cap: f64,
) -> f64 {
    let mut hi = start.max(1.0);
    while hi < cap {
        if envelope(hi) < tol && envelope(hi / 1.37) < tol {
            return hi;
        }
        hi *= 2.0;
    }
    cap
}
