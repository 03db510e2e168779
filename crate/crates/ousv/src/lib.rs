//! Linear Ornstein-Uhlenbeck stochastic volatility.
//!
//! A mean-reverting OU process drives volatility through an exponential
//! (ExpOU) or linear (Stein-Stein) map; expanding either to first order
//! around the stationary mean yields one linear model with a closed-form
//! characteristic function. The crate provides that characteristic function
//! with branch-continuity tracking, analytic cumulants of the log-return,
//! contour-integral call pricing with implied-vol and density recovery,
//! Euler-Maruyama Monte Carlo for all three dynamics, and the two-step
//! smile calibration (per-maturity Gram-Charlier fits, then a global
//! weighted least-squares match of cumulant term structures).
//!
//! Everything is deterministic for a fixed seed, including parallel Monte
//! Carlo.

pub mod calibration;
pub mod charfn;
pub mod cumulants;
pub mod error;
pub mod market;
pub mod model;
pub mod montecarlo;
pub mod pipeline;
pub mod pricer;
pub mod quad;

mod optimize;

pub use error::{Error, Result};
pub use model::{ModelKind, ModelParams, ObjectiveParams};
