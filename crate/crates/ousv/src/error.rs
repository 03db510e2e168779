//! Crate-wide error type.

use crate::model::ModelKind;

/// Everything that can go wrong across the library.
///
/// Variants are grouped by origin: parameter validation, characteristic
/// function evaluation, quadrature/pricing, implied-vol inversion,
/// calibration, and market-data ingestion.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Mean reversion is non-positive after the measure change, so the
    /// volatility driver has no stationary law.
    #[error("stationarity violated: effective mean reversion {alpha} <= 0")]
    StationarityViolation { alpha: f64 },

    /// The Stein-Stein linearization divides by the risk-neutral mean, which
    /// is too close to zero.
    #[error("degenerate stationary mean {gamma} for Stein-Stein linearization")]
    DegenerateGamma { gamma: f64 },

    /// An operation received a model kind it does not support.
    #[error("model kind {kind:?} not supported by {op}")]
    UnsupportedKind { kind: ModelKind, op: &'static str },

    /// A parameter set failed a hard domain constraint.
    #[error("invalid parameter {name} = {value}: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// A denominator in the closed-form coefficients fell below tolerance.
    #[error("singular denominator in {term} (|den| = {magnitude:.3e})")]
    SingularDenominator { term: &'static str, magnitude: f64 },

    /// The evaluation point sits on a pole of the characteristic function.
    #[error("characteristic function pole at Im(phi) = {im_phi}")]
    ContourSingularity { im_phi: f64 },

    /// The imaginary part of the argument left the strip of regularity.
    #[error("Im(phi) = {im_phi} outside regularity strip ({lo}, {hi})")]
    StripViolation { im_phi: f64, lo: f64, hi: f64 },

    /// No contour offset satisfies c > 1 inside the strip.
    #[error("no valid contour: need c > 1 inside ({lo}, {hi})")]
    EmptyContourRegion { lo: f64, hi: f64 },

    /// Adaptive quadrature failed to reach tolerance.
    #[error("quadrature failed to converge on {context} (error estimate {estimate:.3e}, tolerance {tolerance:.3e})")]
    QuadratureNonConvergence {
        context: &'static str,
        estimate: f64,
        tolerance: f64,
    },

    /// A price lies outside the no-arbitrage bounds, so no implied volatility
    /// exists in the bracket.
    #[error("price {price} outside no-arbitrage bounds [{lo}, {hi}]")]
    OutOfBounds { price: f64, lo: f64, hi: f64 },

    /// Implied-vol root finding exhausted its iteration budget.
    #[error("implied-vol solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    /// A variance that must be positive is not.
    #[error("non-positive variance {value}")]
    NonPositiveVariance { value: f64 },

    /// A smile fit needs at least 4 quotes for 3 parameters.
    #[error("only {found} quotes at tau = {tau}; at least {needed} required")]
    InsufficientQuotes {
        tau: f64,
        found: usize,
        needed: usize,
    },

    /// An iterative fit or calibration exhausted its iteration budget.
    #[error("{context} did not converge after {iterations} iterations")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
    },

    /// Every multistart seed point failed.
    #[error("all {starts} calibration starts failed: {last_error}")]
    AllStartsFailed { starts: usize, last_error: String },

    /// A market-data file failed to parse.
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    /// A market-data file does not match the expected schema.
    #[error("schema mismatch: {message}")]
    SchemaMismatch { message: String },

    /// A maturity block contains no quotes.
    #[error("empty quote block at tau = {tau}")]
    EmptyBlock { tau: f64 },

    /// Filesystem or serialization failure while reading/writing artifacts.
    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
