//! Numerical tolerances shared across the crate.
//!
//! Every threshold that decides validity, truncation or convergence lives
//! here so that tests and implementation agree on a single value.

/// Slack on probability sums: a model is proper when `|sum(alpha) - 1|` is
/// below this value.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Negative initial probabilities down to this magnitude are treated as
/// rounding noise and clamped to zero.
pub const ALPHA_NOISE_TOL: f64 = 1e-12;

/// Allowed positive row sum of a sub-generator (rounding noise).
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Poisson mass that uniformization is allowed to drop from the series.
pub const POISSON_TAIL_TOL: f64 = 1e-13;

/// Survival probabilities below this are reported as exactly zero.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Largest `q * x` evaluated by a single uniformization series. Longer
/// horizons are split into `2^s` equal steps and recombined by squaring.
pub const UNIFORMIZATION_DIRECT_LIMIT: f64 = 1e5;

/// Per-step `q * tau` used when the squaring path is taken.
pub const UNIFORMIZATION_STEP_LIMIT: f64 = 500.0;

/// BPH weights in `[-BPH_WEIGHT_TOL, 0)` are clamped to zero; anything
/// lower means the evaluator was not monotone.
pub const BPH_WEIGHT_TOL: f64 = 1e-9;

/// Residual tail CCDF values in `[-RESIDUAL_TOL, 0)` are clamped to zero.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Relative tolerance of the adaptive quadrature used for reference moments.
pub const QUADRATURE_REL_TOL: f64 = 1e-9;

/// Cap on the number of subintervals the adaptive quadrature may create.
pub const QUADRATURE_MAX_INTERVALS: usize = 20_000;

/// Largest magnitude a raw (possibly invalid) hyperexponential weight may
/// take inside the optimizer loss. Keeps the loss and its finite
/// differences finite.
pub const RAW_WEIGHT_CAP: f64 = 1e6;

/// Convergence threshold of the rate-matrix iteration (elementwise).
pub const R_ITERATION_TOL: f64 = 1e-13;

/// Maximum number of rate-matrix sweeps.
pub const R_ITERATION_MAX_SWEEPS: usize = 100_000;

/// Default BPH order.
pub const DEFAULT_BPH_ORDER: usize = 100;

/// Default number of hyperexponential terms.
pub const DEFAULT_HE_TERMS: usize = 4;

/// Default evaluation grid size.
pub const DEFAULT_GRID_SIZE: usize = 512;

/// Default reference window upper bound.
pub const DEFAULT_WINDOW_MAX: f64 = 1e3;
