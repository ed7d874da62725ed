//! End-to-end fitting: BPH, complete HE or the optimized BPH_HE hybrid,
//! with a report comparing the fit against the target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bph::{self, BernsteinBasis};
use crate::constants::{DEFAULT_BPH_ORDER, DEFAULT_GRID_SIZE, DEFAULT_HE_TERMS};
use crate::error::{Error, Result};
use crate::he_fit::{fit_complete, FitPoints, HyperExp};
use crate::hybrid::{build_hybrid, HybridModel};
use crate::optimizer::{
    default_points, optimize, spread_points, AdamConfig, EvalGrid, LossParts, LossWeights, Objective, TraceRow,
};
use crate::phase_type::PhaseTypeModel;
use crate::target::{MomentStats, TargetDistribution, Window};

/// Target CCDF level separating the body from the tail in reports.
pub const BODY_TAIL_SPLIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Bph,
    He,
    BphHe,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::Bph, FitMethod::He, FitMethod::BphHe];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Bph => "bph",
            FitMethod::He => "he",
            FitMethod::BphHe => "bph_he",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bph" => Ok(FitMethod::Bph),
            "he" => Ok(FitMethod::He),
            "bph_he" | "bphhe" | "hybrid" => Ok(FitMethod::BphHe),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    /// Number of HE terms.
    pub k: usize,
    /// BPH order.
    pub n: usize,
    pub grid_size: usize,
    /// MAE grid window; the target window when absent.
    pub grid_window: Option<Window>,
    /// Range the initial HE points are spread over; see [`default_init_range`].
    pub init_range: Option<[f64; 2]>,
    /// Explicit HE points, overriding the spread initialization.
    pub points: Option<Vec<f64>>,
    pub optimize: bool,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: FitMethod::BphHe,
            k: DEFAULT_HE_TERMS,
            n: DEFAULT_BPH_ORDER,
            grid_size: DEFAULT_GRID_SIZE,
            grid_window: None,
            init_range: None,
            points: None,
            optimize: true,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Default spread of the initial HE points: `[2 ln n, 10 x_max]`. The lower
/// end lies past the largest BPH node `ln n`, where the tail exponentials
/// cannot overshoot the residual the BPH body sees.
pub fn default_init_range(method: FitMethod, n: usize, window: Window) -> [f64; 2] {
    let hi = 10.0 * window.x_max;
    match method {
        FitMethod::He => [1.0, hi],
        _ => [(2.0 * (n.max(2) as f64).ln()).max(1.0), hi],
    }
}

/// Table-row summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub target: String,
    pub method: FitMethod,
    pub window: Window,
    pub grid_size: usize,
    pub mae: f64,
    /// MAE on a uniform grid over the body, `[x_min, x_split]`.
    pub body_mae: f64,
    /// MAE on a uniform grid over `[x_split, x_max]`, if that is nonempty.
    pub tail_mae: Option<f64>,
    /// Point where the target CCDF falls to [`BODY_TAIL_SPLIT`].
    pub x_split: f64,
    /// Target moments over the window.
    pub real: MomentStats,
    /// Model moments over the same window.
    pub approx: MomentStats,
    /// Untruncated model moments.
    pub approx_full: Option<MomentStats>,
    pub k: usize,
    pub n: usize,
    pub he_points: Vec<f64>,
    pub loss_initial: Option<LossParts>,
    pub loss_final: Option<LossParts>,
    pub iterations: usize,
}

impl FitReport {
    pub fn mean_rel_error(&self) -> f64 {
        self.approx.mean / self.real.mean - 1.0
    }

    pub fn cv_rel_error(&self) -> f64 {
        self.approx.cv / self.real.cv - 1.0
    }
}

/// Closed-form CCDF of a fitted model, avoiding matrix exponentials.
#[derive(Debug, Clone)]
pub enum FittedCcdf {
    Bph { basis: BernsteinBasis, nodes: Vec<f64> },
    He(HyperExp),
    Hybrid(Box<HybridModel>),
}

impl FittedCcdf {
    pub fn ccdf(&self, x: f64) -> f64 {
        match self {
            FittedCcdf::Bph { basis, nodes } => basis.combine(nodes, x),
            FittedCcdf::He(he) => he.ccdf(x),
            FittedCcdf::Hybrid(h) => h.ccdf(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: PhaseTypeModel,
    pub closed_form: FittedCcdf,
    pub he: Option<HyperExp>,
    pub report: FitReport,
    pub trace: Vec<TraceRow>,
}

impl FitOutcome {
    pub fn ccdf(&self, x: f64) -> f64 {
        self.closed_form.ccdf(x)
    }
}

/// Smallest `x` in the window with `sf(x) <= level`, by bisection.
pub fn ccdf_level_point(target: &TargetDistribution, window: Window, level: f64) -> f64 {
    if target.sf(window.x_max) > level {
        return window.x_max;
    }
    let (mut lo, mut hi) = (window.x_min, window.x_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if target.sf(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

fn check_config(config: &FitConfig) -> Result<()> {
    if config.n == 0 {
        return Err(Error::InvalidParameter("BPH order must be at least 1".into()));
    }
    if config.method != FitMethod::Bph && config.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    config.weights.validate()?;
    config.adam.validate()
}

/// Runs the configured method on `target`.
pub fn fit(target: &TargetDistribution, config: &FitConfig) -> Result<FitOutcome> {
    check_config(config)?;
    let window = target.window();
    let grid_window = config.grid_window.unwrap_or(window);
    let grid = EvalGrid::uniform(grid_window, config.grid_size)?;
    let [lo, hi] = config.init_range.unwrap_or_else(|| default_init_range(config.method, config.n, window));

    let mut trace = Vec::new();
    let mut losses = (None, None);
    let (model, closed_form, he, points) = match config.method {
        FitMethod::Bph => {
            let comp = bph::build_from_cdf(|x| 1.0 - target.sf(x), 1.0, config.n)?;
            let model = comp.to_phase_type()?;
            let closed = FittedCcdf::Bph { basis: BernsteinBasis::new(config.n), nodes: comp.node_values() };
            (model, closed, None, Vec::new())
        }
        FitMethod::He => {
            let pts = match &config.points {
                Some(p) => p.clone(),
                None => spread_points(2 * config.k - 1, lo, hi)?,
            };
            let fp = FitPoints::new(pts)?;
            if fp.len() != 2 * config.k - 1 {
                return Err(Error::InvalidParameter(format!("HE with k = {} needs {} points", config.k, 2 * config.k - 1)));
            }
            let he = fit_complete(|x| target.sf(x), &fp)?;
            let model = he.to_phase_type()?;
            (model, FittedCcdf::He(he.clone()), Some(he), fp.ascending())
        }
        FitMethod::BphHe => {
            let init = match &config.points {
                Some(p) => p.clone(),
                None => default_points(config.k, lo, hi)?,
            };
            let pts = if config.optimize {
                let objective = Objective::new(target, config.k, config.n, grid.clone(), config.weights)?;
                let result = optimize(&objective, &config.adam, &init, config.seed)?;
                trace = result.trace;
                losses = (Some(result.initial), Some(result.best));
                result.points
            } else {
                init
            };
            let fp = FitPoints::new(pts)?;
            let hybrid = build_hybrid(target, config.k, config.n, &fp)?;
            let he = hybrid.he().clone();
            let model = hybrid.assembled().clone();
            (model, FittedCcdf::Hybrid(Box::new(hybrid)), Some(he), fp.ascending())
        }
    };

    let mae = grid.mae(|x| closed_form.ccdf(x), |x| target.sf(x));
    let x_split = ccdf_level_point(target, window, BODY_TAIL_SPLIT);
    let body_window = Window::new(window.x_min, x_split.max(window.x_min + f64::EPSILON))?;
    let body_mae = EvalGrid::uniform(body_window, config.grid_size)?.mae(|x| closed_form.ccdf(x), |x| target.sf(x));
    let tail_mae = if x_split < window.x_max {
        Some(EvalGrid::uniform(Window::new(x_split, window.x_max)?, config.grid_size)?.mae(|x| closed_form.ccdf(x), |x| target.sf(x)))
    } else {
        None
    };
    let report = FitReport {
        target: target.kind().name().into(),
        method: config.method,
        window,
        grid_size: config.grid_size,
        mae,
        body_mae,
        tail_mae,
        x_split,
        real: target.reference_stats(window)?,
        approx: model.truncated_stats(window)?,
        approx_full: model.stats().ok(),
        k: if config.method == FitMethod::Bph { 0 } else { config.k },
        n: if config.method == FitMethod::He { 0 } else { config.n },
        he_points: points,
        loss_initial: losses.0,
        loss_final: losses.1,
        iterations: trace.len().saturating_sub(1),
    };
    Ok(FitOutcome { model, closed_form, he, report, trace })
}

/// Fits every method in `methods` with otherwise shared settings. Failures
/// are returned per row.
pub fn compare(target: &TargetDistribution, methods: &[FitMethod], base: &FitConfig) -> Vec<(FitMethod, Result<FitReport>)> {
    methods
        .iter()
        .map(|&method| {
            let config = FitConfig { method, ..base.clone() };
            (method, fit(target, &config).map(|o| o.report))
        })
        .collect()
}
