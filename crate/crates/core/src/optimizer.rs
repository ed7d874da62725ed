//! Selection of the tail fitting points by Adam on a penalized grid MAE.
//!
//! Points are optimized in log space, `u = ln x`, so they stay positive.
//! Gradients are central finite differences; the `4k` loss evaluations of an
//! iteration run in parallel.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bph::{self, BernsteinBasis};
use crate::constants::DEFAULT_GRID_SIZE;
use crate::error::{Error, Result};
use crate::he_fit::{fit_defective_raw, FitPoints, HyperExp, RawFit};
use crate::hybrid::residual_ccdf;
use crate::target::{TargetDistribution, Window};

/// Finite-difference step in log space.
pub const FD_STEP: f64 = 1e-4;
/// Relative distance under which two points count as collided.
pub const COLLISION_TOL: f64 = 1e-9;
/// Relative jitter applied to a collided log-point.
pub const COLLISION_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_mae: f64,
    pub w_lambda: f64,
    pub w_p: f64,
}

impl LossWeights {
    pub fn new(w_mae: f64, w_lambda: f64, w_p: f64) -> Result<Self> {
        let w = LossWeights { w_mae, w_lambda, w_p };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_mae, self.w_lambda, self.w_p];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("loss weights must be nonnegative".into()));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("loss weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_mae: 0.8, w_lambda: 0.1, w_p: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 500,
            patience: 50,
            min_improvement: 1e-9,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.epsilon, self.min_improvement];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_iters == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter("Adam settings must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidParameter("Adam betas must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Evenly spaced evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    z: Vec<f64>,
}

impl EvalGrid {
    pub fn uniform(window: Window, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter("evaluation grid needs at least two points".into()));
        }
        let step = window.width() / (m - 1) as f64;
        let mut z: Vec<f64> = (0..m).map(|i| window.x_min + step * i as f64).collect();
        z[m - 1] = window.x_max;
        Ok(EvalGrid { z })
    }

    pub fn default_for(window: Window) -> Self {
        EvalGrid::uniform(window, DEFAULT_GRID_SIZE).expect("default grid size is valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Mean absolute difference between two functions on the grid.
    pub fn mae<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, f: F, g: G) -> f64 {
        self.z.iter().map(|&x| (f(x) - g(x)).abs()).sum::<f64>() / self.z.len() as f64
    }
}

/// Power-of-two points `2^(i-1)`, `i = 1..2k`, mapped affinely onto
/// `[x_min, x_max]`.
pub fn default_points(k: usize, x_min: f64, x_max: f64) -> Result<Vec<f64>> {
    spread_points(2 * k, x_min, x_max)
}

/// `count` power-of-two points mapped onto `[x_min, x_max]`.
pub fn spread_points(count: usize, x_min: f64, x_max: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one point".into()));
    }
    if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
        return Err(Error::InvalidParameter(format!("invalid point range [{x_min}, {x_max}]")));
    }
    if count == 1 {
        return Ok(vec![x_min]);
    }
    let last = 2f64.powi(count as i32 - 1);
    Ok((0..count)
        .map(|i| {
            let x = 2f64.powi(i as i32);
            x_min + (x - 1.0) * (x_max - x_min) / (last - 1.0)
        })
        .collect())
}

/// Loss decomposition. Penalties are unweighted; `total` applies the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mae: f64,
    pub lambda_penalty: f64,
    pub p_penalty: f64,
    /// Whether the hybrid pipeline produced a valid model.
    pub feasible: bool,
}

/// Precomputed target values and Bernstein basis on the grid.
pub struct Objective<'a> {
    target: &'a TargetDistribution,
    k: usize,
    n: usize,
    weights: LossWeights,
    grid: EvalGrid,
    y: Vec<f64>,
    basis_rows: Vec<Vec<f64>>,
    nodes: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(target: &'a TargetDistribution, k: usize, n: usize, grid: EvalGrid, weights: LossWeights) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::InvalidParameter("k and n must be positive".into()));
        }
        weights.validate()?;
        let y = grid.points().iter().map(|&x| target.sf(x)).collect();
        let basis = BernsteinBasis::new(n);
        let basis_rows = grid.points().iter().map(|&x| basis.values(x)).collect();
        Ok(Objective { target, k, n, weights, grid, y, basis_rows, nodes: bph::nodes(n) })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    fn mae_of<F: Fn(usize, f64) -> f64>(&self, model: F) -> f64 {
        let s: f64 = self
            .grid
            .points()
            .iter()
            .zip(&self.y)
            .enumerate()
            .map(|(j, (&x, &y))| (model(j, x) - y).abs())
            .sum();
        s / self.y.len() as f64
    }

    /// MAE of the hybrid built on a valid tail, or `None` when the residual
    /// dips below tolerance at a BPH node or yields non-monotone weights.
    fn hybrid_mae(&self, he: &HyperExp) -> Option<f64> {
        let residual = residual_ccdf(|x| self.target.sf(x), he).ok()?;
        let values: Vec<f64> = self.nodes.iter().map(|&x| residual.eval(x)).collect::<Result<_>>().ok()?;
        let node_values = bph::build_from_ccdf_values(&values, 0.0).ok()?.node_values();
        Some(self.mae_of(|j, x| {
            let body: f64 = self.basis_rows[j].iter().zip(&node_values).map(|(b, v)| b * v).sum();
            body + he.ccdf(x)
        }))
    }

    /// Penalized loss; finite for any positive points.
    pub fn loss(&self, points: &[f64]) -> LossParts {
        let w = self.weights;
        let fp = match FitPoints::new(points.to_vec()) {
            Ok(fp) if fp.len() == 2 * self.k => fp,
            _ => {
                // collided or malformed points: as bad as an empty model
                let mae = self.mae_of(|_, _| 0.0);
                return LossParts {
                    total: w.w_mae * mae + w.w_lambda,
                    mae,
                    lambda_penalty: 1.0,
                    p_penalty: 0.0,
                    feasible: false,
                };
            }
        };
        let raw = fit_defective_raw(|x| self.target.sf(x), &fp).expect("point count checked");
        let (lambda_penalty, p_penalty) = penalties(&raw);
        // any failure of the pipeline scores the raw tail mixture alone
        let hybrid = raw.clone().into_result().ok().and_then(|he| self.hybrid_mae(&he));
        let (mae, feasible) = match hybrid {
            Some(mae) => (mae, true),
            None => (self.mae_of(|_, x| raw.mixture_ccdf(x)), false),
        };
        LossParts {
            total: w.w_mae * mae + w.w_lambda * lambda_penalty + w.w_p * p_penalty,
            mae,
            lambda_penalty,
            p_penalty,
            feasible,
        }
    }
}

/// Fraction of non-positive (or unidentified) rates and total weight range
/// violation of a raw fit.
pub fn penalties(raw: &RawFit) -> (f64, f64) {
    let k = raw.terms.len().max(1) as f64;
    let bad_rates = raw.terms.iter().filter(|t| !(t.lambda > 0.0)).count() as f64;
    let p_pen = raw.terms.iter().map(|t| (-t.p).max(0.0) + (t.p - 1.0).max(0.0)).sum();
    (bad_rates / k, p_pen)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub total: f64,
    pub mae: f64,
    pub pen_lambda: f64,
    pub pen_p: f64,
    pub best_total: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// Best points seen, ascending.
    pub points: Vec<f64>,
    pub best: LossParts,
    pub initial: LossParts,
    pub trace: Vec<TraceRow>,
}

fn repel_collisions(u: &mut [f64], rng: &mut ChaCha8Rng) {
    let mut order: Vec<usize> = (0..u.len()).collect();
    loop {
        order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
        let hit = order.windows(2).find(|w| {
            let (xa, xb) = (u[w[0]].exp(), u[w[1]].exp());
            (xb - xa).abs() <= COLLISION_TOL * xa.abs().max(xb.abs())
        });
        match hit {
            Some(w) => {
                let j = w[1];
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let delta = COLLISION_JITTER * u[j].abs().max(1.0);
                debug!("repelling collided point {} by {delta:e}", u[j].exp());
                u[j] += sign * delta;
            }
            None => break,
        }
    }
}

/// Adam on log-points from `init`. Returns the best points seen.
pub fn optimize(objective: &Objective<'_>, adam: &AdamConfig, init: &[f64], seed: u64) -> Result<OptimizeResult> {
    adam.validate()?;
    let dim = 2 * objective.k();
    if init.len() != dim || init.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidParameter(format!("optimizer needs {dim} positive initial points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = init.iter().map(|x| x.ln()).collect();
    repel_collisions(&mut u, &mut rng);
    let eval = |u: &[f64]| objective.loss(&u.iter().map(|v| v.exp()).collect::<Vec<_>>());

    let initial = eval(&u);
    let mut best = initial;
    let mut best_u = u.clone();
    let mut current = initial;
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut since_improvement = 0;
    let mut trace = vec![TraceRow {
        iteration: 0,
        total: initial.total,
        mae: initial.mae,
        pen_lambda: initial.lambda_penalty,
        pen_p: initial.p_penalty,
        best_total: initial.total,
    }];

    for t in 1..=adam.max_iters {
        let probes: Vec<f64> = (0..2 * dim)
            .into_par_iter()
            .map(|idx| {
                let mut up = u.clone();
                let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
                up[idx / 2] += sign * FD_STEP;
                eval(&up).total
            })
            .collect();
        for j in 0..dim {
            let g = (probes[2 * j] - probes[2 * j + 1]) / (2.0 * FD_STEP);
            m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g;
            v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g * g;
            let m_hat = m[j] / (1.0 - adam.beta1.powi(t as i32));
            let v_hat = v[j] / (1.0 - adam.beta2.powi(t as i32));
            u[j] -= adam.learning_rate * m_hat / (v_hat.sqrt() + adam.epsilon);
        }
        repel_collisions(&mut u, &mut rng);
        current = eval(&u);
        if current.total < best.total - adam.min_improvement {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if current.total < best.total {
            best = current;
            best_u = u.clone();
        }
        trace.push(TraceRow {
            iteration: t,
            total: current.total,
            mae: current.mae,
            pen_lambda: current.lambda_penalty,
            pen_p: current.p_penalty,
            best_total: best.total,
        });
        if since_improvement >= adam.patience {
            debug!("stopping after {t} iterations without improvement");
            break;
        }
    }
    info!(
        "optimizer: loss {:.3e} -> {:.3e} (last {:.3e}) in {} iterations",
        initial.total,
        best.total,
        current.total,
        trace.len() - 1
    );
    let mut points: Vec<f64> = best_u.iter().map(|v| v.exp()).collect();
    points.sort_by(f64::total_cmp);
    Ok(OptimizeResult { points, best, initial, trace })
}
