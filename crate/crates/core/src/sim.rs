//! M/G/1 FIFO simulation by the Lindley recursion.
//!
//! Replications run in parallel, each on its own `ChaCha8Rng` seeded with
//! `seed + index`, and are merged in index order.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_type::PhSampler;
use crate::target::{TargetDistribution, TargetKind};

/// Normal 97.5% quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub trait ServiceSampler: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;
}

impl ServiceSampler for PhSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.draw(rng)
    }
}

/// Constant service time.
#[derive(Debug, Clone, Copy)]
pub struct Deterministic(pub f64);

impl ServiceSampler for Deterministic {
    fn sample(&self, _rng: &mut ChaCha8Rng) -> f64 {
        self.0
    }
}

/// Inverse-transform sampler for a target distribution.
#[derive(Debug, Clone)]
pub struct TargetSampler {
    target: TargetDistribution,
}

pub fn target_sampler(target: &TargetDistribution) -> TargetSampler {
    TargetSampler { target: target.clone() }
}

impl ServiceSampler for TargetSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        // (0, 1] always brackets for a proper, continuous target
        inverse_ccdf(&self.target, u).unwrap_or(0.0)
    }
}

/// Solves `sf(x) = u` for `u` in `(0, 1]`.
pub fn inverse_ccdf(target: &TargetDistribution, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Domain(format!("inverse CCDF needs u in (0, 1], got {u}")));
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    match *target.kind() {
        TargetKind::Pareto { shape } => return Ok(u.powf(-1.0 / shape) - 1.0),
        TargetKind::Weibull { scale, shape } => return Ok(scale * (-u.ln()).powf(1.0 / shape)),
        TargetKind::Burr { c, d } => return Ok((u.powf(-1.0 / d) - 1.0).powf(1.0 / c)),
        _ => {}
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while target.sf(hi) > u {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Bracketing { u });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if target.sf(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = target.sf(x) - u;
        let d = target.density(x);
        if !(d > 0.0) {
            break;
        }
        let next = (x + f / d).clamp(lo, hi);
        let done = (next - x).abs() <= 1e-12 * next.abs();
        x = next;
        if done {
            break;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub jobs: usize,
    pub warmup: usize,
    pub seed: u64,
    pub replications: usize,
    /// Points at which the empirical waiting-time CCDF is reported.
    pub wait_grid: Vec<f64>,
    /// Largest queue length with its own histogram bin.
    pub qlen_max: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            lambda: 0.5,
            jobs: 2_000_000,
            warmup: 100_000,
            seed: 0,
            replications: 10,
            wait_grid: Vec::new(),
            qlen_max: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("arrival rate {} must be positive", self.lambda)));
        }
        if self.jobs <= self.warmup {
            return Err(Error::InvalidParameter("jobs must exceed warmup".into()));
        }
        if self.replications < 2 {
            return Err(Error::InvalidParameter("confidence intervals need at least two replications".into()));
        }
        Ok(())
    }
}

/// Point estimate with a 95% confidence half-width across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let r = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / r;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        Estimate { mean, half_width: Z_95 * (var / r).sqrt() }
    }

    /// Whether `value` lies within `widths` half-widths of the estimate.
    pub fn covers(&self, value: f64, widths: f64) -> bool {
        (self.mean - value).abs() <= widths * self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub lambda: f64,
    pub replications: usize,
    pub rho: Estimate,
    #[serde(rename = "E_S")]
    pub e_s: Estimate,
    #[serde(rename = "E_W")]
    pub e_w: Estimate,
    #[serde(rename = "E_T")]
    pub e_t: Estimate,
    #[serde(rename = "E_N")]
    pub e_n: Estimate,
    #[serde(rename = "E_Nq")]
    pub e_nq: Estimate,
    /// `(x, P(W > x))` on the configured grid.
    pub wait_ccdf: Vec<(f64, Estimate)>,
    /// `P(N = n)` seen at arrivals for `n = 0..=qlen_max`; the last bin
    /// collects everything above.
    pub qlen: Vec<Estimate>,
    /// Set when the estimated utilization reaches one.
    pub unstable: bool,
}

struct Replication {
    rho: f64,
    e_s: f64,
    e_w: f64,
    e_n: f64,
    e_nq: f64,
    wait_ccdf: Vec<f64>,
    qlen: Vec<f64>,
}

fn replicate<S: ServiceSampler + ?Sized>(config: &SimConfig, sampler: &S, index: usize) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
    let mut clock = 0.0_f64;
    let mut wait = 0.0_f64;
    let mut prev_service = 0.0_f64;
    let mut departures: VecDeque<f64> = VecDeque::new();
    let kept = (config.jobs - config.warmup) as f64;
    let (mut sum_s, mut sum_w, mut sum_n, mut sum_nq) = (0.0, 0.0, 0.0, 0.0);
    let mut start_clock = 0.0;
    let mut wait_hits = vec![0u64; config.wait_grid.len()];
    let mut qlen = vec![0u64; config.qlen_max + 1];
    for j in 0..config.jobs {
        let gap = -(1.0 - rng.random::<f64>()).ln() / config.lambda;
        clock += gap;
        if j > 0 {
            wait = (wait + prev_service - gap).max(0.0);
        }
        let service = sampler.sample(&mut rng);
        while departures.front().is_some_and(|&d| d <= clock) {
            departures.pop_front();
        }
        let in_system = departures.len();
        departures.push_back(clock + wait + service);
        prev_service = service;
        if j == config.warmup {
            start_clock = clock;
        }
        if j >= config.warmup {
            sum_s += service;
            sum_w += wait;
            sum_n += in_system as f64;
            sum_nq += in_system.saturating_sub(1) as f64;
            for (hit, &x) in wait_hits.iter_mut().zip(&config.wait_grid) {
                if wait > x {
                    *hit += 1;
                }
            }
            qlen[in_system.min(config.qlen_max)] += 1;
        }
    }
    let span = clock - start_clock;
    Replication {
        rho: if span > 0.0 { sum_s / span } else { f64::NAN },
        e_s: sum_s / kept,
        e_w: sum_w / kept,
        e_n: sum_n / kept,
        e_nq: sum_nq / kept,
        wait_ccdf: wait_hits.iter().map(|&h| h as f64 / kept).collect(),
        qlen: qlen.iter().map(|&h| h as f64 / kept).collect(),
    }
}

/// Simulates `config.replications` independent runs of the M/G/1 queue.
pub fn run_mg1<S: ServiceSampler + ?Sized>(config: &SimConfig, sampler: &S) -> Result<SimResult> {
    config.validate()?;
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|i| replicate(config, sampler, i))
        .collect();
    let est = |f: &dyn Fn(&Replication) -> f64| Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>());
    let rho = est(&|r| r.rho);
    let e_s = est(&|r| r.e_s);
    let e_w = est(&|r| r.e_w);
    let e_t = est(&|r| r.e_w + r.e_s);
    let wait_ccdf = config
        .wait_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, est(&|r| r.wait_ccdf[i])))
        .collect();
    let qlen = (0..=config.qlen_max).map(|n| est(&|r| r.qlen[n])).collect();
    Ok(SimResult {
        lambda: config.lambda,
        replications: config.replications,
        unstable: rho.mean >= 1.0,
        rho,
        e_s,
        e_w,
        e_t,
        e_n: est(&|r| r.e_n),
        e_nq: est(&|r| r.e_nq),
        wait_ccdf,
        qlen,
    })
}
