//! Continuous phase-type distributions given by an initial vector and a
//! sub-generator matrix.
//!
//! Matrix exponentials are only ever applied to vectors and are evaluated by
//! uniformization: with `q = max |A_ii|` and `P = I + A / q`,
//!
//! ```text
//! alpha * exp(xA) = sum_k Poisson(k; qx) * alpha * P^k
//! ```
//!
//! Every term is nonnegative, so the truncation error is bounded by the
//! Poisson mass left out of the sum.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{
    ALPHA_NOISE_TOL, POISSON_TAIL_TOL, PROB_SUM_TOL, ROW_SUM_TOL, UNDERFLOW_FLOOR,
    UNIFORMIZATION_DIRECT_LIMIT, UNIFORMIZATION_STEP_LIMIT,
};
use crate::error::{Error, Result};
use crate::target::{MomentStats, Window};

/// A violated representation invariant, with location and magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DimensionMismatch { alpha_len: usize, rows: usize, cols: usize },
    Empty,
    NonFinite { row: Option<usize>, col: Option<usize> },
    NegativeInitialProbability { index: usize, value: f64 },
    InitialProbabilityAboveOne { index: usize, value: f64 },
    InitialMassAboveOne { sum: f64 },
    NonNegativeDiagonal { index: usize, value: f64 },
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    PositiveRowSum { row: usize, sum: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch { alpha_len, rows, cols } => {
                write!(f, "alpha has {alpha_len} entries but the matrix is {rows}x{cols}")
            }
            Violation::Empty => write!(f, "empty representation"),
            Violation::NonFinite { row, col } => write!(f, "non-finite entry at {row:?}, {col:?}"),
            Violation::NegativeInitialProbability { index, value } => {
                write!(f, "initial probability {index} is negative ({value:e})")
            }
            Violation::InitialProbabilityAboveOne { index, value } => {
                write!(f, "initial probability {index} exceeds one ({value})")
            }
            Violation::InitialMassAboveOne { sum } => write!(f, "initial probabilities sum to {sum} > 1"),
            Violation::NonNegativeDiagonal { index, value } => {
                write!(f, "diagonal entry {index} is not negative ({value})")
            }
            Violation::NegativeOffDiagonal { row, col, value } => {
                write!(f, "off-diagonal entry ({row}, {col}) is negative ({value:e})")
            }
            Violation::PositiveRowSum { row, sum } => write!(f, "row {row} sums to {sum:e} > 0"),
        }
    }
}

/// Checks a candidate `(alpha, A)` pair and lists every violated invariant.
pub fn validate(alpha: &[f64], generator: &DMatrix<f64>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = alpha.len();
    if n == 0 {
        out.push(Violation::Empty);
        return out;
    }
    if generator.nrows() != n || generator.ncols() != n {
        out.push(Violation::DimensionMismatch { alpha_len: n, rows: generator.nrows(), cols: generator.ncols() });
        return out;
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !a.is_finite() {
            out.push(Violation::NonFinite { row: None, col: Some(i) });
        } else if a < -ALPHA_NOISE_TOL {
            out.push(Violation::NegativeInitialProbability { index: i, value: a });
        } else if a > 1.0 + ALPHA_NOISE_TOL {
            out.push(Violation::InitialProbabilityAboveOne { index: i, value: a });
        }
    }
    let sum: f64 = alpha.iter().sum();
    if sum > 1.0 + ALPHA_NOISE_TOL && n > 1 {
        out.push(Violation::InitialMassAboveOne { sum });
    }
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = generator[(i, j)];
            if !v.is_finite() {
                out.push(Violation::NonFinite { row: Some(i), col: Some(j) });
                continue;
            }
            row_sum += v;
            if i == j {
                if v >= 0.0 {
                    out.push(Violation::NonNegativeDiagonal { index: i, value: v });
                }
            } else if v < 0.0 {
                out.push(Violation::NegativeOffDiagonal { row: i, col: j, value: v });
            }
        }
        if row_sum > ROW_SUM_TOL * generator[(i, i)].abs().max(1.0) {
            out.push(Violation::PositiveRowSum { row: i, sum: row_sum });
        }
    }
    out
}

/// Sparse row of the uniformized matrix `P = I + A / q`.
type SparseRow = Vec<(usize, f64)>;

/// Poisson probabilities covering all but `tail_tol` of the mass.
/// Returns the index of the first weight and the normalized weights.
fn poisson_weights(mean: f64, tail_tol: f64) -> (usize, Vec<f64>) {
    if mean <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = mean.floor() as usize;
    let half_tol = 0.5 * tail_tol;
    // right side, starting at the mode with an unnormalized weight of one
    let mut right = vec![1.0];
    let mut sum = 1.0;
    let mut k = mode;
    loop {
        let ratio = mean / (k + 1) as f64;
        let last = *right.last().expect("nonempty");
        if ratio < 1.0 && last * ratio / (1.0 - ratio) <= half_tol * sum {
            break;
        }
        let next = last * ratio;
        right.push(next);
        sum += next;
        k += 1;
    }
    let mut left = Vec::new();
    let mut k = mode;
    let mut w = 1.0;
    while k > 0 {
        let ratio = k as f64 / mean;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) <= half_tol * sum {
            break;
        }
        w *= ratio;
        left.push(w);
        sum += w;
        k -= 1;
    }
    let start = mode - left.len();
    let mut weights: Vec<f64> = left.into_iter().rev().collect();
    weights.extend(right);
    for w in &mut weights {
        *w /= sum;
    }
    (start, weights)
}

/// Phase-type distribution `(alpha, A)`.
///
/// Defective representations (`sum(alpha) < 1`) are allowed; the missing
/// mass is an atom at zero. Operations that need a proper distribution say
/// so and return [`Error::Defective`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTypeModel {
    alpha: Vec<f64>,
    generator: DMatrix<f64>,
    exit: Vec<f64>,
    rate: f64,
    uniformized: Vec<SparseRow>,
}

impl PhaseTypeModel {
    pub fn new(mut alpha: Vec<f64>, generator: DMatrix<f64>) -> Result<Self> {
        let violations = validate(&alpha, &generator);
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidGenerator(msg.join("; ")));
        }
        for a in &mut alpha {
            if *a < 0.0 {
                *a = 0.0;
            }
        }
        let n = alpha.len();
        let exit: Vec<f64> = (0..n)
            .map(|i| (-generator.row(i).sum()).max(0.0))
            .collect();
        let rate = (0..n).map(|i| -generator[(i, i)]).fold(0.0, f64::max);
        let uniformized = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let v = if i == j { 1.0 + generator[(i, j)] / rate } else { generator[(i, j)] / rate };
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Ok(PhaseTypeModel { alpha, generator, exit, rate, uniformized })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![1.0], DMatrix::from_element(1, 1, -rate))
    }

    /// Erlang distribution with `phases` stages of the given rate.
    pub fn erlang(phases: usize, rate: f64) -> Result<Self> {
        let mut a = DMatrix::zeros(phases, phases);
        for i in 0..phases {
            a[(i, i)] = -rate;
            if i + 1 < phases {
                a[(i, i + 1)] = rate;
            }
        }
        let mut alpha = vec![0.0; phases];
        if phases > 0 {
            alpha[0] = 1.0;
        }
        Self::new(alpha, a)
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Exit (absorption) rates `-A 1`.
    pub fn exit_rates(&self) -> &[f64] {
        &self.exit
    }

    /// Total initial probability `sum(alpha)`.
    pub fn mass(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn is_proper(&self) -> bool {
        (self.mass() - 1.0).abs() <= PROB_SUM_TOL
    }

    /// Uniformization rate `q = max |A_ii|`.
    pub fn uniformization_rate(&self) -> f64 {
        self.rate
    }

    fn row_times_p(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.uniformized.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += vi * p;
            }
        }
    }

    fn series_row(&self, start: &[f64], x: f64, tail_tol: f64) -> Vec<f64> {
        let (first, weights) = poisson_weights(self.rate * x, tail_tol);
        let n = self.order();
        let mut acc = vec![0.0; n];
        let mut v = start.to_vec();
        let mut next = vec![0.0; n];
        let last = first + weights.len();
        for k in 0..last {
            if k >= first {
                let w = weights[k - first];
                for (a, vi) in acc.iter_mut().zip(&v) {
                    *a += w * vi;
                }
            }
            if k + 1 < last {
                self.row_times_p(&v, &mut next);
                std::mem::swap(&mut v, &mut next);
                if v.iter().all(|&e| e < UNDERFLOW_FLOOR) {
                    break;
                }
            }
        }
        acc
    }

    /// Dense `exp(tau A)` by uniformization, one row at a time.
    fn exp_matrix(&self, tau: f64, tail_tol: f64) -> DMatrix<f64> {
        let n = self.order();
        let mut m = DMatrix::zeros(n, n);
        let mut unit = vec![0.0; n];
        for i in 0..n {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[i] = 1.0;
            let row = self.series_row(&unit, tau, tail_tol);
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Row vector `alpha * exp(xA)`.
    pub fn transient_row(&self, x: f64) -> Vec<f64> {
        self.propagate(&self.alpha, x)
    }

    /// Row vector `start * exp(xA)` for an arbitrary nonnegative `start`.
    pub fn propagate(&self, start: &[f64], x: f64) -> Vec<f64> {
        if x <= 0.0 {
            return start.to_vec();
        }
        let qx = self.rate * x;
        if qx <= UNIFORMIZATION_DIRECT_LIMIT {
            return self.series_row(start, x, POISSON_TAIL_TOL);
        }
        let squarings = (qx / UNIFORMIZATION_STEP_LIMIT).log2().ceil().max(1.0) as i32;
        let steps = 2f64.powi(squarings);
        // each squaring doubles the relative truncation error
        let mut e = self.exp_matrix(x / steps, POISSON_TAIL_TOL / steps);
        for _ in 0..squarings {
            e = &e * &e;
        }
        let row = DVector::from_column_slice(start).transpose() * e;
        row.iter().copied().collect()
    }

    fn check_x(x: f64) -> Result<()> {
        if x.is_nan() || x < 0.0 {
            Err(Error::Domain(format!("x = {x} must be nonnegative")))
        } else {
            Ok(())
        }
    }

    /// Survival function without argument checks (negative `x` is treated
    /// as zero).
    pub fn sf(&self, x: f64) -> f64 {
        let row = self.transient_row(x.max(0.0));
        let v: f64 = row.iter().sum();
        if v < UNDERFLOW_FLOOR {
            0.0
        } else {
            v.min(self.mass())
        }
    }

    pub fn ccdf(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.sf(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.ccdf(x)?)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        let row = self.transient_row(x);
        let v: f64 = row.iter().zip(&self.exit).map(|(r, s)| r * s).sum();
        Ok(if v < UNDERFLOW_FLOOR { 0.0 } else { v })
    }

    fn neg_generator_lu(&self) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        (-self.generator.clone()).lu()
    }

    /// `[(-A)^-1 1, (-A)^-2 1, ...]` up to `count` terms.
    fn inverse_powers_on_ones(&self, count: usize) -> Result<Vec<DVector<f64>>> {
        let lu = self.neg_generator_lu();
        let mut out = Vec::with_capacity(count);
        let mut v = DVector::from_element(self.order(), 1.0);
        for _ in 0..count {
            v = lu
                .solve(&v)
                .ok_or_else(|| Error::InvalidGenerator("sub-generator is singular".into()))?;
            if v.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidGenerator("sub-generator is numerically singular".into()));
            }
            out.push(v.clone());
        }
        Ok(out)
    }

    /// `k! * alpha * (-A)^-k * 1`, by `k` successive linear solves.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter("moment order must be positive".into()));
        }
        let powers = self.inverse_powers_on_ones(k as usize)?;
        let factorial: f64 = (1..=k).map(f64::from).product();
        let alpha = DVector::from_column_slice(&self.alpha);
        Ok(factorial * alpha.dot(&powers[k as usize - 1]))
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    pub fn stats(&self) -> Result<MomentStats> {
        MomentStats::from_moments(self.moment(1)?, self.moment(2)?)
    }

    pub fn cv(&self) -> Result<f64> {
        Ok(self.stats()?.cv)
    }

    /// `order * integral over window of x^(order-1) * ccdf(x)`, in closed form:
    ///
    /// ```text
    /// int_0^X ccdf     = alpha y1 - alpha e^{XA} y1
    /// int_0^X 2x ccdf  = 2 (alpha y2 - alpha e^{XA} y2 - X alpha e^{XA} y1)
    /// ```
    /// with `y_j = (-A)^-j 1`.
    pub fn truncated_moment(&self, order: u32, window: Window) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidParameter(format!("moment order {order} not in {{1, 2}}")));
        }
        let ys = self.inverse_powers_on_ones(2)?;
        let alpha = DVector::from_column_slice(&self.alpha);
        let (a1, a2) = (alpha.dot(&ys[0]), alpha.dot(&ys[1]));
        let upto = |x: f64| -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            let row = DVector::from_vec(self.transient_row(x));
            let r1 = row.dot(&ys[0]);
            match order {
                1 => a1 - r1,
                _ => 2.0 * (a2 - row.dot(&ys[1]) - x * r1),
            }
        };
        Ok(upto(window.x_max) - upto(window.x_min))
    }

    pub fn truncated_stats(&self, window: Window) -> Result<MomentStats> {
        MomentStats::from_moments(self.truncated_moment(1, window)?, self.truncated_moment(2, window)?)
    }

    /// Rescales the generator so the mean equals `target_mean`:
    /// `A' = (mean / target_mean) * A`.
    pub fn scale_to_mean(&self, target_mean: f64) -> Result<Self> {
        if !(target_mean.is_finite() && target_mean > 0.0) {
            return Err(Error::InvalidParameter(format!("target mean {target_mean} must be positive")));
        }
        let current = self.mean()?;
        if !(current > 0.0) {
            return Err(Error::InvalidParameter(format!("model mean {current} must be positive")));
        }
        let factor = current / target_mean;
        Self::new(self.alpha.clone(), &self.generator * factor)
    }

    /// Per-call sampler over the absorbing chain. Proper models only.
    pub fn sampler(&self) -> Result<PhSampler> {
        if !self.is_proper() {
            return Err(Error::Defective { mass: self.mass() });
        }
        let n = self.order();
        let mut initial = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &a in &self.alpha {
            acc += a;
            initial.push(acc);
        }
        let phases = (0..n)
            .map(|i| {
                let out_rate = -self.generator[(i, i)];
                let mut jumps = Vec::new();
                let mut acc = 0.0;
                for j in 0..n {
                    let v = self.generator[(i, j)];
                    if j != i && v > 0.0 {
                        acc += v / out_rate;
                        jumps.push((acc, j));
                    }
                }
                PhaseRow { out_rate, jumps }
            })
            .collect();
        Ok(PhSampler { initial, phases })
    }

    /// `count` independent draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        let sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
    }
}

#[derive(Debug, Clone)]
struct PhaseRow {
    out_rate: f64,
    /// Cumulative jump probabilities; the remainder up to one is absorption.
    jumps: Vec<(f64, usize)>,
}

/// Simulates time to absorption of a phase-type model.
#[derive(Debug, Clone)]
pub struct PhSampler {
    initial: Vec<f64>,
    phases: Vec<PhaseRow>,
}

impl PhSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.initial[self.initial.len() - 1];
        let mut phase = self.initial.partition_point(|&c| c <= u).min(self.initial.len() - 1);
        let mut t = 0.0;
        loop {
            let row = &self.phases[phase];
            t += -(1.0 - rng.random::<f64>()).ln() / row.out_rate;
            let u: f64 = rng.random();
            match row.jumps.iter().find(|(c, _)| u < *c) {
                Some(&(_, next)) => phase = next,
                None => return t,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> (Vec<f64>, DMatrix<f64>) {
        (
            vec![0.4, 0.0, 0.6],
            DMatrix::from_row_slice(3, 3, &[-5.2, 3.0, 2.2, 1.2, -2.5, 0.5, 4.0, 2.3, -7.55]),
        )
    }

    #[test]
    fn three_phase_example_is_valid() {
        let (a, m) = fig1();
        assert!(validate(&a, &m).is_empty());
        let model = PhaseTypeModel::new(a, m).unwrap();
        assert!(model.is_proper());
        assert!((model.ccdf(0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn violations_reported() {
        let v = validate(&[1.2], &DMatrix::from_element(1, 1, -1.0));
        assert!(matches!(v[0], Violation::InitialProbabilityAboveOne { index: 0, .. }));
        let v = validate(&[1.0], &DMatrix::from_element(1, 1, 1.0));
        assert!(v.iter().any(|x| matches!(x, Violation::NonNegativeDiagonal { index: 0, .. })));
        let v = validate(&[0.5, 0.5], &DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0]));
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeOffDiagonal { row: 0, col: 1, .. })));
        let v = validate(&[0.5, 0.5], &DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -1.0]));
        assert!(v.iter().any(|x| matches!(x, Violation::PositiveRowSum { row: 0, .. })));
        let v = validate(&[0.5], &DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(v[0], Violation::DimensionMismatch { .. }));
        assert!(PhaseTypeModel::new(vec![1.2], DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn alpha_noise_is_clamped() {
        let m = PhaseTypeModel::new(vec![-1e-13, 1.0], DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]))
            .unwrap();
        assert_eq!(m.alpha()[0], 0.0);
    }

    #[test]
    fn exponential_ccdf() {
        let m = PhaseTypeModel::exponential(2.0).unwrap();
        assert!((m.ccdf(1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-14);
        assert!((m.pdf(1.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn erlang_ccdf() {
        let m = PhaseTypeModel::erlang(2, 2.0).unwrap();
        let expect = (-2.0f64).exp() * 3.0;
        assert!((m.ccdf(1.0).unwrap() - expect).abs() < 1e-14);
        assert!((m.ccdf(1.0).unwrap() - 0.4060).abs() < 1e-4);
    }

    #[test]
    fn long_horizon_uses_squaring_and_matches_closed_form() {
        let m = PhaseTypeModel::erlang(2, 2.0).unwrap();
        // q x = 2 * 6e4 exceeds the direct limit
        let x = 6e4_f64;
        let v = m.ccdf(x).unwrap();
        assert_eq!(v, 0.0);
        let slow = PhaseTypeModel::new(
            vec![0.5, 0.5],
            DMatrix::from_row_slice(2, 2, &[-1e3, 0.0, 0.0, -1e-3]),
        )
        .unwrap();
        // stiffness ratio 1e6: rounding grows with the number of steps and
        // squarings, so this case is held to 1e-9 relative
        for x in [50.0, 500.0, 5e3] {
            let expect = 0.5 * (-1e-3f64 * x).exp();
            let got = slow.ccdf(x).unwrap(); assert!(((got - expect) / expect).abs() < 1e-9, "x = {x}: {got} vs {expect}");
        }
    }

    #[test]
    fn poisson_weights_cover_mass() {
        for mean in [0.0, 0.3, 5.0, 80.0, 2.5e4] {
            let (_, w) = poisson_weights(mean, POISSON_TAIL_TOL);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "mean {mean}");
        }
        let (start, w) = poisson_weights(3.0, POISSON_TAIL_TOL);
        assert_eq!(start, 0);
        let p3 = 27.0 / 6.0 * (-3.0f64).exp();
        assert!((w[3] - p3).abs() < 1e-13);
    }

    #[test]
    fn moments() {
        let m = PhaseTypeModel::exponential(4.0).unwrap();
        assert!((m.moment(1).unwrap() - 0.25).abs() < 1e-15);
        assert!((m.moment(2).unwrap() - 2.0 / 16.0).abs() < 1e-15);
        let e = PhaseTypeModel::erlang(2, 2.0).unwrap();
        assert!((e.mean().unwrap() - 1.0).abs() < 1e-14);
        assert!((e.cv().unwrap().powi(2) - 0.5).abs() < 1e-14);
        assert!(m.moment(0).is_err());
    }

    #[test]
    fn truncated_moments_exponential() {
        let m = PhaseTypeModel::exponential(1.0).unwrap();
        let w = Window::new(0.0, 3.0).unwrap();
        let m1 = m.truncated_moment(1, w).unwrap();
        assert!((m1 - (1.0 - (-3.0f64).exp())).abs() < 1e-14);
        // 2 * int_0^3 x e^-x = 2 * (1 - 4 e^-3)
        let m2 = m.truncated_moment(2, w).unwrap();
        assert!((m2 - 2.0 * (1.0 - 4.0 * (-3.0f64).exp())).abs() < 1e-13);
        let w = Window::new(1.0, 3.0).unwrap();
        let m1 = m.truncated_moment(1, w).unwrap();
        assert!((m1 - ((-1.0f64).exp() - (-3.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn scaling() {
        let m = PhaseTypeModel::exponential(1.0).unwrap();
        let s = m.scale_to_mean(0.5).unwrap();
        assert!((s.generator()[(0, 0)] + 2.0).abs() < 1e-15);
        let same = m.scale_to_mean(1.0).unwrap();
        assert_eq!(same.generator(), m.generator());
        assert!(m.scale_to_mean(0.0).is_err());
        assert!(m.scale_to_mean(-1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_defective() {
        let m = PhaseTypeModel::erlang(3, 1.0).unwrap();
        assert_eq!(m.sample(7, 100).unwrap(), m.sample(7, 100).unwrap());
        assert_ne!(m.sample(7, 100).unwrap(), m.sample(8, 100).unwrap());
        let d = PhaseTypeModel::new(vec![0.5], DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!(matches!(d.sample(1, 1), Err(Error::Defective { .. })));
    }

    #[test]
    fn domain_errors() {
        let m = PhaseTypeModel::exponential(1.0).unwrap();
        assert!(m.ccdf(-1.0).is_err());
        assert!(m.pdf(-1.0).is_err());
    }
}
