//! Bernstein phase-type (BPH) approximation.
//!
//! Applying the Bernstein-exponential operator to a distribution function
//! yields a PH distribution whose generator is the fixed bidiagonal matrix
//! with rates `1..n`; only the initial vector depends on the target. Phase
//! `j` (0-based) starts a chain through rates `j+1, ..., n`, and its weight is
//! the increment of the distribution function between the nodes
//! `ln(n/(j+1))` and `ln(n/j)` (with `ln(n/0) = inf`).

use log::warn;
use nalgebra::DMatrix;

use crate::constants::{BPH_WEIGHT_TOL, PROB_SUM_TOL};
use crate::error::{Error, Result};
use crate::phase_type::PhaseTypeModel;

/// Initial probabilities of an order-`n` BPH.
#[derive(Debug, Clone, PartialEq)]
pub struct BphComponent {
    weights: Vec<f64>,
    clamped: usize,
}

/// Evaluation nodes `ln(n/i)` for `i = 1..n`.
pub fn nodes(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (n as f64 / i as f64).ln()).collect()
}

/// Fixed BPH sub-generator: diagonal `-1..-n`, superdiagonal `1..n-1`.
pub fn generator(n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -((i + 1) as f64);
        if i + 1 < n {
            a[(i, i + 1)] = (i + 1) as f64;
        }
    }
    a
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("BPH order must be at least 1".into()))
    } else {
        Ok(())
    }
}

impl BphComponent {
    /// Builds from raw increments, clamping `[-BPH_WEIGHT_TOL, 0)` noise.
    fn from_increments(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        let mut clamped = 0;
        for (index, w) in weights.iter_mut().enumerate() {
            if *w < -BPH_WEIGHT_TOL {
                return Err(Error::NonMonotone { index, value: *w });
            }
            if *w < 0.0 {
                *w = 0.0;
                clamped += 1;
            }
        }
        if clamped > 0 {
            let after: f64 = weights.iter().sum();
            if after > 0.0 {
                let scale = total.max(0.0) / after;
                weights.iter_mut().for_each(|w| *w *= scale);
            }
            warn!("clamped {clamped} slightly negative BPH weight(s)");
        }
        Ok(BphComponent { weights, clamped })
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Number of weights that were clamped from tiny negative values.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Values `G(ln(n/i)) - G(inf)` for `i = 1..n` implied by the weights
    /// (cumulative sums), consistent with any clamping that took place.
    pub fn node_values(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    /// Proper PH with `alpha = weights` and the fixed bidiagonal generator.
    /// A residual of at most `PROB_SUM_TOL` is folded into the largest weight.
    pub fn to_phase_type(&self) -> Result<PhaseTypeModel> {
        let total = self.total_weight();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Defective { mass: total });
        }
        let mut alpha = self.weights.clone();
        let largest = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        alpha[largest] += 1.0 - total;
        PhaseTypeModel::new(alpha, generator(self.order()))
    }

    /// CCDF of the component (defective when built from a residual), in
    /// closed Bernstein form.
    pub fn ccdf(&self, x: f64) -> f64 {
        BernsteinBasis::new(self.order()).combine(&self.node_values(), x)
    }
}

/// Weights from a CDF: `[F(inf) - F(ln n), F(ln n) - F(ln n/2), ..., F(ln(n/(n-1))) - F(0)]`.
pub fn build_from_cdf<F: Fn(f64) -> f64>(cdf: F, cdf_at_infinity: f64, n: usize) -> Result<BphComponent> {
    check_order(n)?;
    let values: Vec<f64> = nodes(n).into_iter().map(&cdf).collect();
    let mut weights = Vec::with_capacity(n);
    weights.push(cdf_at_infinity - values[0]);
    for i in 1..n {
        weights.push(values[i - 1] - values[i]);
    }
    BphComponent::from_increments(weights)
}

/// Weights from a CCDF: `[G(ln n) - G(inf), G(ln n/2) - G(ln n), ..., G(0) - G(ln(n/(n-1)))]`.
/// Accepts defective evaluators with `G(0) < 1`.
pub fn build_from_ccdf<F: Fn(f64) -> f64>(ccdf: F, ccdf_at_infinity: f64, n: usize) -> Result<BphComponent> {
    check_order(n)?;
    let values: Vec<f64> = nodes(n).into_iter().map(&ccdf).collect();
    build_from_ccdf_values(&values, ccdf_at_infinity)
}

/// As `build_from_ccdf`, from CCDF values already taken at `nodes(n)`.
pub fn build_from_ccdf_values(values: &[f64], ccdf_at_infinity: f64) -> Result<BphComponent> {
    check_order(values.len())?;
    let mut weights = Vec::with_capacity(values.len());
    weights.push(values[0] - ccdf_at_infinity);
    for i in 1..values.len() {
        weights.push(values[i] - values[i - 1]);
    }
    BphComponent::from_increments(weights)
}

/// Bernstein-exponential basis `C(n,i) e^{-ix} (1-e^{-x})^{n-i}`, evaluated
/// in log space so large orders do not overflow the binomials.
#[derive(Debug, Clone)]
pub struct BernsteinBasis {
    ln_binom: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(n: usize) -> Self {
        let mut ln_binom = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        ln_binom.push(0.0);
        for i in 1..=n {
            acc += ((n - i + 1) as f64).ln() - (i as f64).ln();
            ln_binom.push(acc);
        }
        BernsteinBasis { ln_binom }
    }

    pub fn order(&self) -> usize {
        self.ln_binom.len() - 1
    }

    /// Basis values `C(n,i) e^{-ix} (1-e^{-x})^{n-i}` for `i = 1..n`.
    pub fn values(&self, x: f64) -> Vec<f64> {
        let n = self.order();
        if x <= 0.0 {
            let mut v = vec![0.0; n];
            v[n - 1] = 1.0;
            return v;
        }
        let ln_q = -x;
        let ln_1mq = (-(-x).exp()).ln_1p();
        (1..=n)
            .map(|i| (self.ln_binom[i] + i as f64 * ln_q + (n - i) as f64 * ln_1mq).exp())
            .collect()
    }

    /// `sum_{i=1..n} values[i-1] * C(n,i) e^{-ix} (1-e^{-x})^{n-i}`.
    pub fn combine(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.order());
        self.values(x).iter().zip(values).map(|(b, v)| b * v).sum()
    }
}
