//! Recursive hyperexponential tail fitting (Feldmann–Whitt).
//!
//! Points are handled in descending order. Each pair of points fixes one
//! exponential term by a two-point exact solve on the residual CCDF left by
//! the previously fitted (farther-tail) terms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{PROB_SUM_TOL, RAW_WEIGHT_CAP};
use crate::error::{Error, InvalidReason, Result};
use crate::phase_type::PhaseTypeModel;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Fitting points, kept in strictly descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FitPoints {
    points: Vec<f64>,
}

impl FitPoints {
    /// Accepts points in any order; they must be finite, positive and distinct.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if let Some(bad) = points.iter().find(|x| !x.is_finite() || **x <= 0.0) {
            return Err(Error::InvalidParameter(format!("fit point {bad} is not a positive finite number")));
        }
        points.sort_by(|a, b| b.total_cmp(a));
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate fit point {}", w[0])));
        }
        Ok(FitPoints { points })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ascending copy, the order the CLI and reports use.
    pub fn ascending(&self) -> Vec<f64> {
        self.points.iter().rev().copied().collect()
    }
}

impl TryFrom<Vec<f64>> for FitPoints {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FitPoints::new(v)
    }
}

impl From<FitPoints> for Vec<f64> {
    fn from(p: FitPoints) -> Self {
        p.ascending()
    }
}

/// Mixture of exponentials `sum p_i e^{-lambda_i x}`, terms in fit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperExp {
    p: Vec<f64>,
    lambda: Vec<f64>,
    defective: bool,
}

impl HyperExp {
    /// Validates and wraps fitted parameters.
    pub fn new(p: Vec<f64>, lambda: Vec<f64>, defective: bool) -> Result<Self> {
        if p.len() != lambda.len() {
            return Err(Error::InvalidParameter("weight and rate vectors differ in length".into()));
        }
        for (i, (&pi, &li)) in p.iter().zip(&lambda).enumerate() {
            let upper_ok = if defective || p.len() > 1 { pi < 1.0 } else { pi <= 1.0 };
            if !(pi > 0.0 && upper_ok) {
                return Err(invalid(i + 1, InvalidReason::WeightOutOfRange { p: pi }));
            }
            if !(li > 0.0 && li.is_finite()) {
                return Err(invalid(i + 1, InvalidReason::NonPositiveRate { lambda: li }));
            }
        }
        let sum: f64 = p.iter().sum();
        if defective && sum >= 1.0 {
            return Err(invalid(p.len(), InvalidReason::NotDefective { sum }));
        }
        if !defective && (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!("complete weights sum to {sum}")));
        }
        Ok(HyperExp { p, lambda, defective })
    }

    /// The empty defective mixture (no tail terms).
    pub fn empty() -> Self {
        HyperExp { p: Vec::new(), lambda: Vec::new(), defective: true }
    }

    pub fn terms(&self) -> usize {
        self.p.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn rates(&self) -> &[f64] {
        &self.lambda
    }

    pub fn is_defective(&self) -> bool {
        self.defective
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.p.iter().copied())
    }

    pub fn ccdf(&self, x: f64) -> f64 {
        he_ccdf(self, x)
    }

    /// Proper PH with diagonal generator; only for complete mixtures.
    pub fn to_phase_type(&self) -> Result<PhaseTypeModel> {
        if self.defective {
            return Err(Error::Defective { mass: self.total_weight() });
        }
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.lambda.len(),
            self.lambda.iter().map(|l| -l),
        ));
        PhaseTypeModel::new(self.p.clone(), a)
    }
}

/// `sum p_i e^{-lambda_i x}`.
pub fn he_ccdf(he: &HyperExp, x: f64) -> f64 {
    compensated_sum(he.p.iter().zip(&he.lambda).map(|(p, l)| p * (-l * x).exp()))
}

fn invalid(stage: usize, reason: InvalidReason) -> Error {
    Error::InvalidModel { stage, reason }
}

/// One term as produced by the recursion, before any validity check. A
/// term whose residual was not positive has `lambda = NaN` and
/// `p = min(r(x_hi), r(x_lo))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawTerm {
    pub p: f64,
    pub lambda: f64,
}

/// Unchecked outcome of the defective recursion.
#[derive(Debug, Clone)]
pub struct RawFit {
    pub terms: Vec<RawTerm>,
    /// First violation met, if any.
    pub failure: Option<(usize, InvalidReason)>,
}

impl RawFit {
    /// Mixture CCDF of the raw terms; unidentified terms are skipped and
    /// negative rates are clamped to zero so the value stays bounded.
    pub fn mixture_ccdf(&self, x: f64) -> f64 {
        compensated_sum(
            self.terms
                .iter()
                .filter(|t| t.lambda.is_finite())
                .map(|t| t.p * (-t.lambda.max(0.0) * x).exp()),
        )
    }

    pub fn into_result(self) -> Result<HyperExp> {
        if let Some((stage, reason)) = self.failure {
            return Err(invalid(stage, reason));
        }
        let (p, lambda) = self.terms.iter().map(|t| (t.p, t.lambda)).unzip();
        HyperExp::new(p, lambda, true)
    }
}

fn residual<F: Fn(f64) -> f64>(fbar: &F, terms: &[RawTerm], x: f64) -> f64 {
    compensated_sum(
        std::iter::once(fbar(x)).chain(
            terms
                .iter()
                .filter(|t| t.lambda.is_finite())
                .map(|t| -t.p * (-t.lambda * x).exp()),
        ),
    )
}

fn check_term(stage: usize, t: RawTerm, failure: &mut Option<(usize, InvalidReason)>) {
    if failure.is_some() {
        return;
    }
    if !(t.lambda > 0.0) {
        *failure = Some((stage, InvalidReason::NonPositiveRate { lambda: t.lambda }));
    } else if !(t.p > 0.0 && t.p < 1.0) {
        *failure = Some((stage, InvalidReason::WeightOutOfRange { p: t.p }));
    }
}

/// Solves the pairs `(x_1, x_2), (x_3, x_4), ...` in order and records the
/// first violation without stopping.
fn solve_pairs<F: Fn(f64) -> f64>(fbar: &F, points: &[f64], terms: &mut Vec<RawTerm>, failure: &mut Option<(usize, InvalidReason)>) {
    for pair in points.chunks_exact(2) {
        let stage = terms.len() + 1;
        let (hi, lo) = (pair[0], pair[1]);
        let r_hi = residual(fbar, terms, hi);
        let r_lo = residual(fbar, terms, lo);
        if !(r_hi > 0.0 && r_lo > 0.0) {
            let (x, value) = if r_hi <= 0.0 || r_hi.is_nan() { (hi, r_hi) } else { (lo, r_lo) };
            if failure.is_none() {
                *failure = Some((stage, InvalidReason::NonPositiveResidual { x, value }));
            }
            terms.push(RawTerm { p: r_hi.min(r_lo), lambda: f64::NAN });
            continue;
        }
        let lambda = (r_lo / r_hi).ln() / (hi - lo);
        let p = (r_hi * (lambda * hi).exp()).min(RAW_WEIGHT_CAP);
        let term = RawTerm { p, lambda };
        check_term(stage, term, failure);
        terms.push(term);
    }
}

/// Defective recursion on `2k` points without validity enforcement.
pub fn fit_defective_raw<F: Fn(f64) -> f64>(fbar: F, points: &FitPoints) -> Result<RawFit> {
    if !points.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "defective fit needs an even number of points, got {}",
            points.len()
        )));
    }
    let mut terms = Vec::with_capacity(points.len() / 2);
    let mut failure = None;
    solve_pairs(&fbar, points.as_slice(), &mut terms, &mut failure);
    if failure.is_none() {
        let sum = compensated_sum(terms.iter().map(|t| t.p));
        if sum >= 1.0 {
            failure = Some((terms.len(), InvalidReason::NotDefective { sum }));
        }
    }
    Ok(RawFit { terms, failure })
}

/// Defective fit interpolating `fbar` at all `2k` points.
pub fn fit_defective<F: Fn(f64) -> f64>(fbar: F, points: &FitPoints) -> Result<HyperExp> {
    fit_defective_raw(fbar, points)?.into_result()
}

/// Complete fit on `2k - 1` points: `k - 1` pairs, then a closing term whose
/// weight makes the mixture proper.
pub fn fit_complete<F: Fn(f64) -> f64>(fbar: F, points: &FitPoints) -> Result<HyperExp> {
    if points.len() % 2 != 1 {
        return Err(Error::InvalidParameter(format!(
            "complete fit needs an odd number of points, got {}",
            points.len()
        )));
    }
    let pts = points.as_slice();
    let (pairs, last) = pts.split_at(pts.len() - 1);
    let mut terms = Vec::with_capacity(pts.len() / 2 + 1);
    let mut failure = None;
    solve_pairs(&fbar, pairs, &mut terms, &mut failure);
    if let Some((stage, reason)) = failure {
        return Err(invalid(stage, reason));
    }
    let stage = terms.len() + 1;
    let x = last[0];
    let p_k = 1.0 - compensated_sum(terms.iter().map(|t| t.p));
    let r = residual(&fbar, &terms, x);
    if !(r > 0.0) {
        return Err(invalid(stage, InvalidReason::NonPositiveResidual { x, value: r }));
    }
    if !(p_k > 0.0 && p_k <= 1.0) {
        return Err(invalid(stage, InvalidReason::WeightOutOfRange { p: p_k }));
    }
    let lambda = (p_k / r).ln() / x;
    if !(lambda > 0.0) {
        return Err(invalid(stage, InvalidReason::NonPositiveRate { lambda }));
    }
    terms.push(RawTerm { p: p_k, lambda });
    let (p, lambda) = terms.iter().map(|t| (t.p, t.lambda)).unzip();
    HyperExp::new(p, lambda, false)
}
