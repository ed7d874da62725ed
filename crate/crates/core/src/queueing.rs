//! M/G/1 and M/PH/1 performance measures.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::{R_ITERATION_MAX_SWEEPS, R_ITERATION_TOL};
use crate::error::{Error, Result};
use crate::phase_type::PhaseTypeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMetrics {
    pub lambda: f64,
    pub rho: f64,
    #[serde(rename = "E_S")]
    pub e_s: f64,
    #[serde(rename = "E_W")]
    pub e_w: f64,
    #[serde(rename = "E_T")]
    pub e_t: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    #[serde(rename = "E_Nq")]
    pub e_nq: f64,
}

fn check_stable(lambda: f64, m1: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("arrival rate {lambda} must be positive")));
    }
    let rho = lambda * m1;
    if !(rho < 1.0) {
        return Err(Error::Unstable { rho });
    }
    Ok(rho)
}

/// Pollaczek–Khinchine mean waiting time plus Little's law.
pub fn pk_metrics(lambda: f64, m1: f64, m2: f64) -> Result<QueueMetrics> {
    if !(m1 > 0.0 && m2 > 0.0 && m1.is_finite() && m2.is_finite()) {
        return Err(Error::InvalidParameter(format!("service moments ({m1}, {m2}) must be positive")));
    }
    let rho = check_stable(lambda, m1)?;
    let e_w = lambda * m2 / (2.0 * (1.0 - rho));
    let e_t = e_w + m1;
    Ok(QueueMetrics { lambda, rho, e_s: m1, e_w, e_t, e_n: lambda * e_t, e_nq: lambda * e_w })
}

fn require_proper(service: &PhaseTypeModel) -> Result<()> {
    if service.is_proper() {
        Ok(())
    } else {
        Err(Error::Defective { mass: service.mass() })
    }
}

pub fn mph1_metrics(lambda: f64, service: &PhaseTypeModel) -> Result<QueueMetrics> {
    require_proper(service)?;
    pk_metrics(lambda, service.moment(1)?, service.moment(2)?)
}

fn lu_solve_left(row: &DVector<f64>, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    // x m = row  <=>  m^T x^T = row^T
    m.transpose()
        .lu()
        .solve(row)
        .ok_or_else(|| Error::Internal("singular matrix in row solve".into()))
}

/// Stationary waiting time as a defective PH: atom `1 - rho` at zero and
/// `(rho beta, A + rho s beta)` with the equilibrium vector `beta = alpha (-A)^-1 / m1`.
pub fn waiting_time_distribution(lambda: f64, service: &PhaseTypeModel) -> Result<PhaseTypeModel> {
    require_proper(service)?;
    let m1 = service.moment(1)?;
    let rho = check_stable(lambda, m1)?;
    let a = service.generator();
    let alpha = DVector::from_column_slice(service.alpha());
    let beta = lu_solve_left(&alpha, &(-a))? / m1;
    let s = DVector::from_column_slice(service.exit_rates());
    let generator = a + rho * &s * beta.transpose();
    let start: Vec<f64> = beta.iter().map(|b| rho * b).collect();
    PhaseTypeModel::new(start, generator)
}

/// `P(W > x)`.
pub fn waiting_time_ccdf(lambda: f64, service: &PhaseTypeModel, x: f64) -> Result<f64> {
    waiting_time_distribution(lambda, service)?.ccdf(x)
}

/// Number-in-system distribution from the QBD solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueLengthDist {
    /// `P(N = n)` for `n = 0..=n_max`.
    pub probabilities: Vec<f64>,
    /// `P(N > n_max)`.
    pub tail_mass: f64,
    /// `E[N]` including the geometric tail beyond `n_max`.
    pub mean: f64,
    pub spectral_radius: f64,
    /// Max-norm of `A0 + R A1 + R^2 A2` at the returned `R`.
    pub r_residual: f64,
    pub sweeps: usize,
}

fn qbd_blocks(lambda: f64, service: &PhaseTypeModel) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = service.order();
    let a = service.generator();
    let a0 = DMatrix::identity(n, n) * lambda;
    let a1 = a - DMatrix::identity(n, n) * lambda;
    let s = DVector::from_column_slice(service.exit_rates());
    let alpha = DVector::from_column_slice(service.alpha());
    let a2 = &s * alpha.transpose();
    (a0, a1, a2)
}

fn r_residual(r: &DMatrix<f64>, a0: &DMatrix<f64>, a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> f64 {
    (a0 + r * a1 + r * r * a2).amax()
}

/// Fixed-point sweeps `R <- -(A0 + R^2 A2) A1^-1` from `start`.
pub fn iterate_rate_matrix(
    lambda: f64,
    service: &PhaseTypeModel,
    start: Option<DMatrix<f64>>,
    max_sweeps: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let (a0, a1, a2) = qbd_blocks(lambda, service);
    let n = service.order();
    let a1_inv = a1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular local block".into()))?;
    let mut r = start.unwrap_or_else(|| DMatrix::zeros(n, n));
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let next = -(&a0 + &r * &r * &a2) * &a1_inv;
        change = (&next - &r).amax();
        r = next;
        if change < R_ITERATION_TOL {
            return Ok((r, sweep));
        }
    }
    Err(Error::NonConvergence { what: "rate matrix iteration", iterations: max_sweeps, residual: change })
}

/// Explicit M/PH/1 rate matrix `lambda (lambda I - lambda 1 alpha - A)^-1`.
pub fn rate_matrix(lambda: f64, service: &PhaseTypeModel) -> Result<DMatrix<f64>> {
    let n = service.order();
    let alpha = DVector::from_column_slice(service.alpha());
    let ones = DVector::from_element(n, 1.0);
    let m = DMatrix::identity(n, n) * lambda - lambda * &ones * alpha.transpose() - service.generator();
    m.try_inverse()
        .map(|inv| inv * lambda)
        .ok_or_else(|| Error::Internal("singular matrix in rate-matrix solve".into()))
}

fn spectral_radius(r: &DMatrix<f64>) -> f64 {
    r.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `P(N = n)` for `n = 0..=n_max`, with level = jobs in system and phase =
/// service phase of the job in service.
pub fn queue_length_dist(lambda: f64, service: &PhaseTypeModel, n_max: usize) -> Result<QueueLengthDist> {
    require_proper(service)?;
    let rho = check_stable(lambda, service.moment(1)?)?;
    let (a0, a1, a2) = qbd_blocks(lambda, service);
    let explicit = rate_matrix(lambda, service)?;
    // polish the explicit solution with the defining fixed point
    let (r, sweeps) = iterate_rate_matrix(lambda, service, Some(explicit), R_ITERATION_MAX_SWEEPS)?;
    let residual = r_residual(&r, &a0, &a1, &a2);
    let radius = spectral_radius(&r);
    if !(radius < 1.0) {
        return Err(Error::Internal(format!("rate matrix spectral radius {radius} >= 1")));
    }
    let n = service.order();
    let p0 = 1.0 - rho;
    let alpha = DVector::from_column_slice(service.alpha());
    let boundary = &a1 + &r * &a2;
    let pi1 = -lu_solve_left(&(alpha * (p0 * lambda)), &boundary)?;
    let ones = DVector::from_element(n, 1.0);
    let i_minus_r = DMatrix::identity(n, n) - &r;
    let lu = i_minus_r.transpose().lu();
    let solve = |v: &DVector<f64>| lu.solve(v).ok_or_else(|| Error::Internal("I - R is singular".into()));

    let mut probabilities = Vec::with_capacity(n_max + 1);
    probabilities.push(p0);
    let mut level = pi1.clone();
    for _ in 1..=n_max {
        probabilities.push(level.sum().max(0.0));
        level = r.transpose() * level;
    }
    // level now holds pi_{n_max + 1}
    let tail_mass = if n_max == 0 { solve(&pi1)?.dot(&ones) } else { solve(&level)?.dot(&ones) };
    let once = solve(&pi1)?;
    let mean = solve(&once)?.dot(&ones);
    Ok(QueueLengthDist { probabilities, tail_mass: tail_mass.max(0.0), mean, spectral_radius: radius, r_residual: residual, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm1_and_md1() {
        let m = pk_metrics(0.5, 1.0, 2.0).unwrap();
        assert!((m.e_w - 1.0).abs() < 1e-15 && (m.e_n - 1.0).abs() < 1e-15);
        let d = pk_metrics(0.5, 1.0, 1.0).unwrap();
        assert!((d.e_w - 0.5).abs() < 1e-15);
        let e = mph1_metrics(0.5, &PhaseTypeModel::exponential(1.0).unwrap()).unwrap();
        assert!((e.e_w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pareto_row() {
        let m = pk_metrics(0.5, 1.0 / 2.1, 2.0 / (2.1 * 1.1)).unwrap();
        for (got, want) in [
            (m.rho, 0.238095),
            (m.e_s, 0.476190),
            (m.e_w, 0.284091),
            (m.e_t, 0.760281),
            (m.e_n, 0.380141),
            (m.e_nq, 0.142045),
        ] {
            assert!((got / want - 1.0).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn instability_rejected() {
        assert!(matches!(pk_metrics(2.5, 0.5, 1.0), Err(Error::Unstable { .. })));
        assert!(matches!(pk_metrics(1.0, 1.0, 2.0), Err(Error::Unstable { .. })));
        assert!(pk_metrics(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn mm1_waiting_time() {
        let s = PhaseTypeModel::exponential(1.0).unwrap();
        assert!((waiting_time_ccdf(0.5, &s, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let w = waiting_time_ccdf(0.5, &s, 2.0).unwrap();
        assert!((w - 0.5 * (-1.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn mm1_queue_length_is_geometric() {
        let s = PhaseTypeModel::exponential(1.0).unwrap();
        let q = queue_length_dist(0.5, &s, 20).unwrap();
        for (n, p) in q.probabilities.iter().enumerate() {
            assert!((p - 0.5f64.powi(n as i32 + 1)).abs() < 1e-10);
        }
        assert!((q.tail_mass - 0.5f64.powi(21)).abs() < 1e-12);
        assert!((q.mean - 1.0).abs() < 1e-12);
        assert!((q.spectral_radius - 0.5).abs() < 1e-12);
    }

    #[test]
    fn explicit_rate_matrix_matches_iteration() {
        let s = PhaseTypeModel::erlang(3, 4.0).unwrap();
        let explicit = rate_matrix(0.9, &s).unwrap();
        let (iterated, _) = iterate_rate_matrix(0.9, &s, None, R_ITERATION_MAX_SWEEPS).unwrap();
        assert!((explicit - iterated).amax() < 1e-11);
    }
}
