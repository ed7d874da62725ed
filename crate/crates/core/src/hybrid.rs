//! BPH body plus defective hyperexponential tail (BPH_HE).
//!
//! The tail is fitted first; the BPH then approximates the residual
//! `G(x) = F(x) - HE(x)` (both as CCDFs). The assembled generator is block
//! diagonal, so the model CCDF is the Bernstein sum over the residual nodes
//! plus the tail mixture.

use log::warn;
use nalgebra::DMatrix;

use crate::bph::{self, BernsteinBasis, BphComponent};
use crate::constants::RESIDUAL_TOL;
use crate::error::{Error, Result};
use crate::he_fit::{compensated_sum, fit_defective, FitPoints, HyperExp};
use crate::phase_type::PhaseTypeModel;
use crate::target::TargetDistribution;

/// Residual CCDF left after removing a defective tail mixture.
pub struct Residual<'a, F> {
    fbar: F,
    he: &'a HyperExp,
}

/// Wraps `fbar - he`; the mixture must be defective.
pub fn residual_ccdf<F: Fn(f64) -> f64>(fbar: F, he: &HyperExp) -> Result<Residual<'_, F>> {
    if !he.is_defective() {
        return Err(Error::InvalidParameter("residual requires a defective tail mixture".into()));
    }
    Ok(Residual { fbar, he })
}

impl<F: Fn(f64) -> f64> Residual<'_, F> {
    /// Unclamped residual, compensated.
    pub fn raw(&self, x: f64) -> f64 {
        compensated_sum(
            std::iter::once((self.fbar)(x)).chain(
                self.he
                    .weights()
                    .iter()
                    .zip(self.he.rates())
                    .map(|(p, l)| -p * (-l * x).exp()),
            ),
        )
    }

    /// Residual clamped at zero; dips below `-RESIDUAL_TOL` are errors.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let g = self.raw(x);
        if g < -RESIDUAL_TOL {
            return Err(Error::NegativeResidual { x, value: g });
        }
        Ok(g.max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    bph: BphComponent,
    he: HyperExp,
    points: Option<FitPoints>,
    assembled: PhaseTypeModel,
    basis: BernsteinBasis,
    node_values: Vec<f64>,
    clamped_nodes: usize,
}

/// Block-diagonal assembly: `alpha = [bph | p]`, `A = diag(A_bph, -lambda)`.
pub fn assemble(bph: &BphComponent, he: &HyperExp) -> Result<PhaseTypeModel> {
    let n = bph.order();
    let k = he.terms();
    let mut a = DMatrix::zeros(n + k, n + k);
    a.view_mut((0, 0), (n, n)).copy_from(&bph::generator(n));
    for (j, l) in he.rates().iter().enumerate() {
        a[(n + j, n + j)] = -l;
    }
    let alpha: Vec<f64> = bph.weights().iter().chain(he.weights()).copied().collect();
    PhaseTypeModel::new(alpha, a)
}

/// Fits the tail on `points` (2k of them; none gives a pure BPH) and the
/// body on the residual.
pub fn build_hybrid_with<F: Fn(f64) -> f64>(fbar: F, n: usize, points: Option<&FitPoints>) -> Result<HybridModel> {
    let he = match points {
        Some(p) if !p.is_empty() => fit_defective(&fbar, p)?,
        _ => HyperExp::empty(),
    };
    let residual = residual_ccdf(&fbar, &he)?;
    let mut clamped_nodes = 0;
    let values = bph::nodes(n)
        .into_iter()
        .map(|x| {
            if residual.raw(x) < 0.0 {
                clamped_nodes += 1;
            }
            residual.eval(x)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bph = bph::build_from_ccdf_values(&values, 0.0)?;
    if clamped_nodes > 0 {
        warn!("clamped the residual CCDF to zero at {clamped_nodes} node(s)");
    }
    let assembled = assemble(&bph, &he)?;
    let node_values = bph.node_values();
    Ok(HybridModel {
        basis: BernsteinBasis::new(n),
        node_values,
        bph,
        he,
        points: points.filter(|p| !p.is_empty()).cloned(),
        assembled,
        clamped_nodes,
    })
}

/// `build_hybrid_with` on a target, checking that `points` holds `2k` values.
pub fn build_hybrid(target: &TargetDistribution, k: usize, n: usize, points: &FitPoints) -> Result<HybridModel> {
    if points.len() != 2 * k {
        return Err(Error::InvalidParameter(format!(
            "{k} tail terms need {} fit points, got {}",
            2 * k,
            points.len()
        )));
    }
    build_hybrid_with(|x| target.sf(x), n, Some(points))
}

/// Closed-form CCDF: Bernstein sum over the residual nodes plus the tail.
pub fn hybrid_ccdf(h: &HybridModel, x: f64) -> f64 {
    h.basis.combine(&h.node_values, x) + h.he.ccdf(x)
}

impl HybridModel {
    pub fn ccdf(&self, x: f64) -> f64 {
        hybrid_ccdf(self, x)
    }

    pub fn bph(&self) -> &BphComponent {
        &self.bph
    }

    pub fn he(&self) -> &HyperExp {
        &self.he
    }

    pub fn points(&self) -> Option<&FitPoints> {
        self.points.as_ref()
    }

    pub fn assembled(&self) -> &PhaseTypeModel {
        &self.assembled
    }

    pub fn into_assembled(self) -> PhaseTypeModel {
        self.assembled
    }

    /// Nodes at which the residual was clamped from a small negative value.
    pub fn clamped_nodes(&self) -> usize {
        self.clamped_nodes
    }
}
