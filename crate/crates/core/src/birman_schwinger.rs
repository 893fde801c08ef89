//! The family I + V R0(lambda^2 +- i0): dense and local Neumann inverses, high-energy scans.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::DenseOperator;
use crate::linalg;
use crate::potentials::PotentialSpec;
use crate::resolvent::{build_b, build_r0, Branch, ResolventSpec};
use crate::C64;

pub const COND_MAX: f64 = 1e12;
pub const NEUMANN_SAFE: f64 = 0.25;

pub fn build_bs(v: &PotentialSpec, spec: ResolventSpec) -> Result<DenseOperator> {
    let r0 = build_r0(v.grid(), spec);
    DenseOperator::identity(v.grid()).add(&v.operator.compose(&r0)?)
}

/// I + R0 V, the other factor of the resolvent identity.
pub fn build_bs_right(v: &PotentialSpec, spec: ResolventSpec) -> Result<DenseOperator> {
    let r0 = build_r0(v.grid(), spec);
    DenseOperator::identity(v.grid()).add(&r0.compose(&v.operator)?)
}

#[derive(Debug, Clone)]
pub struct InverseReport {
    pub inverse: DenseOperator,
    /// ||A||_{1->1} ||A^{-1}||_{1->1}
    pub cond: f64,
    pub residual: f64,
}

pub fn direct_inverse(a: &DenseOperator) -> Result<InverseReport> {
    direct_inverse_with(a, COND_MAX)
}

pub fn direct_inverse_with(a: &DenseOperator, cond_max: f64) -> Result<InverseReport> {
    let inv = match linalg::inverse(a.balanced()) {
        Ok(m) => m,
        Err(_) => return Err(Error::NearSingular { cond: f64::INFINITY, lambda: None }),
    };
    let inverse = DenseOperator::from_balanced(&a.grid, inv)?;
    let cond = a.operator_l1_norm() * inverse.operator_l1_norm();
    if !(cond <= cond_max) {
        return Err(Error::NearSingular { cond, lambda: None });
    }
    let residual = a.compose(&inverse)?.sub(&DenseOperator::identity(&a.grid))?.operator_l1_norm();
    Ok(InverseReport { inverse, cond, residual })
}

fn at_lambda(e: Error, lambda: f64) -> Error {
    match e {
        Error::NearSingular { cond, .. } => Error::NearSingular { cond, lambda: Some(lambda) },
        other => other,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HighEnergyReport {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    /// smallest scanned lambda with ||(V R0)^2|| below the Neumann-safe threshold
    pub lambda1: Option<f64>,
}

/// lambda -> ||(V R0+(lambda^2))^2||_{1->1}.
pub fn high_energy_norm_scan(v: &PotentialSpec, lambdas: &[f64]) -> Result<HighEnergyReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda list".into()));
    }
    let mut norms = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let vr = v.operator.compose(&build_r0(v.grid(), ResolventSpec::plus(l)))?;
        norms.push(vr.compose(&vr)?.operator_l1_norm());
    }
    let lambda1 = lambdas.iter().zip(&norms).find(|(_, n)| **n < NEUMANN_SAFE).map(|(l, _)| *l);
    Ok(HighEnergyReport { lambdas: lambdas.to_vec(), norms, lambda1 })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformInverseReport {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub conds: Vec<f64>,
    pub sup: f64,
    pub argmax: f64,
}

/// Induced L1 norms of (I + V R0+(lambda^2))^{-1} over a lambda grid.
pub fn uniform_inverse_scan(v: &PotentialSpec, lambdas: &[f64]) -> Result<UniformInverseReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda list".into()));
    }
    let (mut norms, mut conds) = (Vec::new(), Vec::new());
    for &l in lambdas {
        let rep = direct_inverse(&build_bs(v, ResolventSpec::plus(l))?).map_err(|e| at_lambda(e, l))?;
        norms.push(rep.inverse.operator_l1_norm());
        conds.push(rep.cond);
    }
    let (k, sup) = norms.iter().enumerate().fold((0, f64::MIN), |b, (k, &n)| if n > b.1 { (k, n) } else { b });
    Ok(UniformInverseReport { lambdas: lambdas.to_vec(), argmax: lambdas[k], norms, conds, sup })
}

#[derive(Debug, Clone)]
pub struct NeumannReport {
    pub inverse: DenseOperator,
    /// ||S0 V B_{lambda0}(lambda^2)||_{1->1}
    pub contraction: f64,
    pub terms: usize,
}

pub const MAX_TERMS: usize = 200;

/// (I + V R0+(lambda^2))^{-1} = sum_m (-S0 V B chi)^m S0 with S0 = (I + V R0+(lambda0^2))^{-1}.
pub fn local_neumann_inverse(v: &PotentialSpec, lambda0: f64, r: f64, lambda: f64) -> Result<NeumannReport> {
    if !(r > 0.0) || (lambda - lambda0).abs() > r {
        return Err(Error::InvalidArgument(format!("|lambda - lambda0| must not exceed r = {r}")));
    }
    let grid = v.grid();
    let s0 = direct_inverse(&build_bs(v, ResolventSpec::plus(lambda0))?).map_err(|e| at_lambda(e, lambda0))?.inverse;
    let chi = crate::cutoff::chi((lambda - lambda0) / r);
    let b = build_b(grid, lambda0, lambda, Branch::Plus).scale(C64::new(chi, 0.0));
    let t = s0.compose(&v.operator.compose(&b)?)?;
    let contraction = t.operator_l1_norm();
    if contraction >= 1.0 {
        return Err(Error::NoContraction(contraction));
    }
    let neg_t = t.scale(C64::new(-1.0, 0.0));
    let scale = s0.operator_l1_norm();
    let mut term = s0.clone();
    let mut sum = s0.clone();
    let mut terms = 1;
    while terms < MAX_TERMS && term.operator_l1_norm() > 1e-12 * scale {
        term = neg_t.compose(&term)?;
        sum = sum.add(&term)?;
        terms += 1;
    }
    Ok(NeumannReport { inverse: sum, contraction, terms })
}

/// Contraction factor ||S0 V B_{lambda0}((lambda0 + r)^2)|| at the window edge.
pub fn contraction_at_edge(v: &PotentialSpec, lambda0: f64, r: f64) -> Result<f64> {
    let s0 = direct_inverse(&build_bs(v, ResolventSpec::plus(lambda0))?)?.inverse;
    let b = build_b(v.grid(), lambda0, lambda0 + r, Branch::Plus);
    Ok(s0.compose(&v.operator.compose(&b)?)?.operator_l1_norm())
}
