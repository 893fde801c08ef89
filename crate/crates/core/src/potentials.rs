//! Potentials: sampled functions (acting by multiplication) or general finite-rank
//! perturbations, plus the builtin families used by scenarios and tests.

use std::sync::Arc;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evolution::free_hamiltonian;
use crate::grid::{DenseOperator, Grid, GridFunction};
use crate::C64;

pub const DEFAULT_P: f64 = 1.4;
pub const DEFAULT_Q: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub name: String,
    /// nodal values when the perturbation is multiplication by a function
    pub values: Option<GridFunction>,
    pub operator: DenseOperator,
    pub p: f64,
    pub q: f64,
    pub composite_norm: f64,
    /// a known zero-energy eigenfunction, when the family provides one
    pub eigenfunction: Option<GridFunction>,
}

impl PotentialSpec {
    pub fn from_function(name: &str, values: GridFunction) -> Result<Self> {
        Self::with_exponents(name, values, DEFAULT_P, DEFAULT_Q)
    }

    pub fn with_exponents(name: &str, values: GridFunction, p: f64, q: f64) -> Result<Self> {
        if !(p >= 1.0 && p < 1.5 && q > 1.5) {
            return Err(Error::InvalidArgument(format!("need 1 <= p < 3/2 < q, got p={p}, q={q}")));
        }
        let composite_norm = values.lp_norm(p)?.max(values.lp_norm(q)?);
        Ok(Self {
            name: name.to_string(),
            operator: DenseOperator::diagonal(&values),
            values: Some(values),
            p,
            q,
            composite_norm,
            eigenfunction: None,
        })
    }

    /// A nonlocal perturbation; its size is measured by the induced L1 norm.
    pub fn from_operator(name: &str, operator: DenseOperator) -> Self {
        Self {
            name: name.to_string(),
            composite_norm: operator.operator_l1_norm(),
            values: None,
            operator,
            p: DEFAULT_P,
            q: DEFAULT_Q,
            eigenfunction: None,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.operator.grid
    }

    pub fn recomputed_norm(&self) -> Result<f64> {
        match &self.values {
            Some(v) => Ok(v.lp_norm(self.p)?.max(v.lp_norm(self.q)?)),
            None => Ok(self.operator.operator_l1_norm()),
        }
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        let mut out = match &self.values {
            Some(v) => Self::with_exponents(&self.name, v.scale(C64::new(a, 0.0)), self.p, self.q)?,
            None => Self::from_operator(&self.name, self.operator.scale(C64::new(a, 0.0))),
        };
        out.name = format!("{}*{a}", self.name);
        Ok(out)
    }

    pub fn conj(&self) -> Result<Self> {
        let mut out = match &self.values {
            Some(v) => Self::with_exponents(&self.name, v.conj(), self.p, self.q)?,
            None => Self::from_operator(&self.name, self.operator.conj()),
        };
        out.eigenfunction = self.eigenfunction.as_ref().map(|e| e.conj());
        Ok(out)
    }

    pub fn is_hermitian(&self) -> bool {
        match &self.values {
            Some(v) => v.values.iter().all(|z| z.im == 0.0),
            None => {
                let s = self.operator.balanced();
                let n = s.nrows();
                (0..n).all(|i| (0..n).all(|j| (s[(i, j)] - s[(j, i)].conj()).norm() == 0.0))
            }
        }
    }
}

fn param(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {key} must be a number"))),
    }
}

pub fn psi_s(grid: &Arc<Grid>, s: f64) -> GridFunction {
    GridFunction::from_real_radial(grid, |r| (1.0 + r * r).powf(-s))
}

/// V = -(H0 psi_s) / psi_s for the discrete free Hamiltonian, so psi_s is an exact discrete
/// zero mode of H0 + V.
pub fn exact_eigen(grid: &Arc<Grid>, s: f64) -> Result<PotentialSpec> {
    if s < 2.0 {
        return Err(Error::InvalidArgument(format!("exact_eigen needs s >= 2, got {s}")));
    }
    let psi = psi_s(grid, s);
    let h0psi = free_hamiltonian(grid).apply(&psi)?;
    let v = GridFunction::new(
        grid,
        h0psi.values.iter().zip(&psi.values).map(|(a, b)| -a / b).collect(),
    )?;
    let mut spec = PotentialSpec::from_function(&format!("exact_eigen(s={s})"), v)?;
    spec.eigenfunction = Some(psi);
    Ok(spec)
}

/// V = -(H0 psi)/psi for psi = (1 + r^2)^{-1/2}: a zero-energy resonance with a 1/r tail,
/// V ~ -3/(1 + r^2)^2.
pub fn zero_resonance(grid: &Arc<Grid>) -> Result<PotentialSpec> {
    let psi = psi_s(grid, 0.5);
    let h0psi = free_hamiltonian(grid).apply(&psi)?;
    let v = GridFunction::new(
        grid,
        h0psi.values.iter().zip(&psi.values).map(|(a, b)| -a / b).collect(),
    )?;
    PotentialSpec::from_function("zero_resonance", v)
}

pub fn gaussian_well(grid: &Arc<Grid>, depth: f64, width: f64) -> Result<PotentialSpec> {
    let v = GridFunction::from_real_radial(grid, |r| -depth * (-(r / width).powi(2)).exp());
    PotentialSpec::from_function(&format!("gaussian_well(depth={depth},width={width})"), v)
}

/// (-depth + i gamma) exp(-(r/width)^2): a well with gain, one complex bound state for
/// moderate parameters.
pub fn complex_well(grid: &Arc<Grid>, depth: f64, gamma: f64, width: f64) -> Result<PotentialSpec> {
    let v = GridFunction::from_radial(grid, |r| C64::new(-depth, gamma) * (-(r / width).powi(2)).exp());
    PotentialSpec::from_function(&format!("complex_well(depth={depth},gamma={gamma},width={width})"), v)
}

/// base + i gamma exp(-r^2).
pub fn complex_perturbed(base: &PotentialSpec, gamma: f64) -> Result<PotentialSpec> {
    let vals = base
        .values
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("complex_perturbed needs a multiplicative base".into()))?;
    let bump = GridFunction::from_radial(&vals.grid, |r| C64::new(0.0, gamma * (-r * r).exp()));
    PotentialSpec::with_exponents(&format!("{}+i{gamma}bump", base.name), vals.add(&bump)?, base.p, base.q)
}

pub fn builtin_potential(name: &str, params: &Map<String, Value>, grid: &Arc<Grid>) -> Result<PotentialSpec> {
    match name {
        "zero" => PotentialSpec::from_function("zero", GridFunction::zeros(grid)),
        "exact_eigen" => exact_eigen(grid, param(params, "s", 2.0)?),
        "zero_resonance" => zero_resonance(grid),
        "gaussian_well" => gaussian_well(grid, param(params, "depth", 1.0)?, param(params, "width", 1.0)?),
        "complex_well" => complex_well(
            grid,
            param(params, "depth", 6.0)?,
            param(params, "gamma", 1.5)?,
            param(params, "width", 1.0)?,
        ),
        "complex_perturbed" => {
            let base_name = params.get("base").and_then(|v| v.as_str()).unwrap_or("gaussian_well");
            let base_params = params.get("base_params").and_then(|v| v.as_object()).cloned().unwrap_or_default();
            if base_name == "complex_perturbed" {
                return Err(Error::InvalidArgument("complex_perturbed cannot wrap itself".into()));
            }
            let base = builtin_potential(base_name, &base_params, grid)?;
            complex_perturbed(&base, param(params, "gamma", 0.3)?)
        }
        other => Err(Error::InvalidArgument(format!("unknown potential {other}"))),
    }
}
