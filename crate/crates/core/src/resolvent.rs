//! Free resolvent kernels R0(lambda^2 +- i0), difference kernels B and their checks.
//!
//! In radial mode the operator is the outgoing Green's function of the three-point
//! radial lattice (`lattice_kernel_radial`). At lambda = 0 it coincides with the
//! continuum kernel r_< sampled at the nodes and inverts the discrete Laplacian of
//! `evolution::discretize_H` exactly; for lambda != 0 it differs from the continuum
//! formula by the lattice dispersion theta = 2 asin(lambda h / 2).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DenseOperator, Grid, GridMode};
use crate::C64;

/// Mean of 1/|x| over the unit cube centred at the origin: 3 ln(2 + sqrt 3) - pi/2.
pub const CUBE_MEAN_INV_DIST: f64 = 2.380_077_363_979_553_6;
/// Mean of |x| over the unit cube centred at the origin.
pub const CUBE_MEAN_DIST: f64 = 0.480_295_978_227_526_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventSpec {
    pub lambda: f64,
    pub sign: Branch,
}

impl ResolventSpec {
    pub fn plus(lambda: f64) -> Self {
        Self { lambda, sign: Branch::Plus }
    }
    pub fn minus(lambda: f64) -> Self {
        Self { lambda, sign: Branch::Minus }
    }
}

pub fn free_kernel_3d(spec: ResolventSpec, d: f64) -> Result<C64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance {d} must be positive")));
    }
    Ok(C64::from_polar(1.0 / (4.0 * PI * d), spec.sign.sign() * spec.lambda * d))
}

/// s-wave kernel for reduced functions u = r psi.
pub fn free_kernel_radial(spec: ResolventSpec, r: f64, rp: f64) -> Result<C64> {
    if !(r > 0.0 && rp > 0.0) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let (lo, hi) = if r < rp { (r, rp) } else { (rp, r) };
    let l = spec.lambda;
    if l == 0.0 {
        return Ok(C64::new(lo, 0.0));
    }
    Ok(C64::from_polar((l * lo).sin() / l, spec.sign.sign() * l * hi))
}

/// Lattice wavenumber theta with 2 - 2 cos(theta) = (lambda h)^2, continued off the band
/// with Im theta >= 0 on the outgoing branch.
fn lattice_theta(lambda: f64, h: f64, sign: Branch) -> C64 {
    let z = C64::new(lambda * h / 2.0, 0.0);
    let mut th = z.asin() * 2.0;
    if th.im < 0.0 {
        th = th.conj();
    }
    match sign {
        Branch::Plus => th,
        Branch::Minus => -th.conj(),
    }
}

/// Outgoing Green's function of the half-line lattice with nodes (i + 1/2) h, for u.
pub fn lattice_kernel_radial(spec: ResolventSpec, h: f64, i: usize, j: usize) -> C64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let (a, b) = (lo as f64 + 0.5, hi as f64 + 0.5);
    if spec.lambda == 0.0 {
        return C64::new(h * a, 0.0);
    }
    let th = lattice_theta(spec.lambda.abs(), h, spec.sign);
    // negative lambda on the plus branch is the minus branch at |lambda|
    let th = if spec.lambda < 0.0 { -th.conj() } else { th };
    let i_unit = C64::new(0.0, 1.0);
    (th * a).sin() * (i_unit * th * b).exp() * h / th.sin()
}

fn cell_diag(spec: ResolventSpec, h: f64) -> C64 {
    // cell average of e^{i s lambda d}/(4 pi d) to second order in lambda h
    let s = spec.sign.sign() * spec.lambda;
    C64::new(CUBE_MEAN_INV_DIST / h - 0.5 * s * s * CUBE_MEAN_DIST * h, s) / (4.0 * PI)
}

/// Kernel operator of R0(lambda^2 +- i0).
pub fn build_r0(grid: &Arc<Grid>, spec: ResolventSpec) -> DenseOperator {
    match grid.mode {
        GridMode::RadialSwave => {
            let h = grid.spacing;
            let r = &grid.radii;
            DenseOperator::from_kernel_fn(grid, |i, j| lattice_kernel_radial(spec, h, i, j) / (4.0 * PI * r[i] * r[j]))
        }
        GridMode::Box3d => {
            let h = grid.spacing;
            let diag = cell_diag(spec, h);
            DenseOperator::from_kernel_fn(grid, |i, j| {
                if i == j {
                    diag
                } else {
                    let d = grid.distance(i, j);
                    C64::from_polar(1.0 / (4.0 * PI * d), spec.sign.sign() * spec.lambda * d)
                }
            })
        }
    }
}

/// Radial operator sampling the continuum s-wave formula instead of the lattice kernel.
pub fn build_r0_continuum(grid: &Arc<Grid>, spec: ResolventSpec) -> Result<DenseOperator> {
    if grid.mode != GridMode::RadialSwave {
        return Ok(build_r0(grid, spec));
    }
    let r = &grid.radii;
    Ok(DenseOperator::from_kernel_fn(grid, |i, j| {
        free_kernel_radial(spec, r[i], r[j]).expect("positive radii") / (4.0 * PI * r[i] * r[j])
    }))
}

/// B_{lambda0}(lambda^2) = R0(lambda^2) - R0(lambda0^2), built from the subtracted formula.
pub fn build_b(grid: &Arc<Grid>, lambda0: f64, lambda: f64, sign: Branch) -> DenseOperator {
    if lambda == lambda0 {
        return DenseOperator::zeros(grid);
    }
    match grid.mode {
        GridMode::RadialSwave => {
            let h = grid.spacing;
            let r = &grid.radii;
            let (s1, s0) = (ResolventSpec { lambda, sign }, ResolventSpec { lambda: lambda0, sign });
            DenseOperator::from_kernel_fn(grid, |i, j| {
                (lattice_kernel_radial(s1, h, i, j) - lattice_kernel_radial(s0, h, i, j)) / (4.0 * PI * r[i] * r[j])
            })
        }
        GridMode::Box3d => {
            let h = grid.spacing;
            let diag = cell_diag(ResolventSpec { lambda, sign }, h) - cell_diag(ResolventSpec { lambda: lambda0, sign }, h);
            DenseOperator::from_kernel_fn(grid, |i, j| {
                if i == j {
                    diag
                } else {
                    difference_kernel_3d(lambda0, lambda, sign, grid.distance(i, j))
                }
            })
        }
    }
}

/// (e^{i s lambda d} - e^{i s lambda0 d}) / (4 pi d) without cancellation at small d.
pub fn difference_kernel_3d(lambda0: f64, lambda: f64, sign: Branch, d: f64) -> C64 {
    let s = sign.sign();
    let delta = lambda - lambda0;
    let half = 0.5 * s * delta * d;
    // e^{i a} - 1 = 2 i sin(a/2) e^{i a/2}
    let diff = if d == 0.0 {
        return C64::new(0.0, s * delta / (4.0 * PI));
    } else {
        C64::new(0.0, 2.0 * half.sin()) * C64::from_polar(1.0, half)
    };
    C64::from_polar(1.0, s * lambda0 * d) * diff / (4.0 * PI * d)
}

/// Induced L1 norm of R0(lambda^2) - (I + lambda^2 R0(lambda^2)) R0(0).
pub fn resolvent_identity_residual(grid: &Arc<Grid>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let r = build_r0(grid, ResolventSpec::plus(lambda));
    let r0 = build_r0(grid, ResolventSpec::plus(0.0));
    let id = DenseOperator::identity(grid);
    let rhs = id.add(&r.scale(C64::new(lambda * lambda, 0.0))).unwrap().compose(&r0).unwrap();
    r.sub(&rhs).unwrap().operator_l1_norm()
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelDifferenceReport {
    pub p: f64,
    pub p_conjugate: f64,
    pub mu: f64,
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub fitted_exponent: f64,
    pub expected_exponent: f64,
    pub passed: bool,
}

/// L^{p'} norms of the convolution kernel of R0(lambda^2) - R0(mu^2) over the grid domain
/// and the fitted power of |lambda - mu|.
pub fn kernel_difference_check(grid: &Arc<Grid>, p: f64, mu: f64, lambdas: &[f64]) -> Result<KernelDifferenceReport> {
    if !(p >= 1.0 && p < 1.5) {
        return Err(Error::InvalidArgument(format!("p = {p} must lie in [1, 3/2)")));
    }
    let pc = p / (p - 1.0);
    let usable: Vec<f64> = lambdas.iter().copied().filter(|&l| l != mu).collect();
    if usable.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 distinct lambda values to fit".into()));
    }
    let mut norms = Vec::new();
    for &l in &usable {
        let mut acc = 0.0;
        for (k, &d) in grid.radii.iter().enumerate() {
            let v = if d == 0.0 {
                (l - mu).abs() / (4.0 * PI)
            } else {
                difference_kernel_3d(mu, l, Branch::Plus, d).norm()
            };
            acc += grid.weights[k] * v.powf(pc);
        }
        norms.push(acc.powf(1.0 / pc));
    }
    let xs: Vec<f64> = usable.iter().map(|l| (l - mu).abs().ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let (slope, _) = crate::fit::linear_fit(&xs, &ys);
    let expected = 1.0 - 3.0 / pc;
    Ok(KernelDifferenceReport {
        p,
        p_conjugate: pc,
        mu,
        lambdas: usable,
        norms,
        fitted_exponent: slope,
        expected_exponent: expected,
        passed: slope >= expected - 0.15,
    })
}
