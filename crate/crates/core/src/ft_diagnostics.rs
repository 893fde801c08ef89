//! Fourier transforms in lambda of the inverse family and of the kernels that control it:
//! double-L1 scans of T+(lambda) f, the B-kernel constant, the K2 bounds and the
//! d/dlambda stationary-phase kernel.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::birman_schwinger::{build_bs, direct_inverse};
use crate::cutoff::{chi, chi_hat_fast, chi_hat_integral, chi_hat_l1, shift_table, window_high, window_low, window_mid};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{GridFunction, GridMode};
use crate::low_energy::{build_s_lambda, inverse_with, Pairing, RegularizedInverse};
use crate::potentials::PotentialSpec;
use crate::resolvent::{build_r0, ResolventSpec};
use crate::threshold::ThresholdBasis;
use crate::C64;

pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Window {
    /// 1 - chi(lambda / lambda1)
    High { lambda1: f64 },
    /// chi(lambda / lambda1) - chi(lambda lambda1)
    Mid { lambda1: f64 },
    /// chi(lambda / r)
    Low { r: f64 },
    /// no cutoff
    Full,
}

impl Window {
    pub fn weight(&self, lambda: f64) -> f64 {
        match *self {
            Window::High { lambda1 } => window_high(lambda, lambda1),
            Window::Mid { lambda1 } => window_mid(lambda, lambda1),
            Window::Low { r } => window_low(lambda, r),
            Window::Full => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Window::High { .. } => "HIGH",
            Window::Mid { .. } => "MID",
            Window::Low { .. } => "LOW",
            Window::Full => "FULL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScanVerdict {
    Bounded,
    Divergent,
}

/// Uniform lambda grid (m - n/2 + 1/2) dl, m = 0..n, symmetric about 0 and avoiding 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaGrid {
    pub n: usize,
    pub delta_lambda: f64,
}

impl LambdaGrid {
    pub fn new(n: usize, delta_lambda: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() || !(delta_lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("need n a power of two >= 2 and dl > 0, got n={n}, dl={delta_lambda}")));
        }
        Ok(Self { n, delta_lambda })
    }

    /// Grid of n points covering [-half_width, half_width].
    pub fn covering(n: usize, half_width: f64) -> Result<Self> {
        Self::new(n, 2.0 * half_width / n as f64)
    }

    pub fn doubled(&self) -> Self {
        Self { n: 2 * self.n, delta_lambda: 0.5 * self.delta_lambda }
    }

    pub fn lambda(&self, m: usize) -> f64 {
        (m as f64 - self.n as f64 / 2.0 + 0.5) * self.delta_lambda
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.lambda(m)).collect()
    }

    pub fn delta_rho(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.delta_lambda)
    }

    pub fn rhos(&self) -> Vec<f64> {
        let d = self.delta_rho();
        (0..self.n).map(|q| (q as f64 - self.n as f64 / 2.0) * d).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformScan {
    pub window: Window,
    pub grid: LambdaGrid,
    pub rho: Vec<f64>,
    /// sum_x w_x |g^(rho, x)|
    pub profile: Vec<f64>,
    pub total: f64,
    pub f_norm: f64,
    pub verdict: ScanVerdict,
    /// g^(rho_q, x) indexed [q][x]
    #[serde(skip)]
    pub transform: Vec<Vec<C64>>,
}

#[derive(Serialize)]
struct Summary {
    window: &'static str,
    total: f64,
    n: usize,
    delta_lambda: f64,
    verdict: ScanVerdict,
}

impl TransformScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,l1_profile\n");
        for (r, p) in self.rho.iter().zip(&self.profile) {
            let _ = writeln!(s, "{r},{p}");
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(Summary {
            window: self.window.name(),
            total: self.total,
            n: self.grid.n,
            delta_lambda: self.grid.delta_lambda,
            verdict: self.verdict,
        })
        .expect("plain data")
    }
}

/// g^(rho_q) = sum_m g(lambda_m) e^{-i lambda_m rho_q} dl for every spatial index, up to a
/// q-dependent phase. samples[m][x].
pub fn transform_samples(grid: &LambdaGrid, samples: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = grid.n;
    let nx = samples.first().map_or(0, |s| s.len());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = vec![vec![C64::new(0.0, 0.0); nx]; n];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for x in 0..nx {
        for m in 0..n {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            buf[m] = samples[m][x] * (s * grid.delta_lambda);
        }
        fft.process(&mut buf);
        // FFT bin q holds rho = (q - n/2) d rho after the (-1)^m twiddle
        for q in 0..n {
            out[q][x] = buf[q];
        }
    }
    out
}

fn assemble(window: Window, grid: LambdaGrid, weights: &[f64], samples: &[Vec<C64>], f_norm: f64) -> TransformScan {
    let transform = transform_samples(&grid, samples);
    let dr = grid.delta_rho();
    let profile: Vec<f64> = transform
        .iter()
        .map(|row| row.iter().zip(weights).map(|(v, w)| w * v.norm()).sum())
        .collect();
    let total = profile.iter().sum::<f64>() * dr;
    let verdict = if total > DIVERGENCE_FACTOR * f_norm { ScanVerdict::Divergent } else { ScanVerdict::Bounded };
    TransformScan { window, grid, rho: grid.rhos(), profile, total, f_norm, verdict, transform }
}

/// How T+(lambda) f is evaluated.
pub enum Evaluator<'a> {
    /// dense inverse of I + V R0+(lambda^2)
    Dense(&'a PotentialSpec),
    /// the pole-isolating formula around a threshold obstruction
    Formula(&'a RegularizedInverse),
}

/// Double-L1 norm of the lambda -> rho transform of window(lambda) T+(lambda) f.
pub fn t_hat_l1_scan(eval: &Evaluator, f: &GridFunction, window: Window, grid: LambdaGrid) -> Result<TransformScan> {
    let g = &f.grid;
    let zero = vec![C64::new(0.0, 0.0); g.len()];
    let mut samples = Vec::with_capacity(grid.n);
    for l in grid.lambdas() {
        let w = window.weight(l);
        if w == 0.0 {
            samples.push(zero.clone());
            continue;
        }
        let tf = match eval {
            Evaluator::Dense(v) => {
                let inv = direct_inverse(&build_bs(v, ResolventSpec::plus(l))?).map_err(|e| match e {
                    Error::NearSingular { cond, .. } => Error::NearSingular { cond, lambda: Some(l) },
                    e => e,
                })?;
                inv.inverse.apply(f)?
            }
            Evaluator::Formula(reg) => {
                let s = build_s_lambda(reg, l)?;
                inverse_with(reg, &s.op, l, f, Pairing::Resolvent)?.value
            }
        };
        samples.push(tf.values.iter().map(|v| v * w).collect());
    }
    Ok(assemble(window, grid, &g.weights, &samples, f.l1()))
}

/// Transform of a scalar family window(lambda) phi(lambda); handy for sanity checks.
pub fn scalar_scan(phi: impl Fn(f64) -> C64, window: Window, grid: LambdaGrid) -> TransformScan {
    let samples: Vec<Vec<C64>> = grid.lambdas().iter().map(|&l| vec![phi(l) * window.weight(l)]).collect();
    assemble(window, grid, &[1.0], &samples, 1.0)
}

/// Fraction of the L1 mass of a scan's profile within |rho - a| <= width.
pub fn mass_near(scan: &TransformScan, a: f64, width: f64) -> f64 {
    let tot: f64 = scan.profile.iter().sum();
    let near: f64 = scan.rho.iter().zip(&scan.profile).filter(|(r, _)| (*r - a).abs() <= width).map(|(_, p)| p).sum();
    near / tot
}

#[derive(Debug, Clone, Serialize)]
pub struct VbHatReport {
    pub lambda0: f64,
    pub r_values: Vec<f64>,
    pub constants: Vec<f64>,
    pub exponent: f64,
    pub v_norm: f64,
}

fn radial_only(mode: GridMode, what: &str) -> Result<()> {
    if mode != GridMode::RadialSwave {
        return Err(Error::InvalidArgument(format!("{what} is implemented for radial grids")));
    }
    Ok(())
}

/// sup_y int int |K^(x, y, rho)| dx drho for the kernel
/// V(x) (e^{i(lambda-lambda0)|x-y|} - 1) e^{i lambda0 |x-y|} chi((lambda-lambda0)/r) / (4 pi |x-y|),
/// with y ranging over spheres. The modulus of the transform does not depend on lambda0.
pub fn vb_hat_constant(v: &PotentialSpec, r: f64) -> Result<f64> {
    let grid = v.grid();
    radial_only(grid.mode, "vb_hat_bound_check")?;
    let vals = v
        .values
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("needs a multiplicative potential".into()))?;
    let tab = shift_table();
    let h = grid.spacing;
    let mut best = 0.0f64;
    for &ry in &grid.radii {
        let mut acc = 0.0;
        for (&rx, vx) in grid.radii.iter().zip(&vals.values) {
            let (a, b) = ((rx - ry).abs(), rx + ry);
            acc += h * vx.norm() * rx / (2.0 * ry) * (tab.cum_at(r * b) - tab.cum_at(r * a)) / r;
        }
        best = best.max(acc);
    }
    Ok(best)
}

pub fn vb_hat_bound_check(v: &PotentialSpec, lambda0: f64, r0: f64) -> Result<VbHatReport> {
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    let r_values: Vec<f64> = (0..4).map(|k| r0 / f64::from(1 << k)).collect();
    let constants = r_values.iter().map(|&r| vb_hat_constant(v, r)).collect::<Result<Vec<_>>>()?;
    Ok(VbHatReport { lambda0, exponent: loglog_slope(&r_values, &constants), r_values, constants, v_norm: v.composite_norm })
}

#[derive(Debug, Clone, Serialize)]
pub struct K2Report {
    pub r_values: Vec<f64>,
    /// sup_x int |K2(x, rho)| drho with R0-(lambda^2)
    pub resolvent_variant: Vec<f64>,
    /// the same with R0-(lambda^2) - R0(0)
    pub difference_variant: Vec<f64>,
    pub difference_slope: f64,
    /// ||chi_hat||_1 sup_x (R0(0)|psi|)(x)
    pub bound: f64,
}

/// sup_x int |transform of chi(2 lambda / r) R0-(lambda^2) psi| drho for each member psi_kk,
/// and the same for B0.
pub fn k2_norms(basis: &ThresholdBasis, r: f64, xs: &[usize]) -> Result<(f64, f64)> {
    let grid = &basis.grid;
    radial_only(grid.mode, "k2_bound_check")?;
    let h = grid.spacing;
    let r0 = build_r0(grid, ResolventSpec::plus(0.0));
    let half = 200.0 / r;
    let drho = 0.2 / r;
    let nrho = (2.0 * half / drho) as usize;
    let rhos: Vec<f64> = (0..nrho).map(|q| -half + (q as f64 + 0.5) * drho).collect();
    let (mut sup_r, mut sup_b) = (0.0f64, 0.0f64);
    for chain in &basis.chains {
        let psi = chain.last().unwrap();
        let r0psi = r0.apply(psi)?;
        for &ix in xs {
            let rx = grid.radii[ix];
            let (mut ir, mut ib) = (0.0, 0.0);
            for &rho in &rhos {
                let mut k = C64::new(0.0, 0.0);
                for (&ry, p) in grid.radii.iter().zip(&psi.values) {
                    let (a, b) = ((rx - ry).abs(), rx + ry);
                    let d = chi_hat_integral(r * (rho + b) / 2.0) - chi_hat_integral(r * (rho + a) / 2.0);
                    k += p * (h * ry / (2.0 * rx) * d);
                }
                let kb = k - r0psi.values[ix] * (0.5 * r * chi_hat_fast(r * rho / 2.0));
                ir += k.norm() * drho;
                ib += kb.norm() * drho;
            }
            sup_r = sup_r.max(ir);
            sup_b = sup_b.max(ib);
        }
    }
    Ok((sup_r, sup_b))
}

pub fn k2_bound_check(basis: &ThresholdBasis, r0: f64, xs: &[usize]) -> Result<K2Report> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("k2_bound_check needs a nontrivial threshold basis".into()));
    }
    let r_values: Vec<f64> = (0..4).map(|k| r0 / f64::from(1 << k)).collect();
    let (mut rv, mut bv) = (Vec::new(), Vec::new());
    for &r in &r_values {
        let (a, b) = k2_norms(basis, r, xs)?;
        rv.push(a);
        bv.push(b);
    }
    let r0op = build_r0(&basis.grid, ResolventSpec::plus(0.0));
    let mut bound = 0.0f64;
    for chain in &basis.chains {
        let abs = chain.last().unwrap().abs();
        let pot = r0op.apply(&abs)?;
        bound = bound.max(xs.iter().map(|&i| pot.values[i].norm()).fold(0.0, f64::max));
    }
    Ok(K2Report {
        difference_slope: loglog_slope(&r_values, &bv),
        r_values,
        resolvent_variant: rv,
        difference_variant: bv,
        bound: chi_hat_l1() * bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DlambdaReport {
    pub t: f64,
    pub expected: f64,
    pub max_deviation: f64,
    pub moduli: Vec<f64>,
}

/// |int e^{-i t lambda^2} d/dlambda[e^{i lambda d} / (4 pi d)] e^{-i lambda rho} chi(lambda / cap) dlambda|
/// against (16 pi |t|)^{-1/2}, for (d, rho) pairs whose stationary point lies inside the plateau.
pub fn dlambda_kernel_check(t: f64, samples: &[(f64, f64)], cap: f64, n: usize) -> Result<DlambdaReport> {
    if t == 0.0 {
        return Err(Error::InvalidArgument("t must be nonzero".into()));
    }
    let expected = (16.0 * PI * t.abs()).powf(-0.5);
    let dl = 4.0 * cap / n as f64;
    let mut moduli = Vec::with_capacity(samples.len());
    for &(d, rho) in samples {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n {
            let l = -2.0 * cap + (m as f64 + 0.5) * dl;
            let w = chi(l / cap);
            if w == 0.0 {
                continue;
            }
            // derivative of e^{i l d}/(4 pi d) is i e^{i l d}/(4 pi)
            let phase = -t * l * l + l * (d - rho);
            acc += C64::from_polar(w / (4.0 * PI), phase) * C64::new(0.0, 1.0);
        }
        moduli.push((acc * dl).norm());
    }
    let max_deviation = moduli.iter().map(|m| (m - expected).abs() / expected).fold(0.0, f64::max);
    Ok(DlambdaReport { t, expected, max_deviation, moduli })
}
