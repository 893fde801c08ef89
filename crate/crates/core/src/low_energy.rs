//! The low-energy inverse of I + V R0+(lambda^2) near a threshold obstruction: the
//! constrained one-sided inverse S0, its continuation S(lambda), the chain identities and
//! the pole-isolating inverse formula.

use std::fmt::Write as _;

use faer::Mat;
use serde::Serialize;

use crate::birman_schwinger::{build_bs, build_bs_right, direct_inverse};
use crate::error::{Error, Result};
use crate::grid::{DenseOperator, GridFunction};
use crate::linalg;
use crate::potentials::PotentialSpec;
use crate::resolvent::{build_b, build_r0, Branch, ResolventSpec};
use crate::threshold::{build_qtilde0, ThresholdBasis};
use crate::C64;

const MAX_TERMS: usize = 400;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Clone)]
pub struct RegularizedInverse {
    pub v: PotentialSpec,
    pub basis: ThresholdBasis,
    pub s0: DenseOperator,
    pub qtilde0: DenseOperator,
    /// largest lambda <= 1 with contraction factor <= 1/2
    pub window: f64,
    /// B(V psi_{1,k}, R0(0) psi_{k',k'}), close to minus the identity
    pub duality: Mat<C64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct S0Residuals {
    /// ||Q~0 (I + V R0(0)) S0 - Q~0||_{1->1}
    pub one_sided: f64,
    /// sup over the diagonal members of ||S0^T R0(0) psi_kk||_inf / ||R0(0) psi_kk||_inf
    pub range: f64,
    /// max |duality + I|
    pub duality: f64,
}

/// S0 from the bordered system [[I + V R0(0), C], [D^T, 0]] with C = (psi_kk) and
/// D = (R0(0) psi_kk).
pub fn build_s0(v: &PotentialSpec, basis: &ThresholdBasis) -> Result<RegularizedInverse> {
    let grid = v.grid();
    let t0 = build_bs(v, ResolventSpec::plus(0.0))?;
    let mut reg = if basis.is_empty() {
        RegularizedInverse {
            v: v.clone(),
            basis: basis.clone(),
            s0: direct_inverse(&t0)?.inverse,
            qtilde0: DenseOperator::identity(grid),
            window: 0.0,
            duality: Mat::zeros(0, 0),
        }
    } else {
        let n = grid.len();
        let r0 = build_r0(grid, ResolventSpec::plus(0.0));
        let diag: Vec<&GridFunction> = basis.chains.iter().map(|c| c.last().unwrap()).collect();
        let d = diag.len();
        let dcols: Vec<GridFunction> = diag.iter().map(|p| r0.apply(p)).collect::<Result<_>>()?;
        let mut duality = Mat::<C64>::zeros(d, d);
        for (a, c) in basis.chains.iter().enumerate() {
            let vpsi = v.operator.apply(&c[0])?;
            for b in 0..d {
                duality[(a, b)] = vpsi.bilinear_pair(&dcols[b])?;
            }
        }
        let smin = linalg::singular_values(&duality)?.last().copied().unwrap_or(0.0);
        if !(smin > 1e-8) {
            return Err(Error::DualityDegenerate);
        }
        let t = t0.balanced();
        let bord = Mat::from_fn(n + d, n + d, |i, j| match (i < n, j < n) {
            (true, true) => t[(i, j)],
            (true, false) => diag[j - n].balanced()[i],
            (false, true) => dcols[i - n].balanced()[j],
            (false, false) => C64::new(0.0, 0.0),
        });
        let rhs = Mat::from_fn(n + d, n, |i, j| if i == j { re(1.0) } else { re(0.0) });
        let sol = linalg::solve(&bord, &rhs)?;
        let s0 = DenseOperator::from_balanced(grid, Mat::from_fn(n, n, |i, j| sol[(i, j)]))?;
        RegularizedInverse {
            v: v.clone(),
            basis: basis.clone(),
            s0,
            qtilde0: build_qtilde0(basis),
            window: 0.0,
            duality,
        }
    };
    reg.window = find_window(&reg, 1.0, 0.5)?;
    Ok(reg)
}

impl RegularizedInverse {
    /// S0 Q~0 V B0+(lambda^2).
    pub fn neumann_operator(&self, lambda: f64) -> Result<DenseOperator> {
        let b = build_b(self.v.grid(), 0.0, lambda, Branch::Plus);
        self.s0.compose(&self.qtilde0)?.compose(&self.v.operator.compose(&b)?)
    }

    pub fn contraction(&self, lambda: f64) -> Result<f64> {
        Ok(self.neumann_operator(lambda)?.operator_l1_norm())
    }

    pub fn residuals(&self) -> Result<S0Residuals> {
        let grid = self.v.grid();
        let t0 = build_bs(&self.v, ResolventSpec::plus(0.0))?;
        let one_sided = self.qtilde0.compose(&t0)?.compose(&self.s0)?.sub(&self.qtilde0)?.operator_l1_norm();
        let r0 = build_r0(grid, ResolventSpec::plus(0.0));
        let s0t = self.s0.transpose_bilinear();
        let mut range = 0.0f64;
        for c in &self.basis.chains {
            let d = r0.apply(c.last().unwrap())?;
            range = range.max(s0t.apply(&d)?.sup() / d.sup());
        }
        let dm = self.duality.nrows();
        let duality = if dm == 0 {
            0.0
        } else {
            linalg::max_abs(&(&self.duality + &linalg::identity(dm)))
        };
        Ok(S0Residuals { one_sided, range, duality })
    }
}

/// Largest lambda in (0, hi] whose contraction factor is at most `target`, by bisection.
fn find_window(reg: &RegularizedInverse, hi: f64, target: f64) -> Result<f64> {
    if reg.contraction(hi)? <= target {
        return Ok(hi);
    }
    let (mut a, mut b) = (0.0, hi);
    for _ in 0..20 {
        let m = 0.5 * (a + b);
        if reg.contraction(m)? <= target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct SLambda {
    pub op: DenseOperator,
    pub contraction: f64,
    pub terms: usize,
}

/// S(lambda) = sum_m (-S0 Q~0 V B0)^m S0.
pub fn build_s_lambda(reg: &RegularizedInverse, lambda: f64) -> Result<SLambda> {
    if lambda == 0.0 {
        return Ok(SLambda { op: reg.s0.clone(), contraction: 0.0, terms: 1 });
    }
    let t = reg.neumann_operator(lambda)?;
    let contraction = t.operator_l1_norm();
    if contraction >= 1.0 {
        return Err(Error::NoContraction(contraction));
    }
    let neg = t.scale(re(-1.0));
    let scale = reg.s0.operator_l1_norm();
    let mut term = reg.s0.clone();
    let mut sum = reg.s0.clone();
    let mut terms = 1;
    while terms < MAX_TERMS && term.operator_l1_norm() > 1e-14 * scale {
        term = neg.compose(&term)?;
        sum = sum.add(&term)?;
        terms += 1;
    }
    Ok(SLambda { op: sum, contraction, terms })
}

/// ||Q~0 (I + V R0+(lambda^2)) S(lambda) - Q~0||_{1->1}.
pub fn one_sided_residual(reg: &RegularizedInverse, lambda: f64, s: &DenseOperator) -> Result<f64> {
    let bs = build_bs(&reg.v, ResolventSpec::plus(lambda))?;
    Ok(reg.qtilde0.compose(&bs)?.compose(s)?.sub(&reg.qtilde0)?.operator_l1_norm())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainResidual {
    pub chain: usize,
    pub j: usize,
    pub k: usize,
    pub residual: f64,
}

/// L1 norms of (I + R0 V) psi_j - R0 (psi_{j-1} - lambda^2 psi_j) for every chain member.
pub fn chain_identity_residual(v: &PotentialSpec, basis: &ThresholdBasis, lambda: f64) -> Result<Vec<ChainResidual>> {
    let t = build_bs_right(v, ResolventSpec::plus(lambda))?;
    let r0 = build_r0(v.grid(), ResolventSpec::plus(lambda));
    let l2 = re(lambda * lambda);
    let mut out = Vec::new();
    for (ci, c) in basis.chains.iter().enumerate() {
        let k = c.len();
        for j in 0..k {
            let mut src = c[j].scale(-l2);
            if j > 0 {
                src = src.add(&c[j - 1])?;
            }
            let r = t.apply(&c[j])?.sub(&r0.apply(&src)?)?;
            out.push(ChainResidual { chain: ci, j: j + 1, k, residual: r.l1() });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainTotal {
    pub chain: usize,
    pub k: usize,
    pub residual: f64,
    /// residual times lambda^{2K} where the identity is singular at lambda = 0
    pub scaled: f64,
}

/// (I + R0 V) sum_j lambda^{2(j-1)} psi_j + lambda^{2k} R0 psi_kk.
pub fn telescope_residual(v: &PotentialSpec, basis: &ThresholdBasis, lambda: f64) -> Result<Vec<ChainTotal>> {
    let t = build_bs_right(v, ResolventSpec::plus(lambda))?;
    let r0 = build_r0(v.grid(), ResolventSpec::plus(lambda));
    let l2 = lambda * lambda;
    let mut out = Vec::new();
    for (ci, c) in basis.chains.iter().enumerate() {
        let k = c.len();
        let mut sum = GridFunction::zeros(v.grid());
        for (j, p) in c.iter().enumerate() {
            sum = sum.add(&p.scale(re(l2.powi(j as i32))))?;
        }
        let r = t.apply(&sum)?.add(&r0.apply(&c[k - 1])?.scale(re(l2.powi(k as i32))))?;
        out.push(ChainTotal { chain: ci, k, residual: r.l1(), scaled: r.l1() });
    }
    Ok(out)
}

/// psi_kk + sum_j lambda^{-2(k+1-j)} V psi_j, the exact preimage of psi_kk.
pub fn exact_preimage(v: &PotentialSpec, chain: &[GridFunction], lambda: f64) -> Result<GridFunction> {
    let k = chain.len();
    let l2 = lambda * lambda;
    let mut out = chain[k - 1].clone();
    for (j, p) in chain.iter().enumerate() {
        out = out.add(&v.operator.apply(p)?.scale(re(l2.powi(-((k - j) as i32)))))?;
    }
    Ok(out)
}

/// (I + V R0) E_k - psi_kk, reported raw and multiplied by lambda^{2K}.
pub fn exact_inverse_residual(v: &PotentialSpec, basis: &ThresholdBasis, lambda: f64) -> Result<Vec<ChainTotal>> {
    if lambda == 0.0 {
        return Err(Error::InvalidArgument("the exact inverse formula is singular at lambda = 0".into()));
    }
    let bs = build_bs(v, ResolventSpec::plus(lambda))?;
    let kk = basis.k_max as i32;
    let mut out = Vec::new();
    for (ci, c) in basis.chains.iter().enumerate() {
        let e = exact_preimage(v, c, lambda)?;
        let r = bs.apply(&e)?.sub(c.last().unwrap())?.l1();
        out.push(ChainTotal { chain: ci, k: c.len(), residual: r, scaled: r * (lambda * lambda).powi(kk) });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FormulaOutput {
    /// the inverse applied to f, assembled from the pole-isolating formula
    pub value: GridFunction,
    /// the same inverse assembled from the F_k coefficients
    pub value_via_f: GridFunction,
    /// F_k = B((I + V R0) S(lambda) Q~0 f, psi_{1,k}) per chain
    pub f_k: Vec<C64>,
    /// S(lambda) Q~0 f
    pub regular: GridFunction,
}

/// Which vector the regular part is paired against in the second line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// R0+(lambda^2) psi_kk
    Resolvent,
    /// B0+(lambda^2) psi_kk = (R0+(lambda^2) - R0+(0)) psi_kk
    Difference,
}

pub fn inverse_via_formula(reg: &RegularizedInverse, lambda: f64, f: &GridFunction) -> Result<FormulaOutput> {
    let s = build_s_lambda(reg, lambda)?;
    inverse_with(reg, &s.op, lambda, f, Pairing::Resolvent)
}

/// Evaluates the formula with a prebuilt S(lambda); reuse across many f.
pub fn inverse_with(
    reg: &RegularizedInverse,
    s: &DenseOperator,
    lambda: f64,
    f: &GridFunction,
    pairing: Pairing,
) -> Result<FormulaOutput> {
    if lambda == 0.0 {
        return Err(Error::InvalidArgument("lambda = 0 is the pole".into()));
    }
    let v = &reg.v;
    let grid = v.grid();
    let regular = s.apply(&reg.qtilde0.apply(f)?)?;
    let mut value = regular.clone();
    let mut value_via_f = regular.clone();
    if reg.basis.is_empty() {
        return Ok(FormulaOutput { value, value_via_f, f_k: vec![], regular });
    }
    let r = match pairing {
        Pairing::Resolvent => build_r0(grid, ResolventSpec::plus(lambda)),
        Pairing::Difference => build_b(grid, 0.0, lambda, Branch::Plus),
    };
    let bs = build_bs(v, ResolventSpec::plus(lambda))?;
    let image = bs.apply(&regular)?;
    let l2 = lambda * lambda;
    let mut f_k = Vec::new();
    for c in &reg.basis.chains {
        let k = c.len();
        let e = exact_preimage(v, c, lambda)?;
        // second line: B(S Q~0 f, R psi_kk) lambda^{2k} E_k
        let a = regular.bilinear_pair(&r.apply(&c[k - 1])?)? * l2.powi(k as i32);
        // third line: sum_i lambda^{2(i-1)} B(f, psi_i) E_k
        let mut b = C64::new(0.0, 0.0);
        for (i, p) in c.iter().enumerate() {
            b += f.bilinear_pair(p)? * l2.powi(i as i32);
        }
        value = value.add(&e.scale(a + b))?;
        let fk = image.bilinear_pair(&c[0])?;
        value_via_f = value_via_f.add(&e.scale(f.bilinear_pair(&c[0])? - fk))?;
        f_k.push(fk);
    }
    Ok(FormulaOutput { value, value_via_f, f_k, regular })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowEnergyRow {
    pub lambda: f64,
    pub norm_admissible_f: f64,
    pub norm_generic_f: f64,
    pub contraction: f64,
    pub chain_residual: f64,
    pub telescope_residual: f64,
    pub exact_inverse_residual: f64,
}

/// Norms of the inverse applied to an admissible f (paired to zero against the basis) and
/// a generic f over a lambda scan.
pub fn low_energy_scan(
    reg: &RegularizedInverse,
    lambdas: &[f64],
    admissible: &GridFunction,
    generic: &GridFunction,
) -> Result<Vec<LowEnergyRow>> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let s = build_s_lambda(reg, l)?;
        let a = inverse_with(reg, &s.op, l, admissible, Pairing::Resolvent)?.value.l1();
        let g = inverse_with(reg, &s.op, l, generic, Pairing::Resolvent)?.value.l1();
        let worst = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
        rows.push(LowEnergyRow {
            lambda: l,
            norm_admissible_f: a,
            norm_generic_f: g,
            contraction: s.contraction,
            chain_residual: worst(chain_identity_residual(&reg.v, &reg.basis, l)?.iter().map(|r| r.residual).collect()),
            telescope_residual: worst(telescope_residual(&reg.v, &reg.basis, l)?.iter().map(|r| r.residual).collect()),
            exact_inverse_residual: worst(exact_inverse_residual(&reg.v, &reg.basis, l)?.iter().map(|r| r.scaled).collect()),
        });
    }
    Ok(rows)
}

pub fn scan_to_csv(rows: &[LowEnergyRow]) -> String {
    let mut s = String::from("lambda,norm_admissible_f,norm_generic_f,contraction,chain_residual,telescope_residual,exact_inverse_residual\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.lambda,
            r.norm_admissible_f,
            r.norm_generic_f,
            r.contraction,
            r.chain_residual,
            r.telescope_residual,
            r.exact_inverse_residual
        );
    }
    s
}
