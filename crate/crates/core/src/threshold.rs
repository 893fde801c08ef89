//! Zero-energy structure: the null space X1, the filtration X1 ⊂ X2 ⊂ ..., the
//! self-dual Jordan basis and the projections built from it.
//!
//! Everything is computed in balanced coordinates, where the bilinear pairing
//! sum_i w_i f_i g_i is the plain (unconjugated) dot product.

use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::birman_schwinger::{build_bs, build_bs_right};
use crate::error::{Error, Result};
use crate::evolution::{discretize_h, free_hamiltonian, lowest_free_eigenvalue};
use crate::grid::{DenseOperator, Grid, GridFunction, GridMode};
use crate::linalg::{self, CMat};
use crate::potentials::PotentialSpec;
use crate::resolvent::{build_r0, ResolventSpec};
use crate::C64;

pub const TOL_RANK: f64 = 1e-8;
pub const TOL_RES: f64 = 1e-3;
/// rank threshold for the structure of small restricted operators
pub const TOL_STRUCT: f64 = 1e-6;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// Plain bilinear dot product of two coefficient vectors through the form G.
fn bform(g: &CMat, u: &[C64], v: &[C64]) -> C64 {
    linalg::dot(u, &linalg::matvec(g, v))
}

#[derive(Debug, Clone)]
pub struct ThresholdState {
    /// null vector of I + V R0(0)
    pub g: GridFunction,
    /// R0(0) g
    pub psi: GridFunction,
}

/// X1 = { R0(0) g : (I + V R0(0)) g = 0 }.
pub fn nullspace_x1(v: &PotentialSpec, tol_rank: f64) -> Result<Vec<ThresholdState>> {
    let grid = v.grid();
    let t = build_bs(v, ResolventSpec::plus(0.0))?;
    let ns = linalg::null_space(t.balanced(), tol_rank)?;
    let r0 = build_r0(grid, ResolventSpec::plus(0.0));
    let mut out = Vec::new();
    for j in 0..ns.ncols() {
        let g = GridFunction::from_balanced(grid, &linalg::col(&ns, j));
        let psi = r0.apply(&g)?;
        out.push(ThresholdState { g, psi });
    }
    Ok(out)
}

/// Psi + R0(0) V Psi, which vanishes on X1.
pub fn bootstrap_residual(v: &PotentialSpec, psi: &GridFunction) -> Result<GridFunction> {
    let r0 = build_r0(v.grid(), ResolventSpec::plus(0.0));
    psi.add(&r0.apply(&v.operator.apply(psi)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Eigenvalue,
    Resonance,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateClass {
    pub verdict: Verdict,
    pub c0: C64,
    pub c1: C64,
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
    /// first radius where |Psi| drops to half its maximum
    pub scale: f64,
}

/// Fits Psi ≈ c0/r + c1/r^2 over the outer third of the domain; a surviving 1/r tail is
/// a resonance.
pub fn classify_state(psi: &GridFunction, tol_res: f64) -> Result<StateClass> {
    let grid = &psi.grid;
    let sup = psi.sup();
    if sup == 0.0 {
        return Err(Error::ZeroVector);
    }
    let lo = 2.0 * grid.extent / 3.0;
    let pts: Vec<(f64, C64)> = grid
        .radii
        .iter()
        .zip(&psi.values)
        .filter(|(&r, _)| r >= lo && r <= grid.extent)
        .map(|(&r, &v)| (r, v))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InvalidArgument(format!("tail fit window has {} nodes (< 8)", pts.len())));
    }
    // normal equations for the real design [1/r, 1/r^2]
    let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
    let (mut b1, mut b2) = (zero(), zero());
    for &(r, v) in &pts {
        let (x1, x2) = (1.0 / r, 1.0 / (r * r));
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        b1 += v * x1;
        b2 += v * x2;
    }
    let det = s11 * s22 - s12 * s12;
    let c0 = (b1 * s22 - b2 * s12) / det;
    let c1 = (b2 * s11 - b1 * s12) / det;
    let scale = grid
        .radii
        .iter()
        .zip(&psi.values)
        .find(|(_, v)| v.norm() <= 0.5 * sup)
        .map_or(grid.extent, |(&r, _)| r);
    let verdict = if c0.norm() > tol_res * sup * scale { Verdict::Resonance } else { Verdict::Eigenvalue };
    Ok(StateClass { verdict, c0, c1, l1: psi.l1(), l2: psi.l2(), sup, scale })
}

#[derive(Debug, Clone)]
pub struct Filtration {
    /// orthonormal balanced bases of X_1 ⊂ ... ⊂ X_K
    pub spaces: Vec<CMat>,
    pub dims: Vec<usize>,
}

impl Filtration {
    pub fn k_max(&self) -> usize {
        self.spaces.len()
    }

    /// Lengths of the Jordan chains implied by the dimensions, longest first.
    pub fn chain_lengths(&self) -> Vec<usize> {
        chain_lengths_from_dims(&self.dims)
    }
}

/// Chains of length >= k number d_k - d_{k-1}.
pub fn chain_lengths_from_dims(dims: &[usize]) -> Vec<usize> {
    let at = |k: usize| if k == 0 || dims.is_empty() { 0 } else { dims[(k - 1).min(dims.len() - 1)] };
    let mut out = Vec::new();
    for k in (1..=dims.len()).rev() {
        let ge_k = at(k) - at(k - 1);
        let ge_k1 = at(k + 1) - at(k);
        let ge_k1 = if k == dims.len() { 0 } else { ge_k1 };
        for _ in 0..ge_k.saturating_sub(ge_k1) {
            out.push(k);
        }
    }
    out
}

fn normalize_cols(a: &CMat) -> CMat {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        let n = linalg::vnorm(&linalg::col(a, j));
        if n > 0.0 {
            for i in 0..a.nrows() {
                out[(i, j)] = a[(i, j)] / n;
            }
        }
    }
    out
}

/// X_{k+1} from X_k by solving (I + R0(0) V) Psi = R0(0) Phi in the least-squares sense and
/// keeping the combinations of Phi for which the solve is exact.
pub fn build_filtration(v: &PotentialSpec, tol_rank: f64, max_steps: usize) -> Result<Filtration> {
    let grid = v.grid();
    let x1 = nullspace_x1(v, tol_rank)?;
    if x1.is_empty() {
        return Ok(Filtration { spaces: vec![], dims: vec![] });
    }
    let n = grid.len();
    let psi_cols: Vec<Vec<C64>> = x1.iter().map(|s| s.psi.balanced()).collect();
    let first = linalg::orth(&normalize_cols(&linalg::from_cols(&psi_cols, n)), 1e-10)?;
    let tp = build_bs_right(v, ResolventSpec::plus(0.0))?.into_balanced();
    let tp_pinv = linalg::pinv(&tp, tol_rank)?;
    let r0 = build_r0(grid, ResolventSpec::plus(0.0)).into_balanced();
    let mut spaces = vec![first];
    loop {
        if spaces.len() > max_steps {
            return Err(Error::NoStabilization(max_steps));
        }
        let phi = spaces.last().unwrap();
        let rhs = &r0 * phi;
        let sol = &tp_pinv * &rhs;
        let resid = &(&tp * &sol) - &rhs;
        let d = linalg::svd(&resid)?;
        let rhs_scale = linalg::singular_values(&rhs)?.first().copied().unwrap_or(0.0);
        let keep = d.s.iter().filter(|&&s| s > 1e-6 * rhs_scale).count();
        let m = phi.ncols();
        let ok = Mat::from_fn(m, m - keep, |i, j| d.v[(i, keep + j)]);
        if ok.ncols() == 0 {
            break;
        }
        let new = normalize_cols(&(&sol * &ok));
        let next = linalg::orth(&linalg::hstack(phi, &new), 1e-8)?;
        if next.ncols() <= phi.ncols() {
            break;
        }
        spaces.push(next);
    }
    let dims = spaces.iter().map(|s| s.ncols()).collect();
    Ok(Filtration { spaces, dims })
}

#[derive(Debug, Clone)]
pub struct JordanChain {
    pub k: usize,
    /// vectors[j - 1] = psi_{j,k}; N psi_{j,k} = psi_{j-1,k}
    pub vectors: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
pub struct JordanBasis {
    pub k_max: usize,
    /// L_k at index k - 1
    pub multiplicities: Vec<usize>,
    pub chains: Vec<JordanChain>,
    /// bilinear Gram matrix of all vectors, chain by chain with j ascending
    pub certificate: CMat,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Certificate {
    pub chain_residual: f64,
    pub pairing_residual: f64,
    pub dim: usize,
    pub dim_ok: bool,
}

/// The 0/1 pattern the Gram matrix must follow: 1 iff same chain and j1 + j2 = k + 1.
pub fn pairing_pattern(lengths: &[usize]) -> CMat {
    let d: usize = lengths.iter().sum();
    let mut p = Mat::<C64>::zeros(d, d);
    let mut o = 0;
    for &k in lengths {
        for j in 1..=k {
            p[(o + j - 1, o + k - j)] = one();
        }
        o += k;
    }
    p
}

impl JordanBasis {
    pub fn dim(&self) -> usize {
        self.chains.iter().map(|c| c.k).sum()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c.k).collect()
    }

    pub fn matrix(&self, rows: usize) -> CMat {
        let cols: Vec<Vec<C64>> = self.chains.iter().flat_map(|c| c.vectors.iter().cloned()).collect();
        linalg::from_cols(&cols, rows)
    }

    /// Chain action, pairing pattern and dimension count.
    pub fn verify(&self, n_op: &CMat, space_dim: usize) -> Certificate {
        let mut chain_residual = 0.0f64;
        for c in &self.chains {
            for j in 0..c.k {
                let nv = linalg::matvec(n_op, &c.vectors[j]);
                let r: Vec<C64> = if j == 0 {
                    nv
                } else {
                    nv.iter().zip(&c.vectors[j - 1]).map(|(a, b)| a - b).collect()
                };
                chain_residual = chain_residual.max(linalg::vnorm(&r));
            }
        }
        let pat = pairing_pattern(&self.lengths());
        let pairing_residual = linalg::max_abs(&(&self.certificate - &pat));
        Certificate { chain_residual, pairing_residual, dim: self.dim(), dim_ok: self.dim() == space_dim }
    }
}

fn mat_pow(n: &CMat, k: usize) -> CMat {
    let mut p = linalg::identity(n.nrows());
    for _ in 0..k {
        p = &p * n;
    }
    p
}

/// Chain lengths (longest first) from the ranks of N^k.
pub fn staircase(n_op: &CMat, tol: f64) -> Result<Vec<usize>> {
    let m = n_op.nrows();
    let thresh = tol * linalg::singular_values(n_op)?.first().copied().unwrap_or(0.0).max(1.0);
    let mut ranks = vec![m];
    let mut p = linalg::identity(m);
    for _ in 0..m {
        p = &p * n_op;
        let r = linalg::singular_values(&p)?.iter().filter(|&&s| s > thresh).count();
        ranks.push(r);
        if r == 0 {
            break;
        }
    }
    if *ranks.last().unwrap() != 0 {
        return Err(Error::NotNilpotent(linalg::singular_values(&p)?[0]));
    }
    let kk = ranks.len() - 1;
    // chains of length >= k: r_{k-1} - r_k
    let ge = |k: usize| if k > kk { 0 } else { ranks[k - 1] - ranks[k] };
    let mut out = Vec::new();
    for k in (1..=kk).rev() {
        for _ in 0..ge(k) - ge(k + 1) {
            out.push(k);
        }
    }
    Ok(out)
}

/// Self-dual Jordan basis of a nilpotent N that is symmetric for B(u, v) = u^T G v.
pub fn jordan_dual_basis(n_op: &CMat, g: &CMat, tol: f64) -> Result<JordanBasis> {
    let lengths = staircase(n_op, tol)?;
    jordan_dual_basis_with_structure(n_op, g, tol, &lengths)
}

pub fn jordan_dual_basis_with_structure(n_op: &CMat, g: &CMat, tol: f64, lengths: &[usize]) -> Result<JordanBasis> {
    let m = n_op.nrows();
    if lengths.iter().sum::<usize>() != m {
        return Err(Error::InvalidArgument("chain lengths do not add up to the dimension".into()));
    }
    let scale = linalg::fro(g).max(1e-300) * linalg::fro(n_op).max(1.0);
    let asym = linalg::max_abs(&(&(g * n_op) - &(&linalg::transpose(n_op) * g)));
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut lengths = lengths.to_vec();
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    let mut u = linalg::identity(m);
    let mut chains = Vec::new();
    for &k in &lengths {
        let nk1 = mat_pow(n_op, k - 1);
        // psi maximizing |N^{k-1} u| over the current space
        let d = linalg::svd(&(&nk1 * &u))?;
        let coeff = linalg::col(&d.v, 0);
        let psi = linalg::matvec(&u, &coeff);
        let npsi = linalg::matvec(&nk1, &psi);
        let row: Vec<C64> = (0..u.ncols()).map(|j| bform(g, &npsi, &linalg::col(&u, j))).collect();
        let rn = linalg::vnorm(&row);
        if rn <= tol * linalg::vnorm(&npsi) * linalg::fro(g) {
            return Err(Error::DegeneratePairing(k));
        }
        let phi = linalg::matvec(&u, &row.iter().map(|r| r.conj() / rn).collect::<Vec<_>>());
        let nphi = linalg::matvec(&nk1, &phi);
        let a = bform(g, &npsi, &psi);
        let b = bform(g, &npsi, &phi);
        let c = bform(g, &nphi, &phi);
        let z = smaller_root(a, b, c - one())?;
        let mut top: Vec<C64> = psi.iter().zip(&phi).map(|(p, f)| z * p + f).collect();
        // half-correction: kill B(N^m top, top) for m < k - 1, highest m first
        for mm in (0..k.saturating_sub(1)).rev() {
            let cm = bform(g, &linalg::matvec(&mat_pow(n_op, mm), &top), &top);
            let shift = linalg::matvec(&mat_pow(n_op, k - 1 - mm), &top);
            for (t, s) in top.iter_mut().zip(&shift) {
                *t -= 0.5 * cm * s;
            }
        }
        let vectors: Vec<Vec<C64>> = (1..=k).map(|j| linalg::matvec(&mat_pow(n_op, k - j), &top)).collect();
        // B-orthogonal complement of the chain inside the current space
        let mut proj = u.clone();
        for col in 0..u.ncols() {
            let x = linalg::col(&u, col);
            let mut y = x.clone();
            for j in 0..k {
                let coef = bform(g, &x, &vectors[k - 1 - j]);
                for (yi, vi) in y.iter_mut().zip(&vectors[j]) {
                    *yi -= coef * vi;
                }
            }
            for i in 0..m {
                proj[(i, col)] = y[i];
            }
        }
        let keep = u.ncols() - k;
        let dp = linalg::svd(&proj)?;
        u = Mat::from_fn(m, keep, |i, j| dp.u[(i, j)]);
        chains.push(JordanChain { k, vectors });
    }
    let k_max = lengths.first().copied().unwrap_or(0);
    let multiplicities = (1..=k_max).map(|k| lengths.iter().filter(|&&l| l == k).count()).collect();
    let cols: Vec<Vec<C64>> = chains.iter().flat_map(|c| c.vectors.iter().cloned()).collect();
    let vm = linalg::from_cols(&cols, m);
    let certificate = &(&linalg::transpose(&vm) * g) * &vm;
    Ok(JordanBasis { k_max, multiplicities, chains, certificate })
}

/// Root of a z^2 + 2 b z + c = 0 of smaller modulus, ties broken towards Re z >= 0.
fn smaller_root(a: C64, b: C64, c: C64) -> Result<C64> {
    if a.norm() <= 1e-12 * (b.norm() + c.norm() + 1.0) {
        if b.norm() == 0.0 {
            return Err(Error::DegeneratePairing(0));
        }
        return Ok(-c / (2.0 * b));
    }
    let disc = (b * b - a * c).sqrt();
    let (z1, z2) = ((-b + disc) / a, (-b - disc) / a);
    let (n1, n2) = (z1.norm(), z2.norm());
    if (n1 - n2).abs() <= 1e-12 * n1.max(n2) {
        return Ok(if z1.re >= 0.0 { z1 } else { z2 });
    }
    Ok(if n1 < n2 { z1 } else { z2 })
}

#[derive(Debug, Clone)]
pub struct ThresholdBasis {
    pub grid: Arc<Grid>,
    pub k_max: usize,
    pub multiplicities: Vec<usize>,
    /// chains[c][j - 1] = psi_{j,k}, H psi_{j,k} = psi_{j-1,k}
    pub chains: Vec<Vec<GridFunction>>,
    pub certificate: CMat,
}

impl ThresholdBasis {
    pub fn empty(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), k_max: 0, multiplicities: vec![], chains: vec![], certificate: Mat::zeros(0, 0) }
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c.len()).collect()
    }

    pub fn pairing_residual(&self) -> f64 {
        linalg::max_abs(&(&self.certificate - &pairing_pattern(&self.lengths())))
    }

    /// max over the chains of ||H psi_j - psi_{j-1}||_1 for the given Hamiltonian.
    pub fn chain_residual(&self, h: &DenseOperator) -> Result<f64> {
        let mut worst = 0.0f64;
        for c in &self.chains {
            for j in 0..c.len() {
                let hv = h.apply(&c[j])?;
                let r = if j == 0 { hv } else { hv.sub(&c[j - 1])? };
                worst = worst.max(r.l1());
            }
        }
        Ok(worst)
    }

    fn from_jordan(grid: &Arc<Grid>, q: &CMat, jb: &JordanBasis) -> Self {
        let chains = jb
            .chains
            .iter()
            .map(|c| c.vectors.iter().map(|v| GridFunction::from_balanced(grid, &linalg::matvec(q, v))).collect())
            .collect();
        Self {
            grid: grid.clone(),
            k_max: jb.k_max,
            multiplicities: jb.multiplicities.clone(),
            chains,
            certificate: jb.certificate.clone(),
        }
    }
}

/// Jordan basis of H restricted to an invariant subspace with orthonormal balanced basis q,
/// after shifting by `center`.
fn restricted_basis(h: &CMat, q: &CMat, center: C64, tol: f64, lengths: Option<&[usize]>) -> Result<JordanBasis> {
    let m = q.ncols();
    let mut nm = &(&linalg::adjoint(q) * h) * q;
    for i in 0..m {
        nm[(i, i)] -= center;
    }
    let g = &linalg::transpose(q) * q;
    match lengths {
        Some(l) => jordan_dual_basis_with_structure(&nm, &g, tol, l),
        None => jordan_dual_basis(&nm, &g, tol),
    }
}

/// Jordan basis of the zero-energy space of H = -Δ + V, lifted to grid functions.
pub fn build_threshold_basis(v: &PotentialSpec, tol_rank: f64) -> Result<(ThresholdBasis, Filtration)> {
    let grid = v.grid();
    let filt = build_filtration(v, tol_rank, grid.len())?;
    if filt.spaces.is_empty() {
        return Ok((ThresholdBasis::empty(grid), filt));
    }
    let q = filt.spaces.last().unwrap();
    let h = discretize_h(v)?;
    let lengths = filt.chain_lengths();
    let jb = restricted_basis(h.balanced(), q, zero(), TOL_STRUCT, Some(&lengths))?;
    Ok((ThresholdBasis::from_jordan(grid, q, &jb), filt))
}

/// P0 f = sum B(f, psi_{k+1-j,k}) psi_{j,k}.
pub fn build_p0(basis: &ThresholdBasis) -> DenseOperator {
    let mut p = DenseOperator::zeros(&basis.grid);
    for c in &basis.chains {
        let k = c.len();
        for j in 0..k {
            p = p.add(&DenseOperator::rank_one(&c[j], &c[k - 1 - j])).expect("same grid");
        }
    }
    p
}

/// P~0 f = sum B(f, psi_{1,k}) psi_{k,k}.
pub fn build_ptilde0(basis: &ThresholdBasis) -> DenseOperator {
    let mut p = DenseOperator::zeros(&basis.grid);
    for c in &basis.chains {
        p = p.add(&DenseOperator::rank_one(&c[c.len() - 1], &c[0])).expect("same grid");
    }
    p
}

pub fn build_qtilde0(basis: &ThresholdBasis) -> DenseOperator {
    DenseOperator::identity(&basis.grid).sub(&build_ptilde0(basis)).expect("same grid")
}

#[derive(Debug, Clone, Copy)]
pub struct PppOptions {
    /// eigenvalues with |Im| above this are point spectrum
    pub tol_imag: f64,
    /// defaults to 3x the lowest free eigenvalue
    pub delta_edge: Option<f64>,
    /// eigenvalues with larger real part are ignored; defaults to half the lattice band top
    pub energy_cap: Option<f64>,
    pub tol_cluster: f64,
    pub contour_nodes: usize,
    pub seed: u64,
}

impl Default for PppOptions {
    fn default() -> Self {
        Self { tol_imag: 0.2, delta_edge: None, energy_cap: None, tol_cluster: 1e-5, contour_nodes: 64, seed: 7 }
    }
}

fn lattice_band_top(grid: &Grid) -> f64 {
    let h2 = grid.spacing * grid.spacing;
    match grid.mode {
        GridMode::RadialSwave => 4.0 / h2,
        GridMode::Box3d => 12.0 / h2,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterInfo {
    pub center: (f64, f64),
    pub size: usize,
    pub chain_lengths: Vec<usize>,
    pub pairing_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PppReport {
    pub projector: DenseOperator,
    pub cluster_projectors: Vec<DenseOperator>,
    pub clusters: Vec<ClusterInfo>,
    pub delta_edge: f64,
}

fn projector_from_chains(grid: &Arc<Grid>, q: &CMat, jb: &JordanBasis) -> DenseOperator {
    build_p0(&ThresholdBasis::from_jordan(grid, q, jb))
}

/// Sum of the spectral projections onto the point-spectrum clusters of the discretized H,
/// plus P0 when a threshold basis is supplied.
pub fn build_ppp(v: &PotentialSpec, opts: &PppOptions, threshold: Option<&ThresholdBasis>) -> Result<PppReport> {
    let grid = v.grid();
    let h = discretize_h(v)?;
    let hb = h.balanced();
    let n = hb.nrows();
    let delta_edge = opts.delta_edge.unwrap_or_else(|| 3.0 * lowest_free_eigenvalue(grid));
    let eig = hb.eigenvalues().map_err(|e| Error::Backend(format!("eigenvalues: {e:?}")))?;
    let cap = opts.energy_cap.unwrap_or_else(|| 0.5 * lattice_band_top(grid));
    let mut point: Vec<C64> =
        eig.iter().copied().filter(|z| z.re <= cap && (z.re < -delta_edge || z.im.abs() > opts.tol_imag)).collect();
    point.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    // single-linkage clustering
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for z in point {
        match clusters.iter_mut().find(|c| c.iter().any(|w| (w - z).norm() <= opts.tol_cluster)) {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let centers: Vec<C64> = clusters.iter().map(|c| c.iter().sum::<C64>() / c.len() as f64).collect();
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            let d = (centers[a] - centers[b]).norm();
            if d < 10.0 * opts.tol_cluster {
                return Err(Error::ClusterAmbiguous(d));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut projector = match threshold {
        Some(t) => build_p0(t),
        None => DenseOperator::zeros(grid),
    };
    let mut infos = Vec::new();
    let mut cluster_projectors = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        let center = centers[ci];
        let m = c.len();
        let gap = eig
            .iter()
            .filter(|z| (*z - center).norm() > opts.tol_cluster * 2.0 + c.iter().map(|w| (w - center).norm()).fold(0.0, f64::max))
            .map(|z| (z - center).norm())
            .fold(f64::INFINITY, f64::min);
        let rho = 0.5 * gap;
        let cols = m + 4;
        let omega = Mat::from_fn(n, cols, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let mut acc = Mat::<C64>::zeros(n, cols);
        let nodes = opts.contour_nodes;
        for qn in 0..nodes {
            let th = 2.0 * std::f64::consts::PI * (qn as f64 + 0.5) / nodes as f64;
            let e = C64::from_polar(rho, th);
            let z = center + e;
            let zh = Mat::from_fn(n, n, |i, j| if i == j { z - hb[(i, j)] } else { -hb[(i, j)] });
            let y = linalg::solve(&zh, &omega)?;
            let w = e / nodes as f64;
            acc = &acc + &Mat::from_fn(n, cols, |i, j| y[(i, j)] * w);
        }
        let d = linalg::svd(&acc)?;
        let q = Mat::from_fn(n, m, |i, j| d.u[(i, j)]);
        let tol = (10.0 * opts.tol_cluster).max(TOL_STRUCT);
        let jb = restricted_basis(hb, &q, center, tol, None)?;
        let p = projector_from_chains(grid, &q, &jb);
        infos.push(ClusterInfo {
            center: (center.re, center.im),
            size: m,
            chain_lengths: jb.chains.iter().map(|c| c.k).collect(),
            pairing_residual: linalg::max_abs(&(&jb.certificate - &pairing_pattern(&jb.chains.iter().map(|c| c.k).collect::<Vec<_>>()))),
        });
        projector = projector.add(&p)?;
        cluster_projectors.push(p);
    }
    Ok(PppReport { projector, cluster_projectors, clusters: infos, delta_edge })
}

/// Complex vectors c_1..c_k with c_a . c_b = 1 iff a + b = k + 1, else 0, built in the
/// coordinate directions starting at `offset` of a d-dimensional space.
fn self_dual_block(k: usize, offset: usize, d: usize) -> Vec<Vec<C64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![vec![zero(); d]; k];
    for j in 1..=k {
        let (a, b) = (offset + j - 1, offset + k - j);
        if a == b {
            out[j - 1][a] = one();
        } else if j < k + 1 - j {
            out[j - 1][a] = C64::new(s, 0.0);
            out[j - 1][b] = C64::new(0.0, s);
        } else {
            // partner j' = k + 1 - j < j owns direction b as its first slot
            out[j - 1][b] = C64::new(s, 0.0);
            out[j - 1][a] = C64::new(0.0, -s);
        }
    }
    out
}

/// Columns Z with Z^T Z = pairing pattern, one block per chain, in the given orthonormal
/// real frame q (n x d).
fn self_dual_frame(q: &CMat, lengths: &[usize]) -> CMat {
    let d: usize = lengths.iter().sum();
    let mut cols = Vec::with_capacity(d);
    let mut o = 0;
    for &k in lengths {
        for c in self_dual_block(k, o, d) {
            cols.push(linalg::matvec(q, &c));
        }
        o += k;
    }
    linalg::from_cols(&cols, q.nrows())
}

#[derive(Debug, Clone)]
pub struct ChainFixture {
    pub perturbation: PotentialSpec,
    /// the engineered chains, chains[c][j - 1] = psi_{j,k}
    pub chains: Vec<Vec<GridFunction>>,
    pub dims: Vec<usize>,
}

fn smooth_bump(r: f64, c: f64, w: f64) -> f64 {
    let x = (r - c) / w;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// A complex symmetric finite-rank F such that H0 + F has Jordan chains of the requested
/// lengths at zero energy, supported on compact bumps of the given spatial scale.
pub fn build_chain_fixture(grid: &Arc<Grid>, lengths: &[usize], scale: f64) -> Result<ChainFixture> {
    if grid.mode != GridMode::RadialSwave {
        return Err(Error::InvalidArgument("chain fixtures are radial".into()));
    }
    let d: usize = lengths.iter().sum();
    if d == 0 || lengths.contains(&0) {
        return Err(Error::InvalidArgument("need at least one chain of positive length".into()));
    }
    let n = grid.len();
    let mut last_err = String::new();
    for attempt in 0..3 {
        let shift = 0.05 * attempt as f64;
        let centres: Vec<f64> = (0..d).map(|i| (0.3 + shift + 0.2 * i as f64) * scale).collect();
        let w = 0.2 * scale;
        if centres.last().unwrap() + w >= grid.extent || d * 4 > n {
            return Err(Error::FixtureFailed(format!("{d} chain vectors do not fit on this grid")));
        }
        // real Gram-Schmidt on the bumps (balanced coordinates)
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for &c in &centres {
            let mut v: Vec<f64> = grid.radii.iter().map(|&r| smooth_bump(r, c, w)).collect();
            for _ in 0..2 {
                for b in &basis {
                    let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= p * y;
                    }
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv < 1e-8 {
                last_err = "bumps are not resolved by the grid".into();
                break;
            }
            basis.push(v.iter().map(|x| x / nv).collect());
        }
        if basis.len() < d {
            continue;
        }
        let q = Mat::from_fn(n, d, |i, j| C64::new(basis[j][i], 0.0));
        let psi = self_dual_frame(&q, lengths);
        let a = free_hamiltonian(grid).into_balanced();
        // Y = Psi J - A Psi with (Psi J)_j = psi_{j-1}
        let apsi = &a * &psi;
        let mut y = Mat::<C64>::zeros(n, d);
        let mut o = 0;
        for &k in lengths {
            for j in 0..k {
                for i in 0..n {
                    let prev = if j == 0 { zero() } else { psi[(i, o + j - 1)] };
                    y[(i, o + j)] = prev - apsi[(i, o + j)];
                }
            }
            o += k;
        }
        let gi = pairing_pattern(lengths);
        let pt = linalg::transpose(&psi);
        let yt = linalg::transpose(&y);
        let pty = &pt * &y;
        let f = &(&(&(&y * &gi) * &pt) + &(&(&psi * &gi) * &yt)) - &(&(&(&(&psi * &gi) * &pty) * &gi) * &pt);
        let op = DenseOperator::from_balanced(grid, f)?;
        let perturbation = PotentialSpec::from_operator(&format!("chain_fixture{lengths:?}"), op);
        let filt = build_filtration(&perturbation, TOL_RANK, 8)?;
        let mut expected = Vec::new();
        let kmax = *lengths.iter().max().unwrap();
        for k in 1..=kmax {
            expected.push(lengths.iter().map(|&l| l.min(k)).sum::<usize>());
        }
        if filt.dims != expected {
            last_err = format!("staircase {:?}, wanted {:?}", filt.dims, expected);
            continue;
        }
        let mut chains = Vec::new();
        let mut o = 0;
        for &k in lengths {
            chains.push((0..k).map(|j| GridFunction::from_balanced(grid, &linalg::col(&psi, o + j))).collect());
            o += k;
        }
        return Ok(ChainFixture { perturbation, chains, dims: filt.dims });
    }
    Err(Error::FixtureFailed(last_err))
}

/// Random nilpotent N, symmetric for the dot product, with the requested chain lengths:
/// N = Z (J G) Z^T with Z = O C, O complex orthogonal and C^T C = G.
pub fn random_nilpotent_fixture(rng: &mut impl Rng, lengths: &[usize]) -> Result<CMat> {
    let d: usize = lengths.iter().sum();
    let mut x = Mat::<C64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            x[(i, j)] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
    }
    let skew = &x - &linalg::transpose(&x);
    let nrm = linalg::fro(&skew).max(1e-300);
    let s = Mat::from_fn(d, d, |i, j| skew[(i, j)] / nrm * 1.5);
    let o = linalg::expm(&s)?;
    let z = self_dual_frame(&o, lengths);
    let mut jg = Mat::<C64>::zeros(d, d);
    let mut off = 0;
    for &k in lengths {
        for a in 1..k {
            jg[(off + a - 1, off + k - a - 1)] = one();
        }
        off += k;
    }
    Ok(&(&z * &jg) * &linalg::transpose(&z))
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMeta {
    pub mode: GridMode,
    #[serde(rename = "L")]
    pub extent: f64,
    #[serde(rename = "M")]
    pub nodes: usize,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        Self { mode: grid.mode, extent: grid.extent, nodes: grid.side }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub dims: Vec<usize>,
    pub verdicts: Vec<Verdict>,
    pub c0: Vec<f64>,
    pub k_max: usize,
    pub multiplicities: Vec<usize>,
    pub pairing_residual: f64,
    pub tol_rank: f64,
    pub tol_res: f64,
    pub grid: GridMeta,
}

pub fn threshold_report(v: &PotentialSpec, tol_rank: f64, tol_res: f64) -> Result<(ThresholdReport, ThresholdBasis)> {
    let x1 = nullspace_x1(v, tol_rank)?;
    let mut verdicts = Vec::new();
    let mut c0 = Vec::new();
    for s in &x1 {
        let c = classify_state(&s.psi, tol_res)?;
        verdicts.push(c.verdict);
        c0.push(c.c0.norm());
    }
    let (basis, filt) = build_threshold_basis(v, tol_rank)?;
    let report = ThresholdReport {
        dims: filt.dims.clone(),
        verdicts,
        c0,
        k_max: basis.k_max,
        multiplicities: basis.multiplicities.clone(),
        pairing_residual: if basis.is_empty() { 0.0 } else { basis.pairing_residual() },
        tol_rank,
        tol_res,
        grid: GridMeta::of(v.grid()),
    };
    Ok((report, basis))
}
