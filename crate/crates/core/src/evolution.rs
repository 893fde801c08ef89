//! Discretized Hamiltonian, the propagator e^{-itH} and decay measurements.
//!
//! Radially the Hamiltonian acts on reduced functions u = r psi with the three-point
//! Laplacian, a Dirichlet condition at the origin (ghost value u_{-1} = -u_0) and a
//! Neumann condition at the outer radius. In balanced coordinates this is exactly the
//! tridiagonal matrix on u, so `free_hamiltonian` inverts `build_r0` at zero energy.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::linear_fit_with_error;
use crate::grid::{DenseOperator, Grid, GridFunction, GridMode};
use crate::linalg::{self, CMat};
use crate::potentials::PotentialSpec;
use crate::resolvent::{build_r0, ResolventSpec};
use crate::C64;

pub fn free_hamiltonian(grid: &Arc<Grid>) -> DenseOperator {
    let n = grid.len();
    let h2 = grid.spacing * grid.spacing;
    let z = C64::new(0.0, 0.0);
    let bal = match grid.mode {
        GridMode::RadialSwave => Mat::from_fn(n, n, |i, j| {
            if i == j {
                let d = if i == 0 {
                    3.0
                } else if i == n - 1 {
                    1.0
                } else {
                    2.0
                };
                C64::new(d / h2, 0.0)
            } else if i.abs_diff(j) == 1 {
                C64::new(-1.0 / h2, 0.0)
            } else {
                z
            }
        }),
        GridMode::Box3d => {
            let m = grid.side;
            let idx = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
            let mut mat = Mat::<C64>::zeros(n, n);
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        let i = idx(a, b, c);
                        mat[(i, i)] = C64::new(6.0 / h2, 0.0);
                        let mut link = |j: usize| mat[(i, j)] = C64::new(-1.0 / h2, 0.0);
                        if a > 0 {
                            link(idx(a - 1, b, c));
                        }
                        if a + 1 < m {
                            link(idx(a + 1, b, c));
                        }
                        if b > 0 {
                            link(idx(a, b - 1, c));
                        }
                        if b + 1 < m {
                            link(idx(a, b + 1, c));
                        }
                        if c > 0 {
                            link(idx(a, b, c - 1));
                        }
                        if c + 1 < m {
                            link(idx(a, b, c + 1));
                        }
                    }
                }
            }
            mat
        }
    };
    DenseOperator::from_balanced(grid, bal).expect("square by construction")
}

/// H = -Δ_grid + V.
pub fn discretize_h(v: &PotentialSpec) -> Result<DenseOperator> {
    free_hamiltonian(v.grid()).add(&v.operator)
}

/// Exact low eigenvalues of the free radial lattice Hamiltonian: wavenumbers
/// k = (n - 1/2) pi / L from the boundary conditions, dispersion (2 - 2 cos kh)/h^2.
pub fn free_radial_eigenvalues(grid: &Grid, count: usize) -> Vec<f64> {
    let h = grid.spacing;
    (1..=count)
        .map(|n| {
            let k = (n as f64 - 0.5) * PI / grid.extent;
            (2.0 - 2.0 * (k * h).cos()) / (h * h)
        })
        .collect()
}

pub fn lowest_free_eigenvalue(grid: &Grid) -> f64 {
    match grid.mode {
        GridMode::RadialSwave => free_radial_eigenvalues(grid, 1)[0],
        GridMode::Box3d => {
            let h = grid.spacing;
            let m = grid.side as f64;
            3.0 * (2.0 - 2.0 * (PI / (m + 1.0)).cos()) / (h * h)
        }
    }
}

/// Ballistic reflection horizon 0.8 L / (2 k_max).
pub fn t_max_heuristic(grid: &Grid, k_max: f64) -> f64 {
    0.8 * grid.extent / (2.0 * k_max)
}

/// Largest wavenumber carried with appreciable weight by a Gaussian of the given width.
pub fn gaussian_k_max(width: f64) -> f64 {
    3.0 / width
}

/// Lattice cutoff pi/h.
pub fn lattice_k_max(grid: &Grid) -> f64 {
    PI / grid.spacing
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    ExpmSquaring,
    EigenDecomp,
}

pub const EIGEN_COND_MAX: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct PropagatorPlan {
    pub h: DenseOperator,
    pub times: Vec<f64>,
    pub method: Method,
    pub t_max: f64,
    /// step of the precomputed exponential
    pub dt: f64,
}

impl PropagatorPlan {
    pub fn new(h: DenseOperator, times: Vec<f64>, method: Method, t_max: f64) -> Result<Self> {
        if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("times must be nondecreasing".into()));
        }
        Ok(Self { h, times, method, t_max, dt: 0.05 })
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn exceeds_horizon(&self) -> bool {
        self.times.last().is_some_and(|&t| t > self.t_max)
    }
}

/// `count` geometrically spaced times on [a, b].
pub fn geometric_times(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let r = (b / a).ln() / (count - 1) as f64;
    (0..count).map(|k| a * (r * k as f64).exp()).collect()
}

/// e^{-i tau H} v by Taylor substeps of norm at most one.
pub fn expm_action(h: &CMat, tau: f64, v: &[C64]) -> Vec<C64> {
    if tau == 0.0 {
        return v.to_vec();
    }
    let steps = (linalg::norm1(h) * tau.abs()).ceil().max(1.0) as usize;
    let s = tau / steps as f64;
    let mut x = v.to_vec();
    let mi = C64::new(0.0, -s);
    for _ in 0..steps {
        let mut term = x.clone();
        let mut acc = x.clone();
        for k in 1..60 {
            term = linalg::matvec(h, &term).into_iter().map(|t| t * mi / k as f64).collect();
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            if linalg::vnorm(&term) <= 1e-17 * linalg::vnorm(&acc) {
                break;
            }
        }
        x = acc;
    }
    x
}

enum Engine {
    Expm { step: CMat },
    Eigen { vecs: CMat, vals: Vec<C64>, inv: CMat },
}

/// A plan with its exponential (or eigendecomposition) precomputed.
pub struct Propagator {
    pub plan: PropagatorPlan,
    engine: Engine,
}

impl Propagator {
    pub fn build(plan: PropagatorPlan) -> Result<Self> {
        let h = plan.h.balanced();
        let engine = match plan.method {
            Method::ExpmSquaring => {
                let n = h.nrows();
                let a = Mat::from_fn(n, n, |i, j| h[(i, j)] * C64::new(0.0, -plan.dt));
                Engine::Expm { step: linalg::expm(&a)? }
            }
            Method::EigenDecomp => {
                let e = h.eigen().map_err(|e| Error::Backend(format!("eigen: {e:?}")))?;
                let vecs = e.U().to_owned();
                let sv = linalg::singular_values(&vecs)?;
                let cond = sv[0] / sv[sv.len() - 1];
                if !(cond <= EIGEN_COND_MAX) {
                    return Err(Error::NearDefective(cond));
                }
                let vals = e.S().column_vector().iter().copied().collect();
                let inv = linalg::inverse(&vecs)?;
                Engine::Eigen { vecs, vals, inv }
            }
        };
        Ok(Self { plan, engine })
    }

    fn advance(&self, x: &[C64], tau: f64) -> Vec<C64> {
        match &self.engine {
            Engine::Expm { step } => {
                let dt = self.plan.dt;
                let n = (tau / dt + 1e-9).floor() as usize;
                let mut y = x.to_vec();
                for _ in 0..n {
                    y = linalg::matvec(step, &y);
                }
                let rem = tau - n as f64 * dt;
                if rem.abs() > 1e-12 * tau.max(1.0) {
                    y = expm_action(self.plan.h.balanced(), rem, &y);
                }
                y
            }
            Engine::Eigen { vecs, vals, inv } => {
                let c = linalg::matvec(inv, x);
                let c: Vec<C64> =
                    c.iter().zip(vals).map(|(ci, l)| ci * (C64::new(0.0, -tau) * l).exp()).collect();
                linalg::matvec(vecs, &c)
            }
        }
    }

    /// e^{-i t_k H} f for every plan time.
    pub fn propagate(&self, f: &GridFunction) -> Result<Vec<GridFunction>> {
        if !Grid::same(&f.grid, &self.plan.h.grid) {
            return Err(Error::GridMismatch);
        }
        let grid = &f.grid;
        let mut out = Vec::with_capacity(self.plan.times.len());
        let mut x = f.balanced();
        let mut t = 0.0;
        for &tk in &self.plan.times {
            x = self.advance(&x, tk - t);
            t = tk;
            out.push(GridFunction::from_balanced(grid, &x));
        }
        Ok(out)
    }
}

pub fn propagate(plan: &PropagatorPlan, f: &GridFunction) -> Result<Vec<GridFunction>> {
    Propagator::build(plan.clone())?.propagate(f)
}

/// Free evolution of the L1-normalized Gaussian pi^{-3/2} sigma^{-3} e^{-r^2/sigma^2},
/// i.e. its convolution with the complex Gaussian kernel, in closed form.
pub fn free_gaussian_evolution(sigma: f64, t: f64, r: f64) -> C64 {
    let s2 = C64::new(sigma * sigma, 4.0 * t);
    let a = C64::new(sigma * sigma, 0.0) / s2;
    a.powf(1.5) * (-(r * r) / s2).exp() / (PI.powf(1.5) * sigma.powi(3))
}

pub fn gaussian_bump(grid: &Arc<Grid>, sigma: f64) -> GridFunction {
    GridFunction::from_real_radial(grid, |r| (-(r / sigma).powi(2)).exp() / (PI.powf(1.5) * sigma.powi(3)))
}

fn inner_sup(g: &GridFunction) -> f64 {
    let lim = 0.5 * g.grid.extent;
    g.values
        .iter()
        .zip(&g.grid.radii)
        .filter(|(_, &r)| r <= lim)
        .fold(0.0, |m, (v, _)| m.max(v.norm()))
}

fn project_out(f: &GridFunction, p: Option<&DenseOperator>) -> Result<GridFunction> {
    match p {
        Some(p) => f.sub(&p.apply(f)?),
        None => Ok(f.clone()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub exponent: f64,
    pub stderr: f64,
    pub constant: f64,
    pub fit_window: (f64, f64),
    pub t_max: f64,
    pub exceeds_horizon: bool,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,sup_norm,l2_norm,fitted_exponent,fit_window,T_max\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{},{},{}:{},{}\n",
                self.times[k], self.sup_norms[k], self.l2_norms[k], self.exponent, self.fit_window.0, self.fit_window.1, self.t_max
            ));
        }
        s
    }
}

/// Sup norm (inner half of the domain) of e^{-itH}(I - P)f and its fitted power of t over
/// [t_fit_min, T_max].
pub fn dispersive_scan(
    prop: &Propagator,
    f: &GridFunction,
    p: Option<&DenseOperator>,
    t_fit_min: f64,
) -> Result<DecayReport> {
    let g = project_out(f, p)?;
    let states = prop.propagate(&g)?;
    let times = prop.plan.times.clone();
    let sup_norms: Vec<f64> = states.iter().map(inner_sup).collect();
    let l2_norms: Vec<f64> = states.iter().map(|s| s.l2()).collect();
    let t_max = prop.plan.t_max;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &t) in times.iter().enumerate() {
        if t >= t_fit_min && t <= t_max * (1.0 + 1e-12) && t > 0.0 && sup_norms[k] > 0.0 {
            xs.push(t.ln());
            ys.push(sup_norms[k].ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument("fewer than 3 times inside the fit window".into()));
    }
    let (a, b) = (xs[0].exp(), xs[xs.len() - 1].exp());
    if b / a < 10f64.sqrt() * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!("fit window [{a}, {b}] spans less than half a decade")));
    }
    let (slope, icpt, se) = linear_fit_with_error(&xs, &ys);
    Ok(DecayReport {
        exceeds_horizon: prop.plan.exceeds_horizon(),
        times,
        sup_norms,
        l2_norms,
        exponent: slope,
        stderr: se,
        constant: icpt.exp(),
        fit_window: (a, b),
        t_max,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct L2Report {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub f_norm: f64,
    pub ratio_sup: f64,
}

/// ||e^{-itH}(I - P)f||_2 over the plan times, with sup_t of its ratio to ||f||_2.
pub fn l2_stability_scan(prop: &Propagator, f: &GridFunction, p: Option<&DenseOperator>) -> Result<L2Report> {
    let g = project_out(f, p)?;
    let norms: Vec<f64> = prop.propagate(&g)?.iter().map(|s| s.l2()).collect();
    let f_norm = f.l2();
    if f_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let ratio_sup = norms.iter().fold(0.0f64, |m, v| m.max(*v)) / f_norm;
    Ok(L2Report { times: prop.plan.times.clone(), norms, f_norm, ratio_sup })
}

#[derive(Debug, Clone, Serialize)]
pub struct StoneReport {
    pub t: f64,
    pub lambda_cap: f64,
    pub n_quad: usize,
    pub discrepancy: f64,
    pub reference_sup: f64,
    pub integral_sup: f64,
}

/// Spectral-integral representation of the evolution, compared with the direct propagator.
/// The energy integral over [0, lambda_cap] is taken in mu = sqrt(E) with midpoint nodes,
/// so zero energy is never sampled.
pub fn stone_check(
    v: &PotentialSpec,
    f: &GridFunction,
    t: f64,
    lambda_cap: f64,
    n_quad: usize,
    p: Option<&DenseOperator>,
) -> Result<StoneReport> {
    if n_quad == 0 || !(lambda_cap > 0.0) {
        return Err(Error::InvalidArgument("need n_quad > 0 and lambda_cap > 0".into()));
    }
    let grid = v.grid().clone();
    let g = project_out(f, p)?;
    let h = discretize_h(v)?;
    let reference = GridFunction::from_balanced(&grid, &expm_action(h.balanced(), t, &g.balanced()));

    let n = grid.len();
    let mu_max = lambda_cap.sqrt();
    let dmu = mu_max / n_quad as f64;
    let gb = g.balanced();
    let vb = v.operator.balanced();
    let mut acc = vec![C64::new(0.0, 0.0); n];
    for q in 0..n_quad {
        let mu = (q as f64 + 0.5) * dmu;
        let mut diff = vec![C64::new(0.0, 0.0); n];
        for (spec, sgn) in [(ResolventSpec::plus(mu), 1.0), (ResolventSpec::minus(mu), -1.0)] {
            let r0 = build_r0(&grid, spec).into_balanced();
            let t_mat = &linalg::identity(n) + &(vb * &r0);
            let y = linalg::solve_vec(&t_mat, &gb)?;
            let ry = linalg::matvec(&r0, &y);
            for (d, x) in diff.iter_mut().zip(ry) {
                *d += x * sgn;
            }
        }
        let wgt = (C64::new(0.0, -t * mu * mu)).exp() * (2.0 * mu * dmu) / C64::new(0.0, 2.0 * PI);
        for (a, d) in acc.iter_mut().zip(diff) {
            *a += d * wgt;
        }
    }
    let integral = GridFunction::from_balanced(&grid, &acc);
    let reference_sup = inner_sup(&reference);
    let discrepancy = inner_sup(&integral.sub(&reference)?) / reference_sup.max(f64::MIN_POSITIVE);
    Ok(StoneReport { t, lambda_cap, n_quad, discrepancy, reference_sup, integral_sup: inner_sup(&integral) })
}
