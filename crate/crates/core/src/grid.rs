//! Grids, sampled functions and dense operators.
//!
//! Operators are stored in *balanced* form `S = W^{1/2} M W^{-1/2}`, where `M` is the
//! matrix acting on nodal values and `W` the diagonal of 3-D quadrature weights. A
//! kernel operator `(Kf)(x_i) = sum_j K(x_i, y_j) w_j f_j` has `S = W^{1/2} K W^{1/2}`,
//! so symmetric kernels give symmetric `S`, the bilinear transpose is the plain
//! transpose and composition needs no weights at all.

use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::C64;

pub const DEFAULT_BOX_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridMode {
    RadialSwave,
    Box3d,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub mode: GridMode,
    pub extent: f64,
    pub spacing: f64,
    /// node count parameter: radial node count, or lattice points per axis
    pub side: usize,
    pub points: Vec<[f64; 3]>,
    /// |x| for every node
    pub radii: Vec<f64>,
    /// 3-D volume weights (4 pi r^2 h radially, h^3 in the box)
    pub weights: Vec<f64>,
    /// flat weights for reduced radial functions u = r psi (h), h^3 in the box
    pub reduced_weights: Vec<f64>,
    sqrt_w: Vec<f64>,
}

pub fn make_grid(mode: GridMode, extent: f64, node_count: usize) -> Result<Arc<Grid>> {
    make_grid_with_cap(mode, extent, node_count, DEFAULT_BOX_CAP)
}

pub fn make_grid_with_cap(mode: GridMode, extent: f64, node_count: usize, box_cap: usize) -> Result<Arc<Grid>> {
    if node_count < 8 {
        return Err(Error::InvalidGrid(format!("node count {node_count} < 8")));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
    }
    let grid = match mode {
        GridMode::RadialSwave => {
            let h = extent / node_count as f64;
            let radii: Vec<f64> = (0..node_count).map(|i| (i as f64 + 0.5) * h).collect();
            let points = radii.iter().map(|&r| [r, 0.0, 0.0]).collect();
            let weights: Vec<f64> = radii.iter().map(|&r| 4.0 * std::f64::consts::PI * r * r * h).collect();
            Grid {
                mode,
                extent,
                spacing: h,
                side: node_count,
                points,
                sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
                weights,
                reduced_weights: vec![h; node_count],
                radii,
            }
        }
        GridMode::Box3d => {
            if node_count > box_cap {
                return Err(Error::InvalidGrid(format!(
                    "box grid with {node_count}^3 nodes exceeds the dense cap {box_cap}^3"
                )));
            }
            let h = 2.0 * extent / node_count as f64;
            let axis: Vec<f64> = (0..node_count).map(|i| -extent + (i as f64 + 0.5) * h).collect();
            let mut points = Vec::with_capacity(node_count.pow(3));
            for &x in &axis {
                for &y in &axis {
                    for &z in &axis {
                        points.push([x, y, z]);
                    }
                }
            }
            let radii = points.iter().map(|p: &[f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).collect();
            let n = points.len();
            let w = h * h * h;
            Grid {
                mode,
                extent,
                spacing: h,
                side: node_count,
                points,
                radii,
                weights: vec![w; n],
                reduced_weights: vec![w; n],
                sqrt_w: vec![w.sqrt(); n],
            }
        }
    };
    Ok(Arc::new(grid))
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_w
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn same(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
        Arc::ptr_eq(a, b)
            || (a.mode == b.mode && a.side == b.side && a.extent == b.extent)
    }
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<Grid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples a function of |x|.
    pub fn from_radial(grid: &Arc<Grid>, f: impl Fn(f64) -> C64) -> Self {
        Self { grid: grid.clone(), values: grid.radii.iter().map(|&r| f(r)).collect() }
    }

    pub fn from_real_radial(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_radial(grid, |r| C64::new(f(r), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, other: &GridFunction) -> Result<()> {
        if !Grid::same(&self.grid, &other.grid) || self.len() != other.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("exponent p = {p} < 1")));
        }
        if p.is_infinite() {
            return Ok(self.values.iter().fold(0.0, |m, v| m.max(v.norm())));
        }
        let s: f64 = self.values.iter().zip(&self.grid.weights).map(|(v, w)| w * v.norm().powf(p)).sum();
        Ok(s.powf(1.0 / p))
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().zip(&self.grid.weights).map(|(v, w)| w * v.norm()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.values.iter().zip(&self.grid.weights).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Symmetric bilinear pairing sum_i w_i f_i g_i (no conjugation).
    pub fn bilinear_pair(&self, g: &GridFunction) -> Result<C64> {
        self.check(g)?;
        Ok(self
            .values
            .iter()
            .zip(&g.values)
            .zip(&self.grid.weights)
            .fold(C64::new(0.0, 0.0), |acc, ((a, b), w)| acc + a * b * *w))
    }

    /// Sesquilinear inner product sum_i w_i f_i conj(g_i).
    pub fn inner(&self, g: &GridFunction) -> Result<C64> {
        self.check(g)?;
        Ok(self
            .values
            .iter()
            .zip(&g.values)
            .zip(&self.grid.weights)
            .fold(C64::new(0.0, 0.0), |acc, ((a, b), w)| acc + a * b.conj() * *w))
    }

    pub fn conj(&self) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v.conj()).collect() }
    }

    pub fn abs(&self) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| C64::new(v.norm(), 0.0)).collect() }
    }

    pub fn scale(&self, a: C64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v * a).collect() }
    }

    pub fn add(&self, g: &GridFunction) -> Result<Self> {
        self.check(g)?;
        Ok(Self { grid: self.grid.clone(), values: self.values.iter().zip(&g.values).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, g: &GridFunction) -> Result<Self> {
        self.check(g)?;
        Ok(Self { grid: self.grid.clone(), values: self.values.iter().zip(&g.values).map(|(a, b)| a - b).collect() })
    }

    /// self + a*g
    pub fn axpy(&self, a: C64, g: &GridFunction) -> Result<Self> {
        self.check(g)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&g.values).map(|(x, y)| x + a * y).collect(),
        })
    }

    pub fn mul(&self, g: &GridFunction) -> Result<Self> {
        self.check(g)?;
        Ok(Self { grid: self.grid.clone(), values: self.values.iter().zip(&g.values).map(|(a, b)| a * b).collect() })
    }

    /// Values scaled by sqrt(w): the coordinates in which operators are stored.
    pub fn balanced(&self) -> Vec<C64> {
        self.values.iter().zip(self.grid.sqrt_weights()).map(|(v, s)| v * *s).collect()
    }

    pub fn from_balanced(grid: &Arc<Grid>, b: &[C64]) -> Self {
        Self { grid: grid.clone(), values: b.iter().zip(grid.sqrt_weights()).map(|(v, s)| v / *s).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OperatorKind {
    Kernel,
    Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub grid: Arc<Grid>,
    bal: CMat,
}

impl DenseOperator {
    /// Wraps a balanced matrix directly.
    pub fn from_balanced(grid: &Arc<Grid>, bal: CMat) -> Result<Self> {
        let n = grid.len();
        if bal.nrows() != n || bal.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "operator of shape {}x{} on a grid of {n} nodes",
                bal.nrows(),
                bal.ncols()
            )));
        }
        Ok(Self { grid: grid.clone(), bal })
    }

    pub fn new(grid: &Arc<Grid>, entries: &CMat, kind: OperatorKind) -> Result<Self> {
        let n = grid.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidArgument("operator shape does not match grid".into()));
        }
        let s = grid.sqrt_weights();
        let bal = match kind {
            OperatorKind::Kernel => Mat::from_fn(n, n, |i, j| entries[(i, j)] * (s[i] * s[j])),
            OperatorKind::Matrix => Mat::from_fn(n, n, |i, j| entries[(i, j)] * (s[i] / s[j])),
        };
        Ok(Self { grid: grid.clone(), bal })
    }

    pub fn from_kernel_fn(grid: &Arc<Grid>, k: impl Fn(usize, usize) -> C64) -> Self {
        let s = grid.sqrt_weights();
        let n = grid.len();
        Self { grid: grid.clone(), bal: Mat::from_fn(n, n, |i, j| k(i, j) * (s[i] * s[j])) }
    }

    pub fn identity(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), bal: linalg::identity(grid.len()) }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid: grid.clone(), bal: Mat::zeros(n, n) }
    }

    /// Multiplication by a function.
    pub fn diagonal(f: &GridFunction) -> Self {
        let n = f.len();
        Self { grid: f.grid.clone(), bal: Mat::from_fn(n, n, |i, j| if i == j { f.values[i] } else { C64::new(0.0, 0.0) }) }
    }

    /// Rank-one map g -> bilinear_pair(g, b) a.
    pub fn rank_one(a: &GridFunction, b: &GridFunction) -> Self {
        let (ab, bb) = (a.balanced(), b.balanced());
        let n = ab.len();
        Self { grid: a.grid.clone(), bal: Mat::from_fn(n, n, |i, j| ab[i] * bb[j]) }
    }

    pub fn dim(&self) -> usize {
        self.bal.nrows()
    }

    pub fn balanced(&self) -> &CMat {
        &self.bal
    }

    pub fn into_balanced(self) -> CMat {
        self.bal
    }

    /// Kernel samples K(x_i, y_j).
    pub fn kernel_entry(&self, i: usize, j: usize) -> C64 {
        let s = self.grid.sqrt_weights();
        self.bal[(i, j)] / (s[i] * s[j])
    }

    /// Entry of the matrix acting on nodal values.
    pub fn matrix_entry(&self, i: usize, j: usize) -> C64 {
        let s = self.grid.sqrt_weights();
        self.bal[(i, j)] * (s[j] / s[i])
    }

    pub fn to_matrix(&self) -> CMat {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| self.matrix_entry(i, j))
    }

    fn check(&self, other: &DenseOperator) -> Result<()> {
        if !Grid::same(&self.grid, &other.grid) || self.dim() != other.dim() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !Grid::same(&self.grid, &f.grid) || f.len() != self.dim() {
            return Err(Error::GridMismatch);
        }
        let y = linalg::matvec(&self.bal, &f.balanced());
        Ok(GridFunction::from_balanced(&self.grid, &y))
    }

    pub fn compose(&self, other: &DenseOperator) -> Result<Self> {
        self.check(other)?;
        Ok(Self { grid: self.grid.clone(), bal: &self.bal * &other.bal })
    }

    pub fn add(&self, other: &DenseOperator) -> Result<Self> {
        self.check(other)?;
        Ok(Self { grid: self.grid.clone(), bal: &self.bal + &other.bal })
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<Self> {
        self.check(other)?;
        Ok(Self { grid: self.grid.clone(), bal: &self.bal - &other.bal })
    }

    pub fn scale(&self, a: C64) -> Self {
        let n = self.dim();
        Self { grid: self.grid.clone(), bal: Mat::from_fn(n, n, |i, j| self.bal[(i, j)] * a) }
    }

    /// Adjoint with respect to the bilinear pairing.
    pub fn transpose_bilinear(&self) -> Self {
        Self { grid: self.grid.clone(), bal: linalg::transpose(&self.bal) }
    }

    pub fn conj(&self) -> Self {
        let n = self.dim();
        Self { grid: self.grid.clone(), bal: Mat::from_fn(n, n, |i, j| self.bal[(i, j)].conj()) }
    }

    /// Induced L1 -> L1 operator norm.
    pub fn operator_l1_norm(&self) -> f64 {
        let s = self.grid.sqrt_weights();
        let n = self.dim();
        let mut best = 0.0f64;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += s[i] * self.bal[(i, j)].norm();
            }
            best = best.max(col / s[j]);
        }
        best
    }

    /// Max entrywise distance in balanced coordinates.
    pub fn max_abs_diff(&self, other: &DenseOperator) -> Result<f64> {
        self.check(other)?;
        Ok(linalg::max_abs(&(&self.bal - &other.bal)))
    }
}
