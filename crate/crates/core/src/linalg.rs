//! Thin helpers over faer for the dense complex algebra used everywhere else.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat};

use crate::error::{Error, Result};
use crate::C64;

pub type CMat = Mat<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// Max column sum of moduli (the plain matrix 1-norm).
pub fn norm1(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let mut s = 0.0;
        for i in 0..a.nrows() {
            s += a[(i, j)].norm();
        }
        best = best.max(s);
    }
    best
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max(a[(i, j)].norm());
        }
    }
    best
}

pub fn fro(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn transpose(a: &CMat) -> CMat {
    a.transpose().to_owned()
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn from_cols(cols: &[Vec<C64>], n: usize) -> CMat {
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

pub fn col(a: &CMat, j: usize) -> Vec<C64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn matvec(a: &CMat, x: &[C64]) -> Vec<C64> {
    let xc = Col::from_fn(x.len(), |i| x[i]);
    let y = a * &xc;
    (0..y.nrows()).map(|i| y[i]).collect()
}

pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
}

pub fn vnorm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn all_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Inverse via partial-pivot LU.
pub fn inverse(a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument("inverse of a non-square matrix".into()));
    }
    let inv = a.partial_piv_lu().inverse();
    if !all_finite(&inv) {
        return Err(Error::NearSingular { cond: f64::INFINITY, lambda: None });
    }
    Ok(inv)
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let x = a.partial_piv_lu().solve(b);
    if !all_finite(&x) {
        return Err(Error::NearSingular { cond: f64::INFINITY, lambda: None });
    }
    Ok(x)
}

pub fn solve_vec(a: &CMat, b: &[C64]) -> Result<Vec<C64>> {
    let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = solve(a, &bm)?;
    Ok(col(&x, 0))
}

pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Result<Svd> {
    let d = a.svd().map_err(|e| Error::Backend(format!("svd: {e:?}")))?;
    let s = d.S().column_vector().iter().map(|x| x.re).collect();
    Ok(Svd { u: d.U().to_owned(), s, v: d.V().to_owned() })
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| Error::Backend(format!("svd: {e:?}")))
}

/// Number of singular values above `tol_rel * s_max`.
pub fn numerical_rank(s: &[f64], tol_rel: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol_rel * smax).count()
}

/// Orthonormal basis of the numerical null space (right singular vectors).
pub fn null_space(a: &CMat, tol_rel: f64) -> Result<CMat> {
    let d = svd(a)?;
    let r = numerical_rank(&d.s, tol_rel);
    let n = a.ncols();
    Ok(Mat::from_fn(n, n - r, |i, j| d.v[(i, r + j)]))
}

/// Orthonormal basis of the numerical range.
pub fn orth(a: &CMat, tol_rel: f64) -> Result<CMat> {
    if a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let d = svd(a)?;
    let r = numerical_rank(&d.s, tol_rel);
    Ok(Mat::from_fn(a.nrows(), r, |i, j| d.u[(i, j)]))
}

pub fn pinv(a: &CMat, tol_rel: f64) -> Result<CMat> {
    let d = svd(a)?;
    let r = numerical_rank(&d.s, tol_rel);
    let mut out = Mat::<C64>::zeros(a.ncols(), a.nrows());
    for k in 0..r {
        let inv = 1.0 / d.s[k];
        for j in 0..a.nrows() {
            let uc = d.u[(j, k)].conj() * inv;
            for i in 0..a.ncols() {
                out[(i, j)] += d.v[(i, k)] * uc;
            }
        }
    }
    Ok(out)
}

pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows().max(b.nrows());
    Mat::from_fn(n, a.ncols() + b.ncols(), |i, j| if j < a.ncols() { a[(i, j)] } else { b[(i, j - a.ncols())] })
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with the degree-13 Pade approximant.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let theta13 = 5.371920351148152;
    let nrm = norm1(a);
    let s = if nrm > theta13 { (nrm / theta13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1 = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + id[(i, j)] * c0
        })
    };
    let inner_u = Mat::from_fn(n, n, |i, j| a6[(i, j)] * b[13] + a4[(i, j)] * b[11] + a2[(i, j)] * b[9]);
    let u_poly = &(&a6 * &inner_u) + &lin(b[7], b[5], b[3], b[1]);
    let u = &a1 * &u_poly;
    let inner_v = Mat::from_fn(n, n, |i, j| a6[(i, j)] * b[12] + a4[(i, j)] * b[10] + a2[(i, j)] * b[8]);
    let v = &(&a6 * &inner_v) + &lin(b[6], b[4], b[2], b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}
