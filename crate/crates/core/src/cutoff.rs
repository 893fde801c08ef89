//! The smooth cutoff chi (1 on [-1,1], 0 outside [-2,2]) and its Fourier transform.

use std::sync::OnceLock;

fn g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C-infinity step: 1 for s <= 0, 0 for s >= 1.
fn step(s: f64) -> f64 {
    let (a, b) = (g(1.0 - s), g(s));
    a / (a + b)
}

pub fn chi(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        step(a - 1.0)
    }
}

const QUAD: usize = 4096;

/// chi_hat(xi) = int chi(s) e^{-i s xi} ds (real and even).
pub fn chi_hat(xi: f64) -> f64 {
    // trapezoid on [0, 2]; the integrand is flat at both ends so this is spectrally accurate
    let h = 2.0 / QUAD as f64;
    let mut s = 0.5 * chi(0.0);
    for k in 1..QUAD {
        let t = k as f64 * h;
        s += chi(t) * (t * xi).cos();
    }
    2.0 * h * s
}

struct Table {
    dxi: f64,
    vals: Vec<f64>,
}

const XI_MAX: f64 = 400.0;

fn table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    T.get_or_init(|| {
        let dxi = 0.01;
        let n = (XI_MAX / dxi) as usize + 2;
        Table { dxi, vals: (0..n).map(|k| chi_hat(k as f64 * dxi)).collect() }
    })
}

/// Tabulated chi_hat with linear interpolation, zero beyond the table.
pub fn chi_hat_fast(xi: f64) -> f64 {
    let t = table();
    let x = xi.abs() / t.dxi;
    let k = x.floor() as usize;
    if k + 1 >= t.vals.len() {
        return 0.0;
    }
    let f = x - k as f64;
    t.vals[k] * (1.0 - f) + t.vals[k + 1] * f
}

/// L1 norm of chi_hat over the real line.
pub fn chi_hat_l1() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let t = table();
        let s: f64 = t.vals.iter().map(|v| v.abs()).sum::<f64>() - 0.5 * t.vals[0].abs();
        2.0 * s * t.dxi
    })
}

/// X(s) = int_0^s chi_hat, odd in s, tending to pi.
pub fn chi_hat_integral(s: f64) -> f64 {
    static C: OnceLock<Vec<f64>> = OnceLock::new();
    let t = table();
    let cum = C.get_or_init(|| {
        let mut c = vec![0.0; t.vals.len()];
        for k in 1..t.vals.len() {
            c[k] = c[k - 1] + 0.5 * t.dxi * (t.vals[k] + t.vals[k - 1]);
        }
        c
    });
    let x = s.abs() / t.dxi;
    let k = x.floor() as usize;
    let v = if k + 1 >= cum.len() {
        std::f64::consts::PI
    } else {
        let f = x - k as f64;
        cum[k] + f * t.dxi * (t.vals[k] + 0.5 * f * (t.vals[k + 1] - t.vals[k]))
    };
    v.copysign(s)
}

/// Phi(s) = int |chi_hat(sigma - s) - chi_hat(sigma)| d sigma, tabulated on [0, S], with its
/// running integral.
pub struct ShiftTable {
    pub ds: f64,
    pub phi: Vec<f64>,
    pub cum: Vec<f64>,
}

pub fn shift_table() -> &'static ShiftTable {
    static T: OnceLock<ShiftTable> = OnceLock::new();
    T.get_or_init(|| {
        let ds = 0.05;
        let smax = 100.0;
        let n = (smax / ds) as usize + 1;
        let dsig = 0.02;
        let span = XI_MAX * 0.9;
        let m = (2.0 * span / dsig) as usize;
        let mut phi = Vec::with_capacity(n);
        for k in 0..n {
            let s = k as f64 * ds;
            let mut acc = 0.0;
            for q in 0..=m {
                let sig = -span + q as f64 * dsig + 0.5 * s;
                acc += (chi_hat_fast(sig - s) - chi_hat_fast(sig)).abs();
            }
            phi.push(acc * dsig);
        }
        let mut cum = vec![0.0; n];
        for k in 1..n {
            cum[k] = cum[k - 1] + 0.5 * ds * (phi[k] + phi[k - 1]);
        }
        ShiftTable { ds, phi, cum }
    })
}

impl ShiftTable {
    fn interp(&self, v: &[f64], s: f64) -> f64 {
        let x = s.abs() / self.ds;
        let k = x.floor() as usize;
        if k + 1 >= v.len() {
            return *v.last().unwrap();
        }
        let f = x - k as f64;
        v[k] * (1.0 - f) + v[k + 1] * f
    }

    pub fn phi_at(&self, s: f64) -> f64 {
        if s.abs() / self.ds + 1.0 >= self.phi.len() as f64 {
            return 2.0 * chi_hat_l1();
        }
        self.interp(&self.phi, s)
    }

    /// int_0^s Phi
    pub fn cum_at(&self, s: f64) -> f64 {
        let end = (self.phi.len() - 1) as f64 * self.ds;
        if s > end {
            return self.cum[self.cum.len() - 1] + (s - end) * 2.0 * chi_hat_l1();
        }
        self.interp(&self.cum, s)
    }
}

/// Window multipliers on the lambda axis.
pub fn window_low(lambda: f64, r: f64) -> f64 {
    chi(lambda / r)
}

pub fn window_mid(lambda: f64, lambda1: f64) -> f64 {
    chi(lambda / lambda1) - chi(lambda * lambda1)
}

pub fn window_high(lambda: f64, lambda1: f64) -> f64 {
    1.0 - chi(lambda / lambda1)
}

/// int chi = 3 by symmetry of the transition about 1.5; handy as a sanity value.
pub fn chi_integral() -> f64 {
    chi_hat(0.0)
}
