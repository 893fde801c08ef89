use std::f64::consts::PI;
use std::sync::Arc;

use nsadisp::cutoff::{chi_hat, chi_hat_l1};
use nsadisp::ft_diagnostics::{
    dlambda_kernel_check, k2_bound_check, mass_near, scalar_scan, t_hat_l1_scan, vb_hat_bound_check, vb_hat_constant,
    Evaluator, LambdaGrid, ScanVerdict, Window,
};
use nsadisp::low_energy::build_s0;
use nsadisp::potentials::gaussian_well;
use nsadisp::threshold::{build_chain_fixture, build_threshold_basis, ThresholdBasis};
use nsadisp::{make_grid, Grid, GridFunction, GridMode, PotentialSpec, C64};

fn radial(l: f64, m: usize) -> Arc<Grid> {
    make_grid(GridMode::RadialSwave, l, m).unwrap()
}

fn one(_: f64) -> C64 {
    C64::new(1.0, 0.0)
}

#[test]
fn lambda_grid_layout() {
    assert!(LambdaGrid::new(1, 0.1).is_err());
    assert!(LambdaGrid::new(12, 0.1).is_err());
    assert!(LambdaGrid::new(16, 0.0).is_err());
    let g = LambdaGrid::covering(16, 2.0).unwrap();
    let l = g.lambdas();
    assert!((l[0] + l[15]).abs() < 1e-15 && (l[15] - 2.0 + 0.125).abs() < 1e-15);
    assert!(l.iter().all(|x| x.abs() >= 0.125 - 1e-15));
    let d = g.doubled();
    assert_eq!(d.n, 32);
    assert!((d.n as f64 * d.delta_lambda - 4.0).abs() < 1e-14);
    assert!((d.delta_rho() - g.delta_rho()).abs() < 1e-14);
    assert_eq!(d.rhos().len(), 2 * g.rhos().len());
    let rho = g.rhos();
    assert!(rho.windows(2).all(|w| (w[1] - w[0] - g.delta_rho()).abs() < 1e-12));
    assert_eq!(rho[8], 0.0);
}

#[test]
fn cutoff_transform_matches_chi_hat() {
    // int chi(lambda / r) e^{-i lambda rho} d lambda = r chi_hat(r rho)
    let r = 0.7;
    let grid = LambdaGrid::covering(4096, 32.0 * r).unwrap();
    let scan = scalar_scan(one, Window::Low { r }, grid);
    for (q, &rho) in scan.rho.iter().enumerate().step_by(97) {
        let want = (r * chi_hat(r * rho)).abs();
        assert!((scan.transform[q][0].norm() - want).abs() < 1e-8, "rho {rho}");
    }
    assert!((scan.total - chi_hat_l1()).abs() < 1e-3 * chi_hat_l1(), "{}", scan.total);
    assert_eq!(scan.verdict, ScanVerdict::Bounded);
}

#[test]
fn discrete_parseval() {
    let grid = LambdaGrid::covering(512, 6.0).unwrap();
    let phi = |l: f64| C64::new((-l * l).exp(), l * (-l * l / 2.0).exp());
    let scan = scalar_scan(phi, Window::Full, grid);
    let lhs: f64 = scan.transform.iter().map(|v| v[0].norm_sqr()).sum::<f64>() * grid.delta_rho();
    let rhs: f64 = grid.lambdas().iter().map(|&l| phi(l).norm_sqr()).sum::<f64>() * grid.delta_lambda * 2.0 * PI;
    assert!((lhs - rhs).abs() < 1e-12 * rhs);
}

#[test]
fn windows_add_up_to_the_full_transform() {
    let grid = LambdaGrid::covering(1024, 12.0).unwrap();
    let phi = |l: f64| C64::from_polar(1.0 / (1.0 + l * l), 0.3 * l);
    let l1 = 2.0;
    let full = scalar_scan(phi, Window::Full, grid);
    let parts = [Window::Low { r: 1.0 / l1 }, Window::Mid { lambda1: l1 }, Window::High { lambda1: l1 }]
        .map(|w| scalar_scan(phi, w, grid));
    for q in 0..grid.n {
        let s: C64 = parts.iter().map(|p| p.transform[q][0]).sum();
        assert!((s - full.transform[q][0]).norm() < 1e-12);
    }
    assert!(parts.iter().map(|p| p.total).sum::<f64>() >= full.total - 1e-12);
}

#[test]
fn modulation_shifts_the_mass() {
    let r = 1.0;
    let grid = LambdaGrid::covering(4096, 32.0).unwrap();
    let a = 200.0 * grid.delta_rho();
    let base = scalar_scan(one, Window::Low { r }, grid);
    let shifted = scalar_scan(|l| C64::from_polar(1.0, l * a), Window::Low { r }, grid);
    assert!(mass_near(&shifted, a, 10.0) > 0.95);
    assert!(mass_near(&shifted, 0.0, 10.0) < 0.05);
    assert!((shifted.total - base.total).abs() < 1e-10 * base.total);
}

#[test]
fn real_even_families_have_real_transforms_up_to_phase() {
    // with a real even phi the transform is real up to a common phase; |g(rho)| = |g(-rho)|
    let grid = LambdaGrid::covering(256, 8.0).unwrap();
    let scan = scalar_scan(|l| C64::new((-l * l).exp(), 0.0), Window::Full, grid);
    let n = grid.n;
    for q in 1..n / 2 {
        let (a, b) = (scan.transform[n / 2 + q][0].norm(), scan.transform[n / 2 - q][0].norm());
        assert!((a - b).abs() < 1e-12, "q {q}");
    }
}

#[test]
fn singular_family_is_divergent() {
    let grid = LambdaGrid::covering(4096, 4.0).unwrap();
    let scan = scalar_scan(|l| C64::new(1.0 / (l * l), 0.0), Window::Low { r: 1.0 }, grid);
    assert_eq!(scan.verdict, ScanVerdict::Divergent);
}

#[test]
fn free_inverse_transform_is_the_cutoff_transform() {
    let g = radial(10.0, 60);
    let v = PotentialSpec::from_function("zero", GridFunction::zeros(&g)).unwrap();
    let f = GridFunction::from_real_radial(&g, |x| (-x).exp());
    let r = 0.5;
    let grid = LambdaGrid::covering(2048, 32.0 * r).unwrap();
    let dense = t_hat_l1_scan(&Evaluator::Dense(&v), &f, Window::Low { r }, grid).unwrap();
    let want = chi_hat_l1() * f.l1();
    assert!((dense.total - want).abs() < 1e-3 * want, "{} {want}", dense.total);
    let reg = build_s0(&v, &ThresholdBasis::empty(&g)).unwrap();
    let formula = t_hat_l1_scan(&Evaluator::Formula(&reg), &f, Window::Low { r }, grid).unwrap();
    assert!((formula.total - dense.total).abs() < 1e-12 * want);
    let csv = dense.to_csv();
    assert!(csv.starts_with("rho,l1_profile\n"));
    assert_eq!(csv.lines().count(), 2049);
    let js = dense.summary_json();
    assert_eq!(js["window"], "LOW");
    assert_eq!(js["verdict"], "BOUNDED");
    assert_eq!(js["n"], 2048);
}

#[test]
fn stationary_phase_kernel() {
    let samples = [(1.0, 1.0), (2.0, 1.5), (3.0, 4.0), (0.5, 0.0)];
    let a = dlambda_kernel_check(50.0, &samples, 1.0, 16384).unwrap();
    assert!((a.expected - (800.0 * PI).powf(-0.5)).abs() < 1e-15);
    assert!(a.max_deviation < 0.05, "{}", a.max_deviation);
    let b = dlambda_kernel_check(200.0, &samples, 1.0, 16384).unwrap();
    assert!((b.expected / a.expected - 0.5).abs() < 1e-14);
    for (x, y) in a.moduli.iter().zip(&b.moduli) {
        assert!((y / x - 0.5).abs() < 0.05, "{}", y / x);
    }
    assert!(b.max_deviation < a.max_deviation);
    assert!(dlambda_kernel_check(0.0, &samples, 1.0, 64).is_err());
}

#[test]
fn b_kernel_constant_is_linear_in_v_and_shrinks_with_r() {
    let g = radial(10.0, 100);
    let zero = PotentialSpec::from_function("zero", GridFunction::zeros(&g)).unwrap();
    assert_eq!(vb_hat_constant(&zero, 0.2).unwrap(), 0.0);
    let v = gaussian_well(&g, 1.0, 1.0).unwrap();
    let a = vb_hat_constant(&v, 0.2).unwrap();
    let b = vb_hat_constant(&v.scaled(3.0).unwrap(), 0.2).unwrap();
    assert!((b - 3.0 * a).abs() < 1e-12 * b);
    let rep = vb_hat_bound_check(&v, 0.0, 0.4).unwrap();
    assert!(rep.constants.windows(2).all(|w| w[1] < w[0]), "{:?}", rep.constants);
    assert!(rep.exponent > 0.0);
    assert!(vb_hat_bound_check(&v, 0.0, 0.0).is_err());
    let boxed = gaussian_well(&make_grid(GridMode::Box3d, 2.0, 8).unwrap(), 1.0, 1.0).unwrap();
    assert!(vb_hat_constant(&boxed, 0.2).is_err());
}

#[test]
fn k2_kernels_for_a_chain() {
    let fx = build_chain_fixture(&radial(10.0, 200), &[2], 0.3).unwrap();
    let (basis, _) = build_threshold_basis(&fx.perturbation, 1e-8).unwrap();
    let xs: Vec<usize> = (0..200).step_by(20).collect();
    let rep = k2_bound_check(&basis, 0.4, &xs).unwrap();
    assert!(rep.resolvent_variant.iter().all(|x| *x <= rep.bound), "{:?} {}", rep.resolvent_variant, rep.bound);
    assert!(rep.difference_slope >= 0.9, "{}", rep.difference_slope);
    assert!(k2_bound_check(&ThresholdBasis::empty(&radial(10.0, 200)), 0.4, &xs).is_err());
}
