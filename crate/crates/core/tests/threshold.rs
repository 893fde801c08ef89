use std::sync::Arc;

use faer::Mat;
use nsadisp::evolution::{discretize_h, free_hamiltonian};
use nsadisp::linalg::{self, c};
use nsadisp::potentials::{complex_well, exact_eigen, gaussian_well, psi_s, zero_resonance};
use nsadisp::threshold::{
    bootstrap_residual, build_chain_fixture, build_filtration, build_p0, build_ppp, build_ptilde0, build_qtilde0,
    build_threshold_basis, chain_lengths_from_dims, classify_state, jordan_dual_basis, nullspace_x1, pairing_pattern,
    random_nilpotent_fixture, staircase, threshold_report, PppOptions, Verdict,
};
use nsadisp::{make_grid, DenseOperator, Error, Grid, GridFunction, GridMode, PotentialSpec, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL_RANK: f64 = 1e-8;

fn radial(l: f64, m: usize) -> Arc<Grid> {
    make_grid(GridMode::RadialSwave, l, m).unwrap()
}

fn zero(g: &Arc<Grid>) -> PotentialSpec {
    PotentialSpec::from_function("zero", GridFunction::zeros(g)).unwrap()
}

/// |B(f, g)| / (||f||_2 ||g||_2) for real profiles.
fn alignment(f: &GridFunction, g: &GridFunction) -> f64 {
    f.inner(g).unwrap().norm() / (f.l2() * g.l2())
}

fn fixture_h(g: &Arc<Grid>, lengths: &[usize]) -> (PotentialSpec, DenseOperator) {
    let fx = build_chain_fixture(g, lengths, 1.0).unwrap();
    let h = discretize_h(&fx.perturbation).unwrap();
    (fx.perturbation, h)
}

#[test]
fn free_operator_has_no_threshold_states() {
    let g = radial(20.0, 100);
    assert!(nullspace_x1(&zero(&g), TOL_RANK).unwrap().is_empty());
    let (basis, filt) = build_threshold_basis(&zero(&g), TOL_RANK).unwrap();
    assert!(basis.is_empty() && filt.dims.is_empty());
}

#[test]
fn exact_eigen_null_vector_is_the_profile() {
    let g = radial(20.0, 200);
    let v = exact_eigen(&g, 2.0).unwrap();
    let x1 = nullspace_x1(&v, TOL_RANK).unwrap();
    assert_eq!(x1.len(), 1);
    assert!(alignment(&x1[0].psi, &psi_s(&g, 2.0)) > 1.0 - 1e-10);
    let psi = psi_s(&g, 2.0);
    assert!(bootstrap_residual(&v, &psi).unwrap().sup() < 1e-10 * psi.sup());
}

#[test]
fn classification_of_threshold_states() {
    let g = radial(40.0, 400);
    let e = classify_state(&psi_s(&g, 2.0), 0.05).unwrap();
    assert_eq!(e.verdict, Verdict::Eigenvalue);
    let res = GridFunction::from_real_radial(&g, |r| 1.0 / (1.0 + r));
    let r = classify_state(&res, 0.05).unwrap();
    assert_eq!(r.verdict, Verdict::Resonance);
    // 1/(1 + r) = 1/r - 1/r^2 + ...
    assert!((r.c0.re - 1.0).abs() < 0.05, "{}", r.c0);
    assert!(matches!(classify_state(&GridFunction::zeros(&g), 0.05), Err(Error::ZeroVector)));
}

#[test]
fn threshold_reports_for_builtin_families() {
    let g = radial(20.0, 200);
    let (rep, basis) = threshold_report(&exact_eigen(&g, 2.0).unwrap(), TOL_RANK, 0.05).unwrap();
    assert_eq!(rep.dims, vec![1]);
    assert_eq!(rep.verdicts, vec![Verdict::Eigenvalue]);
    assert_eq!(basis.lengths(), vec![1]);
    let (rep, _) = threshold_report(&zero_resonance(&g).unwrap(), TOL_RANK, 0.05).unwrap();
    assert_eq!(rep.verdicts, vec![Verdict::Resonance]);
}

#[test]
fn eigenvalue_basis_is_normalized() {
    let g = radial(20.0, 200);
    let v = exact_eigen(&g, 2.0).unwrap();
    let (basis, _) = build_threshold_basis(&v, TOL_RANK).unwrap();
    let psi = &basis.chains[0][0];
    assert!((psi.bilinear_pair(psi).unwrap() - c(1.0, 0.0)).norm() < 1e-10);
    assert!(alignment(psi, &psi_s(&g, 2.0)) > 1.0 - 1e-10);
    let h = discretize_h(&v).unwrap();
    assert!(basis.chain_residual(&h).unwrap() < 1e-8);
}

#[test]
fn chain_lengths_from_dimension_counts() {
    assert_eq!(chain_lengths_from_dims(&[1]), vec![1]);
    assert_eq!(chain_lengths_from_dims(&[1, 2]), vec![2]);
    assert_eq!(chain_lengths_from_dims(&[2, 3]), vec![2, 1]);
    assert_eq!(chain_lengths_from_dims(&[2, 4, 5]), vec![3, 2]);
    assert!(chain_lengths_from_dims(&[]).is_empty());
}

#[test]
fn fixture_filtration_dimensions() {
    let g = radial(20.0, 400);
    for (lengths, dims) in [(vec![1], vec![1]), (vec![2], vec![1, 2]), (vec![2, 1], vec![2, 3]), (vec![3], vec![1, 2, 3])] {
        let fx = build_chain_fixture(&g, &lengths, 1.0).unwrap();
        assert_eq!(fx.dims, dims);
        let filt = build_filtration(&fx.perturbation, TOL_RANK, 10).unwrap();
        assert_eq!(filt.dims, dims, "lengths {lengths:?}");
        let mut want = lengths.clone();
        want.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(filt.chain_lengths(), want);
    }
}

#[test]
fn fixture_chains_satisfy_the_chain_relations() {
    let g = radial(20.0, 400);
    let fx = build_chain_fixture(&g, &[3], 1.0).unwrap();
    let h = discretize_h(&fx.perturbation).unwrap();
    let chain = &fx.chains[0];
    let scale = chain.iter().map(|p| p.l1()).fold(0.0, f64::max);
    assert!(h.apply(&chain[0]).unwrap().l1() < 1e-8 * scale);
    for j in 1..3 {
        assert!(h.apply(&chain[j]).unwrap().sub(&chain[j - 1]).unwrap().l1() < 1e-8 * scale);
    }
    // F is complex symmetric
    let f = &fx.perturbation.operator;
    assert!(f.transpose_bilinear().max_abs_diff(f).unwrap() < 1e-12 * linalg::max_abs(f.balanced()));
}

#[test]
fn fixture_construction_errors() {
    let b = make_grid(GridMode::Box3d, 2.0, 8).unwrap();
    assert!(build_chain_fixture(&b, &[1], 1.0).is_err());
    let g = radial(2.0, 8);
    assert!(build_chain_fixture(&g, &[6, 6], 1.0).is_err());
}

#[test]
fn hand_jordan_block() {
    // N = [[1, i], [i, -1]] squares to zero and is complex symmetric
    let n = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => c(1.0, 0.0),
        (1, 1) => c(-1.0, 0.0),
        _ => c(0.0, 1.0),
    });
    assert_eq!(staircase(&n, 1e-10).unwrap(), vec![2]);
    let jb = jordan_dual_basis(&n, &linalg::identity(2), 1e-10).unwrap();
    assert_eq!(jb.lengths(), vec![2]);
    let cert = jb.verify(&n, 2);
    assert!(cert.chain_residual < 1e-14 && cert.pairing_residual < 1e-14 && cert.dim_ok);
}

#[test]
fn zero_operator_has_trivial_chains() {
    let n = Mat::<C64>::zeros(3, 3);
    let jb = jordan_dual_basis(&n, &linalg::identity(3), 1e-10).unwrap();
    assert_eq!(jb.lengths(), vec![1, 1, 1]);
    assert!(linalg::max_abs(&(&jb.certificate - &linalg::identity(3))) < 1e-13);
}

#[test]
fn pairing_pattern_is_antidiagonal_per_chain() {
    let p = pairing_pattern(&[2, 1]);
    let want = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(p[(i, j)], c(want[i][j], 0.0));
        }
    }
}

#[test]
fn random_nilpotent_fixtures_are_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for lengths in [vec![1], vec![3], vec![2, 2], vec![4, 2, 1], vec![5, 3]] {
        let n = random_nilpotent_fixture(&mut rng, &lengths).unwrap();
        let d: usize = lengths.iter().sum();
        assert!(linalg::max_abs(&(&n - &linalg::transpose(&n))) < 1e-12);
        assert_eq!(staircase(&n, 1e-9).unwrap(), lengths);
        let jb = jordan_dual_basis(&n, &linalg::identity(d), 1e-9).unwrap();
        let cert = jb.verify(&n, d);
        assert_eq!(jb.lengths(), lengths);
        assert!(cert.chain_residual < 1e-9 && cert.pairing_residual < 1e-9, "{lengths:?}: {cert:?}");
    }
}

#[test]
fn structure_errors() {
    let diag = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    assert!(matches!(staircase(&diag, 1e-10), Err(Error::NotNilpotent(_))));
    let shift = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    assert!(matches!(jordan_dual_basis(&shift, &linalg::identity(2), 1e-10), Err(Error::NotSymmetric(_))));
    let z = Mat::<C64>::zeros(1, 1);
    assert!(matches!(jordan_dual_basis(&z, &z, 1e-10), Err(Error::DegeneratePairing(1))));
}

#[test]
fn threshold_projections_on_a_length_two_fixture() {
    let g = radial(20.0, 400);
    let (v, h) = fixture_h(&g, &[2]);
    let (basis, _) = build_threshold_basis(&v, TOL_RANK).unwrap();
    assert_eq!(basis.lengths(), vec![2]);
    assert!(basis.pairing_residual() < 1e-10);
    assert!(basis.chain_residual(&h).unwrap() < 1e-8);
    let p0 = build_p0(&basis);
    let scale = p0.operator_l1_norm();
    assert!(p0.compose(&p0).unwrap().sub(&p0).unwrap().operator_l1_norm() < 1e-10 * scale);
    assert!(p0.transpose_bilinear().max_abs_diff(&p0).unwrap() < 1e-12 * linalg::max_abs(p0.balanced()));
    for psi in &basis.chains[0] {
        assert!(p0.apply(psi).unwrap().sub(psi).unwrap().l1() < 1e-10 * psi.l1());
    }
    let comm = h.compose(&p0).unwrap().sub(&p0.compose(&h).unwrap()).unwrap();
    assert!(comm.operator_l1_norm() < 1e-7 * h.compose(&p0).unwrap().operator_l1_norm());
    let pt = build_ptilde0(&basis);
    assert!(pt.compose(&pt).unwrap().sub(&pt).unwrap().operator_l1_norm() < 1e-10 * pt.operator_l1_norm());
    let qt = build_qtilde0(&basis);
    assert!(qt.add(&pt).unwrap().max_abs_diff(&DenseOperator::identity(&g)).unwrap() < 1e-15);
    assert!(qt.apply(&basis.chains[0][1]).unwrap().l1() < 1e-10 * basis.chains[0][1].l1());
}

#[test]
fn point_spectrum_projector_of_a_real_well() {
    let g = radial(20.0, 200);
    let v = gaussian_well(&g, 6.0, 1.0).unwrap();
    let rep = build_ppp(&v, &PppOptions::default(), None).unwrap();
    // Hermitian oracle: spectral projector onto eigenvalues below -delta_edge
    let h = discretize_h(&v).unwrap();
    let eig = h.balanced().self_adjoint_eigen(faer::Side::Lower).unwrap();
    let (u, s) = (eig.U(), eig.S());
    let n = g.len();
    let mut p = Mat::<C64>::zeros(n, n);
    let mut count = 0;
    for k in 0..n {
        if s[k].re < -rep.delta_edge {
            count += 1;
            for i in 0..n {
                for j in 0..n {
                    p[(i, j)] += u[(i, k)] * u[(j, k)].conj();
                }
            }
        }
    }
    assert!(count >= 1);
    assert_eq!(rep.clusters.len(), count);
    assert!(linalg::max_abs(&(rep.projector.balanced() - &p)) < 1e-8);
}

#[test]
fn point_spectrum_projector_of_the_free_operator_vanishes() {
    let g = radial(20.0, 200);
    let rep = build_ppp(&zero(&g), &PppOptions::default(), None).unwrap();
    assert!(rep.clusters.is_empty());
    assert_eq!(rep.projector.operator_l1_norm(), 0.0);
}

#[test]
fn point_spectrum_projector_of_a_complex_well() {
    let g = radial(20.0, 200);
    let v = complex_well(&g, 6.0, 1.5, 1.0).unwrap();
    let rep = build_ppp(&v, &PppOptions::default(), None).unwrap();
    assert!(!rep.clusters.is_empty());
    let p = &rep.projector;
    let scale = p.operator_l1_norm();
    assert!(p.compose(p).unwrap().sub(p).unwrap().operator_l1_norm() < 1e-8 * scale);
    let tr: C64 = (0..g.len()).map(|i| p.balanced()[(i, i)]).sum();
    let size: usize = rep.clusters.iter().map(|c| c.size).sum();
    assert!((tr - c(size as f64, 0.0)).norm() < 1e-8);
    let h = discretize_h(&v).unwrap();
    let comm = h.compose(p).unwrap().sub(&p.compose(&h).unwrap()).unwrap();
    assert!(comm.operator_l1_norm() < 1e-7 * h.compose(p).unwrap().operator_l1_norm());
    // the free Hamiltonian alone is not enough to be invariant
    let h0 = free_hamiltonian(&g);
    assert!(h0.compose(p).unwrap().sub(&p.compose(&h0).unwrap()).unwrap().operator_l1_norm() > 1e-3);
}
