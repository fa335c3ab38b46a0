mod common;

use common::{rel, to_dense, to_matrix};
use deltascope::linalg::{
    frobenius_norm, orthonormality_defect, project_col_complement, project_row_complement,
    spectral_norm, stable_rank, truncated_svd, truncated_svd_with, SvdOptions,
};
use deltascope_oracle::{complement, gaussian, gram_svd, orthonormal, projector, rng};
use proptest::prelude::*;

#[test]
fn spectral_norm_matches_gram_eigen_oracle() {
    let mut r = rng(6005);
    let m = gaussian(&mut r, 6, 5);
    let oracle = gram_svd(&m).s[0];
    let got = spectral_norm(&to_matrix(&m), 1e-10, 1000).unwrap();
    assert!(rel(got, oracle) < 1e-8, "{got} vs {oracle}");
}

#[test]
fn truncated_svd_matches_oracle_projectors() {
    let mut r = rng(8063);
    let m = gaussian(&mut r, 8, 6);
    let oracle = gram_svd(&m);
    let svd = truncated_svd(&to_matrix(&m), 3).unwrap();
    for i in 0..3 {
        assert!(rel(svd.s()[i], oracle.s[i]) < 1e-8);
    }
    let pu = to_dense(svd.u()).mul(&to_dense(svd.u()).t());
    let pv = to_dense(svd.v()).mul(&to_dense(svd.v()).t());
    assert!(pu.max_abs_diff(&projector(&oracle.u, 3)) < 1e-8);
    assert!(pv.max_abs_diff(&projector(&oracle.v, 3)) < 1e-8);
    assert!(orthonormality_defect(svd.u()) <= 1e-8);
    assert!(orthonormality_defect(svd.v()) <= 1e-8);
}

#[test]
fn randomized_path_agrees_with_dense_path() {
    // Force the randomized branch on a matrix with a decaying spectrum.
    let mut r = rng(77);
    let u = orthonormal(&mut r, 90, 40);
    let v = orthonormal(&mut r, 70, 40);
    let mut s = deltascope_oracle::Dense::zeros(40, 40);
    for i in 0..40 {
        s.set(i, i, 0.7f64.powi(i as i32) * 10.0);
    }
    let m = to_matrix(&u.mul(&s).mul(&v.t()));
    let opts = SvdOptions {
        dense_limit: 10,
        ..SvdOptions::default()
    };
    let fast = truncated_svd_with(&m, 5, &opts).unwrap();
    let exact = truncated_svd(&m, 5).unwrap();
    for i in 0..5 {
        assert!(rel(fast.s()[i], exact.s()[i]) < 1e-8);
    }
    let pf = to_dense(fast.u()).mul(&to_dense(fast.u()).t());
    let pe = to_dense(exact.u()).mul(&to_dense(exact.u()).t());
    assert!(pf.max_abs_diff(&pe) < 1e-8);
    assert!(orthonormality_defect(fast.u()) <= 1e-8);
    assert!(orthonormality_defect(fast.v()) <= 1e-8);
}

#[test]
fn col_projector_matches_dense_oracle() {
    let mut r = rng(108);
    let m = gaussian(&mut r, 10, 8);
    let u = orthonormal(&mut r, 10, 3);
    let oracle = complement(&u, 3).mul(&m);
    let got = project_col_complement(&to_matrix(&m), &to_matrix(&u)).unwrap();
    assert!(to_dense(&got).max_abs_diff(&oracle) < 1e-10);
}

#[test]
fn row_projector_matches_dense_oracle() {
    let mut r = rng(810);
    let m = gaussian(&mut r, 8, 10);
    let v = orthonormal(&mut r, 10, 3);
    let oracle = m.mul(&complement(&v, 3));
    let got = project_row_complement(&to_matrix(&m), &to_matrix(&v)).unwrap();
    assert!(to_dense(&got).max_abs_diff(&oracle) < 1e-10);
}

fn instance(seed: u64) -> (deltascope_oracle::Dense, deltascope_oracle::Dense, usize) {
    let mut r = rng(seed);
    let (d, k) = deltascope_oracle::shape(&mut r, 2, 20);
    let t = 1 + (seed as usize) % d.min(k);
    let m = gaussian(&mut r, d, k);
    let u = orthonormal(&mut r, d, t);
    (m, u, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000) {
        let (m, u, _) = instance(seed);
        let (m, u) = (to_matrix(&m), to_matrix(&u));
        let once = project_col_complement(&m, &u).unwrap();
        let twice = project_col_complement(&once, &u).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);

        let mt = m.transpose();
        let once = project_row_complement(&mt, &u).unwrap();
        let twice = project_row_complement(&once, &u).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);
    }

    #[test]
    fn pythagoras(seed in 0u64..10_000) {
        let (m, u, _) = instance(seed);
        let (m, u) = (to_matrix(&m), to_matrix(&u));
        let perp = project_col_complement(&m, &u).unwrap();
        let par = &m - &perp;
        let lhs = frobenius_norm(&m).powi(2);
        let rhs = frobenius_norm(&par).powi(2) + frobenius_norm(&perp).powi(2);
        prop_assert!(rel(lhs, rhs) < 1e-8);
    }

    #[test]
    fn stable_rank_scale_invariant(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let (m, _, _) = instance(seed);
        let m = to_matrix(&m);
        let a = stable_rank(&m).unwrap();
        let b = stable_rank(&m.scale(c)).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        prop_assert!(a >= 1.0 - 1e-10 && a <= m.min_dim() as f64 + 1e-10);
    }

    #[test]
    fn top_singular_value_is_spectral_norm(seed in 0u64..10_000) {
        let (m, _, t) = instance(seed);
        let m = to_matrix(&m);
        let svd = truncated_svd(&m, t).unwrap();
        let sigma = spectral_norm(&m, 1e-10, 1000).unwrap();
        prop_assert!(rel(svd.s()[0], sigma) < 1e-8);
        prop_assert!(svd.s().windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
    }

    #[test]
    fn full_rank_reconstructs(seed in 0u64..10_000) {
        let (m, _, _) = instance(seed);
        let m = to_matrix(&m);
        let svd = truncated_svd(&m, m.min_dim()).unwrap();
        let err = frobenius_norm(&(&svd.reconstruct() - &m)) / frobenius_norm(&m);
        prop_assert!(err < 1e-8);
    }

    #[test]
    fn low_rank_input_reconstructs_at_its_rank(seed in any::<u64>(), d in 2usize..12, k in 2usize..12, r in 1usize..4) {
        let r = r.min(d.min(k));
        let mut g = rng(seed);
        let m = gaussian(&mut g, d, r).mul(&gaussian(&mut g, r, k));
        let svd = truncated_svd(&to_matrix(&m), r).unwrap();
        prop_assert!(to_dense(&svd.reconstruct()).sub(&m).fro() <= 1e-10 * m.fro());
    }
}
