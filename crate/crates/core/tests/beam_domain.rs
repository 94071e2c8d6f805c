mod common;

use common::*;
use mceb_core::beam::{
    estimate_correlation, from_orthogonal_subspace, ls_time_domain_estimate, orthogonalize, to_orthogonal_subspace,
    BeamBasis,
};
use mceb_core::channel::{AmplitudeMatrix, ChannelConfig, ChannelSnapshot, CorrelationModel, Subspace, TapSet};
use mceb_core::linalg::{relative_frobenius_error, HermitianEigen};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn projected_white_noise_keeps_its_power() {
    let config = ChannelConfig::new(256, 4, 64).unwrap();
    let taps = TapSet::new(vec![0, 6, 14, 25], vec![1.0; 4], CorrelationModel::Uncorrelated).unwrap();
    let basis = BeamBasis::from_taps(&taps, &config).unwrap();
    let sigma2 = 0.7;
    let mut r = rng(12);
    // 40 snapshots x 64 antennas x 4 beams = 10240 projected samples
    let mut acc = 0.0;
    let mut count = 0usize;
    for _ in 0..40 {
        let g = white(&mut r, 256, 64, sigma2);
        let snap = ChannelSnapshot::new(g, config).unwrap();
        let proj = ls_time_domain_estimate(&snap, &basis).unwrap();
        acc += proj.entries().norm_squared();
        count += proj.entries().len();
    }
    let p = acc / count as f64;
    assert!(rel(p, sigma2) < 0.03, "projected power {p}");
}

#[test]
fn correlation_estimate_concentrates() {
    let mut r = rng(2);
    let x = AmplitudeMatrix::new(white(&mut r, 4, 4096, 1.0), Subspace::Orthogonalized).unwrap();
    let c = estimate_correlation(&x);
    let err = (c.entries() - CMatrix::identity(4, 4)).norm();
    assert!(err < 0.1, "‖C - I‖_F = {err}");
}

#[test]
fn round_trip_survives_ill_conditioned_r() {
    let mut r = rng(77);
    for &cond in &[1e2_f64, 1e4, 1e6] {
        let m = 6;
        // R0 upper triangular with geometrically spaced diagonal -> cond ~ `cond`.
        let mut r0 = CMatrix::zeros(m, m);
        for i in 0..m {
            let d = cond.powf(-(i as f64) / (m - 1) as f64);
            r0[(i, i)] = Complex64::new(d, 0.0);
            for j in i + 1..m {
                r0[(i, j)] = cn(&mut r, 0.01 * d * d);
            }
        }
        let q0 = white(&mut r, 64, m, 1.0).qr().q();
        let b = &q0 * &r0;
        let basis = orthogonalize(&b).unwrap();
        let sv = basis.r_matrix().singular_values();
        let measured_cond = sv.max() / sv.min();
        assert!(measured_cond > cond / 10.0, "cond {measured_cond}");
        let x0 = AmplitudeMatrix::new(white(&mut r, m, 16, 1.0), Subspace::Original).unwrap();
        let x = to_orthogonal_subspace(&x0, &basis).unwrap();
        let back = from_orthogonal_subspace(&x, &basis).unwrap();
        let e = relative_frobenius_error(back.entries(), x0.entries());
        assert!(e < 1e-8, "cond {cond}: round-trip error {e}");
    }
}

#[test]
fn orthonormal_columns_give_identity_r() {
    let mut r = rng(5);
    let q0 = white(&mut r, 40, 5, 1.0).qr().q();
    let basis = orthogonalize(&q0).unwrap();
    assert!(relative_frobenius_error(basis.r_matrix(), &CMatrix::identity(5, 5)) < 1e-10);
    // Q may differ from q0 only where q0's phase convention differs; R = I forces Q = q0.
    assert!((basis.q_matrix() - &q0).norm() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_invariants_on_resolvable_layouts(
        n_rb in prop::sample::select(vec![4usize, 8, 16, 21]),
        cells in proptest::collection::vec(1usize..4, 1..8),
        offset in 0usize..20,
    ) {
        let config = ChannelConfig::new(252, n_rb, 1).unwrap();
        let cell = 252_usize.div_ceil(config.n_used());
        let mut delays = Vec::new();
        let mut d = offset;
        for c in cells { delays.push(d); d += c * cell; }
        prop_assume!(*delays.last().unwrap() < 252);
        let m = delays.len();
        let taps = TapSet::new(delays, vec![1.0; m], CorrelationModel::Uncorrelated).unwrap();
        let basis = BeamBasis::from_taps(&taps, &config).unwrap();
        prop_assert!(basis.orthonormality_defect() < 1e-10);
        prop_assert!(basis.reconstruction_error() < 1e-10);
        for j in 0..m {
            let d = basis.r_matrix()[(j, j)];
            prop_assert!(d.re > 0.0 && d.im == 0.0);
        }
    }

    #[test]
    fn correlation_estimate_is_hermitian_psd(
        m in 1usize..7,
        n_rx in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = AmplitudeMatrix::new(white(&mut r, m, n_rx, 1.0), Subspace::Orthogonalized).unwrap();
        let c = estimate_correlation(&x);
        let defect = (c.entries() - c.entries().adjoint()).norm();
        prop_assert!(defect <= 1e-12);
        let eig = HermitianEigen::new(c.entries());
        prop_assert!(eig.min_value() >= -1e-10 * eig.max_value());
    }
}
