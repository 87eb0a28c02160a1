use std::f64::consts::{PI, TAU};

use kerrfree::gaussian::{
    log_negativity, partial_transpose, symplectic_eigenvalues, symplectic_form, two_mode_squeezed_vacuum,
    CovarianceMatrix,
};
use kerrfree::gaussian::{quadrature_variances, QuadratureSelector};
use kerrfree::io::{PumpState, RecordHeader, RecordStatistics};
use kerrfree::propagation::{distributed_output, output_covariance, IoChannel, NoiseOccupations, PropagationParams};
use kerrfree::synth::lumped_state_for_nu;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn local_symplectic(s: f64, theta: f64) -> DMatrix<f64> {
    let (c, sn) = (theta.cos(), theta.sin());
    DMatrix::from_row_slice(2, 2, &[c * s, -sn / s, sn * s, c / s])
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(a);
    m.view_mut((2, 2), (2, 2)).copy_from(b);
    m
}

fn beam_splitter(t: f64) -> DMatrix<f64> {
    let (c, s) = (t.cos(), t.sin());
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c, 0.0, s, 0.0,
        0.0, c, 0.0, s,
        -s, 0.0, c, 0.0,
        0.0, -s, 0.0, c,
    ]);
    m
}

fn arb_symplectic() -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform4(0.0..TAU),
        0.0..PI / 2.0,
    )
        .prop_map(|(s, th, t)| {
            let a = block_diag(
                &local_symplectic(s[0].exp(), th[0]),
                &local_symplectic(s[1].exp(), th[1]),
            );
            let b = block_diag(
                &local_symplectic(s[2].exp(), th[2]),
                &local_symplectic(s[3].exp(), th[3]),
            );
            a * beam_splitter(t) * b
        })
}

fn arb_state() -> impl Strategy<Value = CovarianceMatrix> {
    (1.0f64..4.0, 1.0f64..4.0, arb_symplectic()).prop_map(|(a, b, s)| {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, b, b]));
        CovarianceMatrix::new(&s * d * s.transpose()).unwrap()
    })
}

/// Symplectic eigenvalues as the moduli of the eigenvalues of `ΩV`, each
/// pair counted once.
fn oracle_spectrum(v: &CovarianceMatrix) -> Vec<f64> {
    let omega = symplectic_form(v.n_modes()).unwrap();
    let ev = (omega * v.matrix()).complex_eigenvalues();
    let mut m: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
    m.sort_by(f64::total_cmp);
    m.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn spectrum_matches_omega_v_eigenvalues(v in arb_state()) {
        let got = symplectic_eigenvalues(&v).unwrap().values;
        let want = oracle_spectrum(&v);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn spectrum_invariant_under_symplectic_maps(v in arb_state(), s in arb_symplectic()) {
        let before = symplectic_eigenvalues(&v).unwrap().values;
        let after = symplectic_eigenvalues(&v.transform(&s).unwrap()).unwrap().values;
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-8 * a);
        }
    }

    #[test]
    fn determinant_is_product_of_squared_spectrum(v in arb_state()) {
        let prod: f64 = symplectic_eigenvalues(&v).unwrap().values.iter().map(|x| x * x).product();
        prop_assert!((v.determinant() - prod).abs() <= 1e-8 * prod);
    }

    #[test]
    fn negativity_invariant_under_local_maps(
        r in 0.0f64..2.0,
        s in prop::array::uniform2(-1.0f64..1.0),
        th in prop::array::uniform2(0.0..TAU),
    ) {
        let v = two_mode_squeezed_vacuum(r, 0.0).unwrap();
        let l = block_diag(&local_symplectic(s[0].exp(), th[0]), &local_symplectic(s[1].exp(), th[1]));
        let a = log_negativity(&v, &[1]).unwrap();
        let b = log_negativity(&v.transform(&l).unwrap(), &[1]).unwrap();
        prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }

    #[test]
    fn tmsv_negativity_is_linear_in_r(r in 0.0f64..=3.0) {
        let v = two_mode_squeezed_vacuum(r, 0.0).unwrap();
        prop_assert!((log_negativity(&v, &[1]).unwrap() - 2.0 * r / std::f64::consts::LN_2).abs() <= 1e-9);
    }

    #[test]
    fn partial_transpose_is_an_involution(v in arb_state()) {
        let back = partial_transpose(&partial_transpose(&v, &[1]).unwrap(), &[1]).unwrap();
        prop_assert_eq!(back.matrix(), v.matrix());
    }

    #[test]
    fn product_states_are_separable(
        nu in prop::array::uniform2(1.0f64..5.0),
        s in prop::array::uniform2(-1.5f64..1.5),
        th in prop::array::uniform2(0.0..PI),
    ) {
        let mode = |k: usize| {
            let m = local_symplectic(s[k].exp(), th[k]);
            CovarianceMatrix::new(&m * m.transpose() * nu[k]).unwrap()
        };
        let v = CovarianceMatrix::direct_sum(&[mode(0), mode(1)]).unwrap();
        prop_assert!(log_negativity(&v, &[1]).unwrap() <= 1e-9);
    }

    #[test]
    fn amplifier_output_is_physical(
        g in 1.0f64..1e4,
        eta in 0.01f64..=1.0,
        occ in prop::array::uniform2(0.0f64..5.0),
    ) {
        let ch = IoChannel { g_signal: g, g_idler: g, eta };
        let v = output_covariance(&ch, NoiseOccupations { signal: occ[0], idler: occ[1] }).unwrap();
        prop_assert!(v.is_physical());
        prop_assert!(symplectic_eigenvalues(&v).unwrap().min() >= 1.0 - 1e-9);
    }

    #[test]
    fn negativity_falls_with_loss_and_noise(
        g in 1.5f64..100.0,
        eta in 0.05f64..0.95,
        d_eta in 0.01f64..0.05,
        occ in 0.0f64..2.0,
        d_occ in 0.01f64..0.5,
    ) {
        let e = |eta: f64, n: f64| {
            let ch = IoChannel { g_signal: g, g_idler: g, eta };
            log_negativity(&output_covariance(&ch, NoiseOccupations::uniform(n)).unwrap(), &[1]).unwrap()
        };
        let base = e(eta, occ);
        prop_assert!(e(eta + d_eta, occ) >= base - 1e-12);
        prop_assert!(e(eta, occ + d_occ) <= base + 1e-12);
    }

    #[test]
    fn line_composes_at_segment_boundaries(
        kappa in 0.0f64..3e8,
        chi in 0.0f64..3e8,
        occ in 0.0f64..1.0,
        split in 1usize..50,
    ) {
        let p = PropagationParams { kappa, chi, v: 1e8, length: 0.1, omega: 0.0, chi_phase: 0.0 };
        let n = 50;
        let o = NoiseOccupations::uniform(occ);
        let whole = distributed_output(&p, n, o).unwrap().gaussian;
        let a = PropagationParams { length: p.length * split as f64 / n as f64, ..p };
        let b = PropagationParams { length: p.length - a.length, ..p };
        let c = distributed_output(&a, split, o).unwrap().gaussian
            .then(&distributed_output(&b, n - split, o).unwrap().gaussian);
        let scale = whole.x.amax().max(whole.y.amax());
        prop_assert!((&c.x - &whole.x).amax() <= 1e-9 * scale);
        prop_assert!((&c.y - &whole.y).amax() <= 1e-9 * scale);
    }

    #[test]
    fn record_statistics_merge_is_chunk_independent(
        frames in prop::collection::vec(prop::array::uniform4(-10.0f64..10.0), 8..200),
        cut in 1usize..7,
    ) {
        let header = RecordHeader::new(2, 1e6, PumpState::On);
        let flat: Vec<f64> = frames.iter().flatten().copied().collect();
        let mut whole = RecordStatistics::new(header.clone());
        whole.extend(&flat);
        let at = 4 * (frames.len() * cut / 8);
        let mut a = RecordStatistics::new(header.clone());
        a.extend(&flat[..at]);
        let mut b = RecordStatistics::new(header.clone());
        b.extend(&flat[at..]);
        a.merge(&b);
        let (x, y) = (whole.covariance.covariance().unwrap(), a.covariance.covariance().unwrap());
        let scale = x.amax();
        prop_assert!((&x - &y).amax() <= 1e-12 * scale);
        for (m, n) in whole.moments.iter().zip(&a.moments) {
            prop_assert!((m.kurtosis() - n.kurtosis()).abs() <= 1e-10);
        }
    }
}

#[test]
fn segment_count_converges() {
    let p = PropagationParams {
        kappa: 1.5e8,
        chi: 3.0e8,
        v: 1.0e8,
        length: 0.1,
        omega: 0.0,
        chi_phase: 0.0,
    };
    let o = NoiseOccupations::uniform(0.2);
    let a = distributed_output(&p, 1000, o).unwrap().output_covariance().unwrap();
    let b = distributed_output(&p, 2000, o).unwrap().output_covariance().unwrap();
    let scale = b.matrix().amax();
    assert!((a.matrix() - b.matrix()).amax() <= 1e-6 * scale);
}

#[test]
fn squeezed_variance_equals_nu_for_lumped_family() {
    let (_, v) = lumped_state_for_nu(0.6, 0.85).unwrap();
    let (vs, _) = quadrature_variances(&v, &QuadratureSelector::two_mode(0, 1)).unwrap();
    assert!((vs - 0.6).abs() < 1e-12);
}
