use nhevec::dse::quantiles;
use nhevec::ensemble::{sample_iid, EnsembleSpec};
use nhevec::hermitization::{sym_spectrum, Half};
use nhevec::spectral::ProjectionObservable;
use nhevec::locallaw::*;
use nhevec::matrix::CMatrix;
use nhevec::scalar::{cplx, creal};
use proptest::prelude::*;

fn ginibre(n: usize, seed: u64, idx: u64) -> CMatrix<f64> {
    sample_iid(&EnsembleSpec::ginibre(n, seed), idx)
}

/// `diag(σ) F^*` with `F` the unitary DFT: every overlap `|(V^*U)_{kl}|^2`
/// equals `1/N`, so `⟨H H̃⟩ = ⟨H⟩^2` exactly.
fn dft_model(n: usize) -> CMatrix<f64> {
    let tau = std::f64::consts::TAU;
    let s = (n as f64).sqrt().recip();
    CMatrix::from_fn(n, n, |j, k| {
        let sigma = (j as f64 + 0.5) / n as f64;
        let th = -tau * (j * k) as f64 / n as f64;
        cplx(th.cos(), th.sin()).scale(sigma * s)
    })
}

#[test]
fn loglog_fit_recovers_power_law() {
    let x = log_grid(0.01, 1.0, 9);
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
    let (s, b, r2) = loglog_fit(&x, &y);
    assert!((s + 1.5).abs() < 1e-12 && (b - 3f64.ln()).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
}

#[test]
fn zero_matrix_at_origin_has_exact_inverse_powers() {
    // X = 0: H = H̃ = η^{-2}, so the slopes are -2, -4, -4
    let a = CMatrix::<f64>::zeros(8, 8);
    let grid = log_grid(0.1, 1.0, 6);
    let v = a1_values(&a, cplx(0.0, 0.0), &grid).unwrap();
    for (i, &e) in grid.iter().enumerate() {
        assert!((v.h[i] - e.powi(-2)).abs() < 1e-10 * e.powi(-2));
        assert!((v.h_htilde[i] - e.powi(-4)).abs() < 1e-10 * e.powi(-4));
        assert!((v.h2[i] - e.powi(-4)).abs() < 1e-10 * e.powi(-4));
        assert!(v.h2_x[i].abs() < 1e-12);
    }
    let r = v.reports(SLOPE_TOL, BOUND_C);
    assert!((r[0].slope + 2.0).abs() < 1e-9 && !r[0].pass);
    assert!((r[1].slope + 4.0).abs() < 1e-9);
    assert!((r[3].slope + 4.0).abs() < 1e-9);
}

#[test]
fn flat_overlap_model_has_bulk_exponents() {
    let n = 512;
    let a = dft_model(n);
    let grid = log_grid(0.01, 0.1, 6);
    let v = a1_values(&a, cplx(0.0, 0.0), &grid).unwrap();
    for i in 0..grid.len() {
        assert!((v.h_htilde[i] - v.h[i] * v.h[i]).abs() < 1e-9 * v.h_htilde[i]);
    }
    let r = v.reports(SLOPE_TOL, BOUND_C);
    for rep in &r {
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn a2_constants_are_positive() {
    let a = ginibre(64, 3, 0);
    let r = check_a2(&a, cplx(0.2, 0.1), cplx(-0.1, 0.3), 0.1, 0.2).unwrap();
    assert_eq!(r.eta_star, 0.2);
    assert!(r.c > 0.0 && r.c == r.c_hh.min(r.c_htht).min(r.c_hht));
}

#[test]
fn isotropic_law_holds_for_ginibre() {
    let n = 200;
    let a = ginibre(n, 11, 0);
    let grid = log_grid((n as f64).powf(-1.0 / 3.0), 1.0, 5);
    let r = check_a3_isotropic(&a, cplx(0.3, 0.1), &grid, &a3_vectors(n)).unwrap();
    assert!(r.iter().all(|x| x.pass), "{r:?}");
    assert!(check_a3_isotropic(&a, cplx(0.3, 0.1), &grid, &[vec![creal(1.0); 3]]).is_err());
}

#[test]
fn rigidity_and_delocalization_for_ginibre() {
    let n = 200;
    let z = cplx(0.3, 0.1);
    let spec = sym_spectrum(&ginibre(n, 5, 0), z).unwrap();
    let prof = quantiles(z, n).unwrap();
    let r = rigidity_deloc(&spec, &prof, KAPPA).unwrap();
    assert!(r.bulk_count > n / 2);
    assert!(r.rigidity_pass && r.delocalization_pass, "{r:?}");
}

#[test]
fn degenerate_spectrum_is_flagged() {
    let n = 16;
    let z = cplx(0.0, 0.0);
    let a = CMatrix::<f64>::identity(n);
    let spec = sym_spectrum(&a, z).unwrap();
    let r = rigidity_deloc(&spec, &quantiles(z, n).unwrap(), KAPPA).unwrap();
    assert!(r.note.unwrap().contains("DegenerateSpectrum"));
}

#[test]
fn eth_holds_for_ginibre_upper_right_block() {
    let n = 200;
    let z = cplx(0.3, 0.1);
    let spec = sym_spectrum(&ginibre(n, 7, 0), z).unwrap();
    let r = eth_check(&spec, &f12_observable(n), KAPPA).unwrap();
    assert!(r.pass, "{r:?}");
    let bad = CMatrix::<f64>::identity(2 * n);
    assert!(eth_check(&spec, &bad, KAPPA).is_err());
}

#[test]
fn eth_of_zero_observable_is_zero() {
    let n = 32;
    let spec = sym_spectrum(&ginibre(n, 8, 0), cplx(0.1, 0.0)).unwrap();
    let r = eth_check(&spec, &CMatrix::zeros(2 * n, 2 * n), KAPPA).unwrap();
    assert_eq!((r.off_diagonal, r.diagonal), (0.0, 0.0));
}

#[test]
fn isotropic_deviation_vanishes_for_zero_matrix() {
    let n = 8;
    let grid = log_grid(0.1, 1.0, 3);
    let r = check_a3_isotropic(&CMatrix::<f64>::zeros(n, n), cplx(0.0, 0.0), &grid, &a3_vectors(n)).unwrap();
    assert!(r.iter().all(|x| x.cap_c < 1e-12));
}

#[test]
fn level_repulsion_is_monotone_and_below_bound() {
    let spec = EnsembleSpec::ginibre(32, 9);
    let r = level_repulsion(&spec, cplx(0.2, 0.0), &[0.0, 0.1, 0.3, 0.5], 400).unwrap();
    assert!(r.monotone && r.pass, "{r:?}");
    assert_eq!(r.frequencies.len(), 4);
}

#[test]
fn gradient_of_zero_matrix_trace_matches_closed_form() {
    // A = 0, T = I: Tr G = 2 i N η / (|z|^2 + η^2)
    let n = 4;
    let a = CMatrix::<f64>::zeros(n, n);
    let t = CMatrix::<f64>::identity(2 * n);
    let (z, eta) = (cplx(0.4, -0.3), 0.5);
    let r = grad_scaling(&a, z, &t, eta).unwrap();
    let d = z.norm_sqr() + eta * eta;
    let coef = 2.0 * n as f64 * eta * 2.0 / (d * d);
    let grad = coef * z.norm();
    assert!((r.grad_norm - grad).abs() < 1e-5 * grad, "{} vs {grad}", r.grad_norm);
    assert!(r.grad_fd_disagreement < 0.1 && r.hess_fd_disagreement < 0.1);
}

#[test]
fn gradient_ratios_for_ginibre_below_local_scale() {
    let n = 128;
    let a = ginibre(n, 21, 0);
    let eta = (n as f64).powf(-1.1);
    let z = cplx(0.2, 0.1);
    let t = CMatrix::<f64>::identity(2 * n);
    let r = grad_scaling(&a, z, &t, eta).unwrap();
    assert!(r.grad_ratio <= (n as f64).ln() && r.hess_ratio <= (n as f64).ln(), "{r:?}");
    let obs = ProjectionObservable::standard(n, &[1.0]).unwrap();
    let v = grad_v_scaling(&a, z, &obs, Half::Upper, eta).unwrap();
    assert!(v.grad_ratio <= (n as f64).ln(), "{v:?}");
}

proptest! {
    #[test]
    fn log_grid_is_increasing_with_exact_ends(lo in 1e-3f64..0.5, span in 1.5f64..100.0, n in 2usize..12) {
        let g = log_grid(lo, lo * span, n);
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((g[0] - lo).abs() <= 1e-12 * lo);
        prop_assert!((g[n - 1] - lo * span).abs() <= 1e-12 * lo * span);
    }
}
