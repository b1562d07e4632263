use approx::assert_abs_diff_eq;
use pndrecon_core::fock::{
    apply_loss, apply_loss_joint, coherent_pnd, convolve_with_thermal, marginal, source_model_pnd, thermal_pnd,
    tms_joint_pnd,
};
use pndrecon_core::metrics::{fidelity, moments, nrf, nrf_from_moments, source_model_moments};
use pndrecon_core::{Arm, JointPnd, Pnd, Setting, SourceModelParams};
use proptest::prelude::*;

fn sum(p: &[f64]) -> f64 {
    p.iter().sum()
}

/// Independent oracle: the signal marginal of the source model is the
/// number distribution of two independent thermal fields added together.
fn sum_of_thermals(m1: f64, m2: f64, trunc: usize) -> Vec<f64> {
    let geo = |m: f64, n: usize| (m / (1.0 + m)).powi(n as i32) / (1.0 + m);
    (0..=trunc).map(|n| (0..=n).map(|j| geo(m1, j) * geo(m2, n - j)).sum()).collect()
}

#[test]
fn source_marginal_is_thermal_sum() {
    let params = SourceModelParams::new(0.63, 0.11, 0.10).unwrap();
    let p = source_model_pnd(&params, 60).unwrap();
    let want = sum_of_thermals(params.pair_mean(), 0.11, 60);
    for (a, b) in marginal(&p, Arm::Signal).probs().iter().zip(&want).take(15) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn loss_on_thermal_and_coherent_keeps_family() {
    let t = apply_loss(&thermal_pnd(1.2, 80).unwrap(), 0.45).unwrap();
    let c = apply_loss(&coherent_pnd(1.2, 80).unwrap(), 0.45).unwrap();
    let tt = thermal_pnd(0.54, 80).unwrap();
    let cc = coherent_pnd(0.54, 80).unwrap();
    for n in 0..20 {
        assert_abs_diff_eq!(t.probs()[n], tt.probs()[n], epsilon = 1e-12);
        assert_abs_diff_eq!(c.probs()[n], cc.probs()[n], epsilon = 1e-12);
    }
}

#[test]
fn moments_match_closed_form() {
    let params = SourceModelParams::new(0.5, 0.2, 0.05).unwrap();
    let p = source_model_pnd(&params, 70).unwrap();
    let lossy = apply_loss_joint(&p, 0.4, 0.3).unwrap();
    let m = moments(&lossy);
    let want = source_model_moments(&params, Setting { eta_s: 0.4, eta_i: 0.3 }).unwrap();
    assert_abs_diff_eq!(m.mean_s, want.mean_s, epsilon = 1e-10);
    assert_abs_diff_eq!(m.var_i, want.var_i, epsilon = 1e-10);
    assert_abs_diff_eq!(m.covariance(), want.covariance(), epsilon = 1e-10);
    assert_abs_diff_eq!(nrf(&lossy).unwrap().nrf, nrf_from_moments(&want).unwrap().nrf, epsilon = 1e-9);
}

#[test]
fn pure_tms_has_zero_nrf_and_loss_law() {
    let t = tms_joint_pnd(0.9, 120).unwrap();
    assert_eq!(nrf(&t).unwrap().nrf, 0.0);
    for loss in [0.1, 0.45, 0.8] {
        let lossy = apply_loss_joint(&t, 1.0 - loss, 1.0 - loss).unwrap();
        assert_abs_diff_eq!(nrf(&lossy).unwrap().nrf, loss, epsilon = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_preserves_norm_and_scales_mean(mean in 0.0f64..3.0, eta in 0.0f64..=1.0) {
        let p = thermal_pnd(mean, 40).unwrap();
        let q = apply_loss(&p, eta).unwrap();
        prop_assert!((sum(q.probs()) - 1.0).abs() < 1e-12);
        prop_assert!((q.mean() - eta * p.mean()).abs() < 1e-10);
        prop_assert!(q.probs().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn loss_composes(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
        let p = coherent_pnd(1.5, 30).unwrap();
        let a = apply_loss(&apply_loss(&p, e1).unwrap(), e2).unwrap();
        let b = apply_loss(&p, e1 * e2).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_loss_commutes_with_marginal(r in 0.0f64..1.2, es in 0.0f64..=1.0, ei in 0.0f64..=1.0) {
        let p = tms_joint_pnd(r, 25).unwrap();
        let q = apply_loss_joint(&p, es, ei).unwrap();
        let direct = apply_loss(&marginal(&p, Arm::Idler), ei).unwrap();
        for (x, y) in marginal(&q, Arm::Idler).probs().iter().zip(direct.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_normalized(r in 0.0f64..1.0, ns in 0.0f64..0.5, ni in 0.0f64..0.5) {
        let p = convolve_with_thermal(&tms_joint_pnd(r, 15).unwrap(), ns, ni).unwrap();
        prop_assert!((sum(p.probs()) - 1.0).abs() < 1e-12);
        prop_assert!(p.probs().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fidelity_symmetric_and_bounded(m1 in 0.0f64..2.0, m2 in 0.0f64..2.0) {
        let a = thermal_pnd(m1, 12).unwrap();
        let b = coherent_pnd(m2, 12).unwrap();
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn constructors_reject_bad_input() {
    assert!(Pnd::new(vec![0.5, 0.4]).is_err());
    assert!(Pnd::new(vec![1.2, -0.2]).is_err());
    assert!(JointPnd::new(1, vec![1.0, 0.0, 0.0]).is_err());
    assert!(thermal_pnd(-0.1, 4).is_err());
    assert!(apply_loss(&Pnd::vacuum(3), 1.5).is_err());
    assert!(SourceModelParams::new(-0.1, 0.0, 0.0).is_err());
}
