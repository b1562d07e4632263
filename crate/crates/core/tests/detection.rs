use approx::assert_abs_diff_eq;
use pndrecon_core::fock::{apply_loss_joint, source_model_pnd, thermal_pnd};
use pndrecon_core::forward::{
    b_matrix_joint, click_probs, p_off, sample_click_table, source_model_click_probs,
};
use pndrecon_core::{EfficiencyLadder, JointPnd, Setting, SourceModelParams};

/// Brute-force no-click probability from the lossy photon-number distribution.
fn dark_after_loss(p: &JointPnd, s: Setting) -> (f64, f64, f64) {
    let q = apply_loss_joint(p, s.eta_s, s.eta_i).unwrap();
    let both = q.get(0, 0);
    let sig: f64 = (0..q.dim()).map(|k| q.get(0, k)).sum();
    let idl: f64 = (0..q.dim()).map(|n| q.get(n, 0)).sum();
    (both, sig, idl)
}

#[test]
fn closed_form_matches_truncated_sum() {
    let params = SourceModelParams::new(0.63, 0.11, 0.10).unwrap();
    let p = source_model_pnd(&params, 80).unwrap();
    for s in [Setting::symmetric(0.05), Setting::symmetric(0.45), Setting { eta_s: 0.3, eta_i: 0.9 }] {
        let c = source_model_click_probs(&params, s).unwrap();
        let t = click_probs(&p, s).unwrap();
        let (both, sig_dark, idl_dark) = dark_after_loss(&p, s);
        assert_abs_diff_eq!(c.p00, both, epsilon = 1e-10);
        assert_abs_diff_eq!(c.p00 + c.p01, sig_dark, epsilon = 1e-10);
        assert_abs_diff_eq!(c.p00 + c.p10, idl_dark, epsilon = 1e-10);
        for (a, b) in c.as_array().iter().zip(t.as_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }
}

#[test]
fn response_matrix_reproduces_click_probs() {
    let params = SourceModelParams::new(0.4, 0.05, 0.02).unwrap();
    let p = source_model_pnd(&params, 9).unwrap();
    let ladder = EfficiencyLadder::voa_sweep(0.45, 0.05, 0.95, 7).unwrap();
    let b = b_matrix_joint(ladder.settings(), 9).unwrap();
    let model = b.mul_vec(p.probs());
    let m = ladder.len();
    for (mu, s) in ladder.settings().iter().enumerate() {
        let c = click_probs(&p, *s).unwrap();
        assert_abs_diff_eq!(model[mu], c.p00, epsilon = 1e-14);
        assert_abs_diff_eq!(model[m + mu], c.p01, epsilon = 1e-14);
        assert_abs_diff_eq!(model[2 * m + mu], c.p10, epsilon = 1e-14);
    }
}

#[test]
fn single_mode_dark_probability() {
    // Thermal light: p_off = 1 / (1 + η⟨n⟩).
    let p = thermal_pnd(1.2, 200).unwrap();
    for eta in [0.05, 0.3, 1.0] {
        assert_abs_diff_eq!(p_off(&p, eta).unwrap(), 1.0 / (1.0 + eta * 1.2), epsilon = 1e-12);
    }
}

#[test]
fn sampled_frequencies_within_three_sigma() {
    let params = SourceModelParams::new(0.63, 0.11, 0.10).unwrap();
    let p = source_model_pnd(&params, 12).unwrap();
    let ladder = EfficiencyLadder::voa_sweep(0.45, 0.05, 0.95, 5).unwrap();
    let trials = 10_000_000u64;
    let table = sample_click_table(&p, &ladder, trials, 7).unwrap();
    let n = trials as f64;
    for row in table.rows() {
        let want = click_probs(&p, row.setting).unwrap().as_array();
        let got = row.frequencies().as_array();
        for (g, w) in got.iter().zip(want) {
            let sigma = (w * (1.0 - w) / n).sqrt();
            assert!((g - w).abs() <= 3.0 * sigma + 1e-15, "{g} vs {w} (σ = {sigma})");
        }
    }
    let again = sample_click_table(&p, &ladder, trials, 7).unwrap();
    assert_eq!(table, again);
}

#[test]
fn vacuum_never_clicks() {
    let ladder = EfficiencyLadder::new(vec![0.2, 1.0]).unwrap();
    let t = sample_click_table(&JointPnd::vacuum(4), &ladder, 1000, 3).unwrap();
    assert!(t.rows().iter().all(|r| r.counts.c00 == 1000));
}
