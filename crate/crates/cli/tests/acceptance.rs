//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pndrecon::commands::{
    db_to_eta, reconstruct, simulate, sweep, synth, PowerFamily, ReconstructConfig, SimulateConfig, SimulationParams,
    StateModel, SweepConfig, SynthConfig,
};
use pndrecon::io::PndFile;
use pndrecon_core::dynamics::{
    counting_pnd, detuning_scan, g2bar_gaussian, mean_scattered_gaussian, optimal_detuning, second_moments,
    solve_pump, PulseParams, QuantumConfig, ResonatorParams,
};
use pndrecon_core::em::{EmConfig, EmSolver};
use pndrecon_core::fock::{apply_loss_joint, coherent_pnd, source_model_pnd, thermal_pnd, tms_joint_pnd};
use pndrecon_core::forward::b_matrix_joint;
use pndrecon_core::metrics::{
    fidelity, fit_sinh2, fit_source_model, linear_fit, nrf, nrf_from_moments, source_model_moments, SearchConfig,
    SourceFitBounds,
};
use pndrecon_core::rng::stream;
use pndrecon_core::{Arm, EfficiencyLadder, JointPnd, PowerScaling, Setting, SourceModelParams};
use rand::Rng;

/// Pump integration step (ps).
const DT: f64 = 4.0;
/// Trials per setting of the measurement protocol.
const TRIALS: u64 = 12_500_000;
/// Chip-to-detector loss at the lowest attenuation (dB).
const SETUP_LOSS_DB: f64 = 3.5;
/// Source parameters of the best model fit at 2.2 mW.
const R_REF: f64 = 0.63;
const N_TH_S_REF: f64 = 0.11;
const N_TH_I_REF: f64 = 0.10;
const P_REF: f64 = 2.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

/// 50 settings from 0.05 to 0.95 of the attenuator, behind 3.5 dB of loss.
fn protocol_ladder() -> EfficiencyLadder {
    EfficiencyLadder::voa_sweep(db_to_eta(SETUP_LOSS_DB).unwrap(), 0.05, 0.95, 50).unwrap()
}

/// EM run to its fixed point: ε is not monotone, so a loose relative-change
/// threshold can trip at a turning point long before convergence.
fn em_config(trunc: usize) -> EmConfig {
    EmConfig { trunc, rel_tol: 1e-9, max_iters: 1_000_000, plane_scale: 1.0 }
}

fn joint(p: PndFile) -> JointPnd {
    match p {
        PndFile::Joint(p) => p,
        PndFile::Single(_) => panic!("expected a joint distribution"),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let trunc = 14;
    let cfg = ReconstructConfig { em: em_config(trunc), arm: Some(Arm::Signal), segment_eta: None };
    let mut fids = Vec::new();
    for (k, model) in [StateModel::Thermal { mean: 1.2 }, StateModel::Coherent { mean: 1.2 }].into_iter().enumerate() {
        let truth = match model {
            StateModel::Thermal { mean } => thermal_pnd(mean, 80).unwrap(),
            _ => coherent_pnd(1.2, 80).unwrap(),
        };
        let table = synth(&SynthConfig { model, model_trunc: 80, ladder: protocol_ladder(), trials: TRIALS }, 100 + k as u64)
            .unwrap();
        let PndFile::Single(p) = reconstruct(&table, &cfg).unwrap().0 else { panic!("expected one arm") };
        fids.push(fidelity(&p, &truth.with_truncation(trunc).unwrap()).unwrap());
    }
    let t = start.elapsed();
    outcome(
        fids.iter().all(|&f| f >= 0.99) && within(t, 60),
        format!("F_thermal = {:.5}, F_coherent = {:.5} (need >= 0.99), {:.1} s (limit 60 s)", fids[0], fids[1], t.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let levels: Vec<f64> = (0..6).map(|i| 1.0 - 0.95 * i as f64 / 5.0).collect();
    let ladder = EfficiencyLadder::grid(&levels, &levels).unwrap();
    let b = b_matrix_joint(ladder.settings(), 5).unwrap();
    let (mut worst_f, mut worst_l1, mut rises, mut rising_states) = (1.0f64, 0.0f64, 0usize, 0usize);
    for seed in 0..20 {
        let mut rng = stream(seed, 0);
        let truth = JointPnd::from_weights(5, (0..36).map(|_| rng.random::<f64>()).collect()).unwrap();
        let mut solver = EmSolver::new(b.clone(), b.mul_vec(truth.probs())).unwrap();
        let mut last = solver.epsilon();
        let mut state_rises = 0;
        for _ in 0..100_000 {
            solver.step().unwrap();
            if solver.epsilon() > last {
                state_rises += 1;
            }
            last = solver.epsilon();
        }
        rises += state_rises;
        rising_states += usize::from(state_rises > 0);
        let p = JointPnd::new(5, solver.distribution().to_vec()).unwrap();
        worst_f = worst_f.min(fidelity(&p, &truth).unwrap());
        worst_l1 = worst_l1.max(p.probs().iter().zip(truth.probs()).map(|(a, b)| (a - b).abs()).sum());
    }
    let t = start.elapsed();
    outcome(
        worst_f > 0.9999 && worst_l1 < 1e-3 && rises == 0 && within(t, 60),
        format!(
            "worst F = {worst_f:.6} (need > 0.9999), worst L1 = {worst_l1:.3e} (need < 1e-3), \
             epsilon rises = {rises} in {rising_states} states (need 0), {:.1} s (limit 60 s)",
            t.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let params = SourceModelParams::new(R_REF, N_TH_S_REF, N_TH_I_REF).unwrap();
    let trunc = 9;
    let cfg = SynthConfig { model: StateModel::Source(params), model_trunc: 60, ladder: protocol_ladder(), trials: TRIALS };
    let table = synth(&cfg, 300).unwrap();
    let rec = ReconstructConfig { em: em_config(trunc), arm: None, segment_eta: None };
    let p = joint(reconstruct(&table, &rec).unwrap().0);
    let fit = fit_source_model(&p, &SourceFitBounds::default(), &SearchConfig::default()).unwrap();
    let truth = source_model_pnd(&params, 60).unwrap().with_truncation(trunc).unwrap();
    let f = fidelity(&p, &truth).unwrap();
    let t = start.elapsed();
    let fp = fit.params;
    outcome(
        (fp.r - R_REF).abs() <= 0.02
            && (fp.n_th_s - N_TH_S_REF).abs() <= 0.02
            && (fp.n_th_i - N_TH_I_REF).abs() <= 0.02
            && f >= 0.97
            && within(t, 300),
        format!(
            "r = {:.4}, n_th_s = {:.4}, n_th_i = {:.4} (each within 0.02 of 0.63/0.11/0.10), \
             F(reconstruction, truth) = {f:.4} (need >= 0.97), {:.1} s (limit 300 s)",
            fp.r,
            fp.n_th_s,
            fp.n_th_i,
            t.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let powers: Vec<f64> = (0..7).map(|j| 1.0 + 0.25 * j as f64).collect();
    let scaling = PowerScaling { a: R_REF / P_REF, b_s: N_TH_S_REF / P_REF, b_i: N_TH_I_REF / P_REF };
    let base = SweepConfig {
        family: PowerFamily::Source(scaling),
        powers: powers.clone(),
        model_trunc: 60,
        ladder: protocol_ladder(),
        trials: TRIALS,
        reconstruct: ReconstructConfig { em: em_config(9), arm: None, segment_eta: None },
        fit: None,
    };
    let tms = sweep(&base, 400).unwrap().fits.v_diff_vs_n_tot.unwrap();
    let coherent_cfg = SweepConfig { family: PowerFamily::CoherentPair { mean_per_mw: 0.25 }, ..base };
    let coherent = sweep(&coherent_cfg, 401).unwrap().fits.v_diff_vs_n_tot.unwrap();
    // Closed-form moments of the model family at the same plane.
    let (xs, ys): (Vec<f64>, Vec<f64>) = powers
        .iter()
        .map(|&p| {
            let m = source_model_moments(&scaling.at_power(p).unwrap(), Setting::symmetric(1.0)).unwrap();
            let r = nrf_from_moments(&m).unwrap();
            (r.n_tot, r.v_diff)
        })
        .unzip();
    let exact = linear_fit(&xs, &ys).unwrap();
    outcome(
        (tms.slope - 0.42).abs() <= 0.05 && (coherent.slope - 1.0).abs() <= 0.02,
        format!(
            "squeezed slope = {:.4} ± {:.4} (need 0.42 ± 0.05; exact model slope {:.4}), \
             coherent slope = {:.4} ± {:.4} (need 1.00 ± 0.02)",
            tms.slope, tms.slope_err, exact.slope, coherent.slope, coherent.slope_err
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut zero = true;
    let mut worst: f64 = 0.0;
    for r in [0.3, 0.63, 1.0] {
        let t = tms_joint_pnd(r, 150).unwrap();
        zero &= nrf(&t).unwrap().nrf == 0.0;
        for loss in [0.1, 0.3, 0.5, 0.8] {
            let lossy = apply_loss_joint(&t, 1.0 - loss, 1.0 - loss).unwrap();
            worst = worst.max((nrf(&lossy).unwrap().nrf - loss).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        zero && worst < 1e-6 && within(t, 10),
        format!("NRF(TMS) exactly 0: {zero}, worst |NRF − η| after loss = {worst:.2e} (need < 1e-6), {:.2} s", t.as_secs_f64()),
    )
}

/// Pump detuning that maximizes the scattered signal photons.
fn best_detuning(res: &ResonatorParams, power: f64) -> f64 {
    let pulse = PulseParams::reference(power);
    let coarse: Vec<f64> = (0..=100).map(|j| -0.05 + 0.0005 * j as f64).collect();
    let d0 = optimal_detuning(&detuning_scan(res, &pulse, &coarse, DT, true, true).unwrap()).unwrap().detuning;
    let fine: Vec<f64> = (0..=20).map(|j| d0 - 0.0005 + 0.00005 * j as f64).collect();
    optimal_detuning(&detuning_scan(res, &pulse, &fine, DT, true, true).unwrap()).unwrap().detuning
}

fn trajectory_fidelity(nf: usize, detuning: f64) -> (f64, SourceModelParams, f64, Duration) {
    let start = Instant::now();
    let mut params = SimulationParams::reference(1.0);
    params.pulse.detuning = detuning;
    let cfg = SimulateConfig { params, n_traj: 3000, nf, dt: DT, spm: true, xpm: true, trunc: None };
    let out = simulate(&cfg, 600).unwrap();
    let fit = fit_source_model(&out.pnd, &SourceFitBounds::default(), &SearchConfig::default()).unwrap();
    (fit.fidelity, fit.params, out.summary.mean_s, start.elapsed())
}

fn criterion_6() -> Outcome {
    let res = ResonatorParams::table1();
    let detuning = best_detuning(&res, 1.0);
    let (f12, p12, n12, t12) = trajectory_fidelity(12, detuning);
    let (f8, _, _, t8) = trajectory_fidelity(8, detuning);
    outcome(
        f12 >= 0.95 && within(t12, 1800) && f8 >= 0.95 && within(t8, 300),
        format!(
            "detuning {detuning:.5}/ps, <n_s> = {n12:.4}; truncation 12: F = {f12:.4} (need >= 0.95) \
             at r = {:.3}, n_th = {:.3}/{:.3}, {:.0} s (limit 1800 s); truncation 8: F = {f8:.4}, {:.0} s (limit 300 s)",
            p12.r,
            p12.n_th_s,
            p12.n_th_i,
            t12.as_secs_f64(),
            t8.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let res = ResonatorParams::table1();
    let powers = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    let g: Vec<f64> = powers
        .iter()
        .map(|&p| {
            let pulse = PulseParams::reference(p).with_detuning(best_detuning(&res, p));
            let pump = solve_pump(&res, &pulse, DT, true).unwrap();
            g2bar_gaussian(&res, &pump, true, Arm::Signal).unwrap().g2bar
        })
        .collect();
    let low = g[0];
    let spread = g.iter().map(|v| (v / low - 1.0).abs()).fold(0.0, f64::max);
    let listing: Vec<String> = powers.iter().zip(&g).map(|(p, v)| format!("{p}:{v:.4}")).collect();
    outcome(
        (low - 1.89).abs() <= 0.05 && spread < 0.02,
        format!(
            "low-power g2 = {low:.4} (need 1.89 ± 0.05), largest change up to 4 mW = {:.2}% (need < 2%); mW:g2 {}",
            100.0 * spread,
            listing.join(" ")
        ),
    )
}

fn scattered(res: &ResonatorParams, power: f64, shifts: bool) -> f64 {
    let pump = solve_pump(res, &PulseParams::reference(power), DT, shifts).unwrap();
    mean_scattered_gaussian(res, &second_moments(res, &pump, shifts).unwrap()).0
}

fn criterion_8() -> Outcome {
    let res = ResonatorParams::table1();
    let high = [2.5, 3.0, 3.5, 4.0];
    let ordered = high.iter().all(|&p| scattered(&res, p, true) < scattered(&res, p, false));
    // Power range of the simulated photon-number figure.
    let powers: Vec<f64> = (1..=13).map(|j| 0.25 * j as f64).collect();
    let n: Vec<f64> = powers.iter().map(|&p| scattered(&res, p, false)).collect();
    let (a, r2) = fit_sinh2(&powers, &n, 2.0).unwrap();
    let ratios: Vec<String> =
        high.iter().map(|&p| format!("{p}:{:.3}", scattered(&res, p, true) / scattered(&res, p, false))).collect();
    outcome(
        ordered && r2 > 0.999,
        format!(
            "on/off ratio at fixed detuning {} (need < 1); shifts off: a = {a:.4}/mW, R² = {r2:.6} (need > 0.999)",
            ratios.join(" ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let res = ResonatorParams::table1();
    let pulse = PulseParams::reference(1.0).with_detuning(best_detuning(&res, 1.0));
    let coarse = solve_pump(&res, &pulse, DT, true).unwrap();
    let fine = solve_pump(&res, &pulse, DT / 2.0, true).unwrap();
    let cap = 10;
    let a = counting_pnd(&res, &coarse, &QuantumConfig { nf: 12, xpm: true }, cap).unwrap();
    let b = counting_pnd(&res, &fine, &QuantumConfig { nf: 12, xpm: true }, cap).unwrap();
    let c = counting_pnd(&res, &coarse, &QuantumConfig { nf: 14, xpm: true }, cap).unwrap();
    let ma = a.pnd.marginal(Arm::Signal).mean();
    let mb = b.pnd.marginal(Arm::Signal).mean();
    let step = (ma / mb - 1.0).abs();
    let deficit = 1.0 - fidelity(&a.pnd, &c.pnd).unwrap();
    outcome(
        step < 5e-3 && deficit < 1e-4,
        format!(
            "<n_s> change on halving dt = {:.2e} (need < 5e-3), fidelity deficit 12 → 14 = {deficit:.2e} (need < 1e-4), \
             pooled mass {:.1e}",
            step,
            a.pooled_mass.max(c.pooled_mass)
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "single-mode validation", criterion_1),
        (2, "noiseless oracle equivalence", criterion_2),
        (3, "joint reconstruction at protocol scale", criterion_3),
        (4, "noise reduction factor slopes", criterion_4),
        (5, "pure two-mode squeezed vacuum", criterion_5),
        (6, "dynamics vs source model", criterion_6),
        (7, "time-integrated g2", criterion_7),
        (8, "shift ordering and sinh² scaling", criterion_8),
        (9, "numerical hygiene", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, title, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        println!(
            "criterion {n} [{title}]: {} ({:.1} s) {}",
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
