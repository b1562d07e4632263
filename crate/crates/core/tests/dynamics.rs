use nalgebra::DMatrix;
use pndrecon_core::dynamics::{
    counting_pnd, evolve, evolve_observed, g2bar, mean_scattered, mean_scattered_gaussian, pnd_from_trajectories,
    second_moments, simulate_trajectories, solve_pump, ClickCount, PulseParams, QuantumConfig, ResonatorParams,
    TrajectoryConfig, TrajectoryRecord,
};
use pndrecon_core::metrics::fidelity;
use pndrecon_core::rng::stream;
use pndrecon_core::{Arm, Error};
use rand_distr::{Distribution, Geometric, Poisson};

const DT: f64 = 4.0;

fn reference(power: f64) -> (ResonatorParams, pndrecon_core::dynamics::PumpSeries) {
    let res = ResonatorParams::table1();
    let pump = solve_pump(&res, &PulseParams::reference(power), DT, true).unwrap();
    (res, pump)
}

#[test]
fn density_operator_stays_physical() {
    let (res, pump) = reference(1.0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    evolve_observed(&res, &pump, &QuantumConfig { nf: 8, xpm: true }, |state| {
        count += 1;
        if count % 25 != 0 {
            return;
        }
        assert!((state.trace() - 1.0).abs() < 1e-8);
        for (_, n, data) in state.blocks() {
            let m = DMatrix::from_row_slice(n, n, data);
            assert!((&m - m.adjoint()).norm() < 1e-12);
            let min = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.min(min);
        }
    })
    .unwrap();
    assert!(worst > -1e-8, "{worst}");
}

#[test]
fn truncation_overflow_is_reported() {
    let res = ResonatorParams::table1();
    let pump = solve_pump(&res, &PulseParams::reference(2.5), DT, false).unwrap();
    let err = evolve(&res, &pump, &QuantumConfig { nf: 6, xpm: false }).unwrap_err();
    assert!(matches!(err, Error::TruncationOverflow { .. }), "{err:?}");
}

#[test]
fn unconverged_tail_is_reported() {
    let (res, mut pump) = reference(1.0);
    pump.values.truncate(200);
    let evo = evolve(&res, &pump, &QuantumConfig { nf: 8, xpm: true }).unwrap();
    assert!(matches!(mean_scattered(&res, &evo), Err(Error::UnconvergedTail { .. })));
}

#[test]
fn shifts_lower_the_output_at_fixed_detuning() {
    let res = ResonatorParams::table1();
    let mean = |spm: bool| {
        let pump = solve_pump(&res, &PulseParams::reference(0.75), DT, spm).unwrap();
        let evo = evolve(&res, &pump, &QuantumConfig { nf: 10, xpm: spm }).unwrap();
        mean_scattered(&res, &evo).unwrap().0
    };
    assert!(mean(true) < mean(false));
}

#[test]
fn trajectories_agree_with_exact_statistics() {
    let (res, pump) = reference(1.0);
    let q = QuantumConfig { nf: 8, xpm: true };
    let rec = simulate_trajectories(&res, &PulseParams::reference(1.0), &TrajectoryConfig::new(800, 8, 2024)).unwrap();
    let exact = counting_pnd(&res, &pump, &q, 8).unwrap();
    let evo = evolve(&res, &pump, &q).unwrap();
    let (unconditioned, _) = mean_scattered(&res, &evo).unwrap();
    let exact_mean = exact.pnd.marginal(Arm::Signal).mean();
    assert!((exact_mean / unconditioned - 1.0).abs() < 1e-4);

    let (m, se) = rec.mean(Arm::Signal);
    assert!((m - unconditioned).abs() < 3.0 * se, "{m} ± {se} vs {unconditioned}");

    let binned = pnd_from_trajectories(&rec, 8).unwrap();
    let n = rec.len() as f64;
    let tv: f64 = 0.5 * binned.probs().iter().zip(exact.pnd.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let bound: f64 = 0.5 * exact.pnd.probs().iter().map(|p| 3.0 * (p * (1.0 - p) / n).sqrt()).sum::<f64>();
    assert!(tv < bound, "{tv} vs {bound}");
}

#[test]
fn counting_statistics_converge() {
    // Halving the step and raising the truncation leave the count
    // distribution unchanged.
    let res = ResonatorParams::table1();
    let pulse = PulseParams::reference(1.0);
    let coarse = solve_pump(&res, &pulse, DT, true).unwrap();
    let fine = solve_pump(&res, &pulse, DT / 2.0, true).unwrap();
    let q = QuantumConfig { nf: 8, xpm: true };
    let a = counting_pnd(&res, &coarse, &q, 8).unwrap();
    let b = counting_pnd(&res, &fine, &q, 8).unwrap();
    let c = counting_pnd(&res, &coarse, &QuantumConfig { nf: 10, xpm: true }, 8).unwrap();
    assert!(1.0 - fidelity(&a.pnd, &b.pnd).unwrap() < 1e-6);
    assert!(1.0 - fidelity(&a.pnd, &c.pnd).unwrap() < 1e-6);
    let ma = a.pnd.marginal(Arm::Signal).mean();
    let mb = b.pnd.marginal(Arm::Signal).mean();
    assert!((ma / mb - 1.0).abs() < 5e-3);
}

#[test]
fn gaussian_moments_agree_with_master_equation() {
    let (res, pump) = reference(1.0);
    let evo = evolve(&res, &pump, &QuantumConfig { nf: 12, xpm: true }).unwrap();
    let (me, _) = mean_scattered(&res, &evo).unwrap();
    let (ga, _) = mean_scattered_gaussian(&res, &second_moments(&res, &pump, true).unwrap());
    assert!((me / ga - 1.0).abs() < 1e-6, "{me} vs {ga}");
}

fn record(counts: impl Iterator<Item = (u32, u32)>) -> TrajectoryRecord {
    TrajectoryRecord { seed: 0, counts: counts.map(|(n_s, n_i)| ClickCount { n_s, n_i }).collect() }
}

#[test]
fn g2_of_reference_statistics() {
    let mut rng = stream(5, 0);
    let n = 400_000;
    // Thermal counts with mean 1: geometric with success probability 1/2.
    let geo = Geometric::new(0.5).unwrap();
    let thermal = record((0..n).map(|_| (geo.sample(&mut rng) as u32, 0)));
    let g = g2bar(&thermal, Arm::Signal).unwrap();
    assert!((g.g2bar - 2.0).abs() < 0.03, "{}", g.g2bar);
    let poisson = Poisson::new(1.5).unwrap();
    let coherent = record((0..n).map(|_| (0, poisson.sample(&mut rng) as u32)));
    let g = g2bar(&coherent, Arm::Idler).unwrap();
    assert!((g.g2bar - 1.0).abs() < 0.01, "{}", g.g2bar);
    assert!(g2bar(&record([(0, 0)].into_iter()), Arm::Signal).is_err());
}
