//! Truncation-free moments of the pulsed source.
//!
//! The pair Hamiltonian is quadratic and the losses are linear, so the
//! two-mode state stays Gaussian. Its normally ordered second moments
//! `N_s = ⟨a_s†a_s⟩`, `N_i` and `C = ⟨a_s a_i⟩` obey closed linear equations,
//! and two-time correlations follow from the same equations by regression.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::master::{couplings, quantum_steps};
use super::params::{PulseParams, ResonatorParams};
use super::pump::{solve_pump, PumpSeries};
use crate::error::{Error, Result};
use crate::fock::Arm;

/// Second moments on the quantum grid (step `2·pump.dt`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    pub dt: f64,
    pub n_s: Vec<f64>,
    pub n_i: Vec<f64>,
    /// `⟨a_s a_i⟩`.
    pub pair: Vec<Complex64>,
}

#[derive(Clone, Copy)]
struct Moment {
    n_s: f64,
    n_i: f64,
    c: Complex64,
}

impl Moment {
    fn axpy(self, k: Moment, h: f64) -> Moment {
        Moment { n_s: self.n_s + k.n_s * h, n_i: self.n_i + k.n_i * h, c: self.c + k.c * h }
    }
}

fn moment_rhs(res: &ResonatorParams, g: Complex64, x: f64, m: Moment) -> Moment {
    let i = Complex64::new(0.0, 1.0);
    let gc = (g * m.c.conj()).im;
    Moment {
        n_s: -2.0 * res.gamma_tot_s * m.n_s - 2.0 * gc,
        n_i: -2.0 * res.gamma_tot_i * m.n_i - 2.0 * gc,
        c: Complex64::new(-res.gamma_tot_s - res.gamma_tot_i, 2.0 * x) * m.c + i * g * (m.n_s + m.n_i + 1.0),
    }
}

/// Integrates the second-moment equations from vacuum.
pub fn second_moments(res: &ResonatorParams, pump: &PumpSeries, xpm: bool) -> Result<SecondMoments> {
    res.validate()?;
    let steps = quantum_steps(pump);
    if steps == 0 {
        return Err(Error::invalid("pump series too short for a quantum step"));
    }
    let h = 2.0 * pump.dt;
    let mut m = Moment { n_s: 0.0, n_i: 0.0, c: Complex64::new(0.0, 0.0) };
    let mut out = SecondMoments {
        dt: h,
        n_s: Vec::with_capacity(steps + 1),
        n_i: Vec::with_capacity(steps + 1),
        pair: Vec::with_capacity(steps + 1),
    };
    let push = |out: &mut SecondMoments, m: Moment| {
        out.n_s.push(m.n_s);
        out.n_i.push(m.n_i);
        out.pair.push(m.c);
    };
    push(&mut out, m);
    for s in 0..steps {
        let (g0, x0) = couplings(pump, 2 * s, xpm);
        let (g1, x1) = couplings(pump, 2 * s + 1, xpm);
        let (g2, x2) = couplings(pump, 2 * s + 2, xpm);
        let k1 = moment_rhs(res, g0, x0, m);
        let k2 = moment_rhs(res, g1, x1, m.axpy(k1, 0.5 * h));
        let k3 = moment_rhs(res, g1, x1, m.axpy(k2, 0.5 * h));
        let k4 = moment_rhs(res, g2, x2, m.axpy(k3, h));
        m = Moment {
            n_s: m.n_s + h / 6.0 * (k1.n_s + 2.0 * (k2.n_s + k3.n_s) + k4.n_s),
            n_i: m.n_i + h / 6.0 * (k1.n_i + 2.0 * (k2.n_i + k3.n_i) + k4.n_i),
            c: m.c + (k1.c + (k2.c + k3.c) * 2.0 + k4.c) * (h / 6.0),
        };
        if !(m.n_s.is_finite() && m.n_i.is_finite()) {
            return Err(Error::invalid("second moments diverged"));
        }
        push(&mut out, m);
    }
    Ok(out)
}

fn trapezoid_weights(len: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; len];
    if len > 0 {
        w[0] *= 0.5;
        w[len - 1] *= 0.5;
    }
    w
}

/// Photons per pulse in the bus waveguide, `2 η_e γ_tot ∫ N dt`, plus the
/// free ring-down `η_e N(t_end)` after the last sample.
pub fn mean_scattered_gaussian(res: &ResonatorParams, m: &SecondMoments) -> (f64, f64) {
    let w = trapezoid_weights(m.n_s.len(), m.dt);
    let int_s: f64 = m.n_s.iter().zip(&w).map(|(n, w)| n * w).sum();
    let int_i: f64 = m.n_i.iter().zip(&w).map(|(n, w)| n * w).sum();
    let tail_s = res.eta_es * m.n_s.last().copied().unwrap_or(0.0);
    let tail_i = res.eta_ei * m.n_i.last().copied().unwrap_or(0.0);
    (2.0 * res.gamma_es() * int_s + tail_s, 2.0 * res.gamma_ei() * int_i + tail_i)
}

/// Time-integrated unheralded second-order coherence and the Schmidt number
/// estimate `K = 1/(ḡ₂ − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub g2bar: f64,
    /// `None` when `ḡ₂ ≤ 1`.
    pub schmidt: Option<f64>,
}

impl G2Estimate {
    pub fn new(g2bar: f64) -> Self {
        let schmidt = if g2bar > 1.0 { Some(1.0 / (g2bar - 1.0)) } else { None };
        G2Estimate { g2bar, schmidt }
    }
}

/// `ḡ₂ = 1 + ∫∫|⟨a†(t₁)a(t₂)⟩|² dt₁dt₂ / (∫⟨a†a⟩dt)²` for one arm.
///
/// The Gaussian factorization of the fourth moment is exact here since
/// `⟨a a⟩ = 0` for each arm. Two-time functions `⟨a†(t)a(t+τ)⟩` and
/// `⟨a†(t)b†(t+τ)⟩`, with `b` the partner mode, are propagated in `τ` with
/// the single-time equations of motion.
pub fn g2bar_gaussian(res: &ResonatorParams, pump: &PumpSeries, xpm: bool, arm: Arm) -> Result<G2Estimate> {
    let m = second_moments(res, pump, xpm)?;
    let (n, gamma_a, gamma_b) = match arm {
        Arm::Signal => (&m.n_s, res.gamma_tot_s, res.gamma_tot_i),
        Arm::Idler => (&m.n_i, res.gamma_tot_i, res.gamma_tot_s),
    };
    let len = n.len();
    let h = m.dt;
    let w = trapezoid_weights(len, h);
    let total: f64 = n.iter().zip(&w).map(|(n, w)| n * w).sum();
    if total <= 0.0 {
        return Err(Error::invalid("no photons generated"));
    }
    let i = Complex64::new(0.0, 1.0);
    let rhs = |s: usize, u: [Complex64; 2]| -> [Complex64; 2] {
        let (g, x) = couplings(pump, s, xpm);
        [
            Complex64::new(-gamma_a, x) * u[0] + i * g * u[1],
            Complex64::new(-gamma_b, -x) * u[1] - i * g.conj() * u[0],
        ]
    };
    let add = |u: [Complex64; 2], k: [Complex64; 2], s: f64| [u[0] + k[0] * s, u[1] + k[1] * s];
    let floor = 1e-14 * n.iter().cloned().fold(0.0, f64::max);
    let mut cross = 0.0;
    for start in 0..len {
        if n[start] <= floor {
            continue;
        }
        let mut u = [Complex64::new(n[start], 0.0), m.pair[start].conj()];
        cross += w[start] * w[start] * u[0].norm_sqr();
        for s in start..len - 1 {
            let k1 = rhs(2 * s, u);
            let k2 = rhs(2 * s + 1, add(u, k1, 0.5 * h));
            let k3 = rhs(2 * s + 1, add(u, k2, 0.5 * h));
            let k4 = rhs(2 * s + 2, add(u, k3, h));
            for c in 0..2 {
                u[c] += (k1[c] + (k2[c] + k3[c]) * 2.0 + k4[c]) * (h / 6.0);
            }
            cross += 2.0 * w[start] * w[s + 1] * u[0].norm_sqr();
        }
    }
    Ok(G2Estimate::new(1.0 + cross / (total * total)))
}

/// Mean scattered signal photons at one pump detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningPoint {
    pub detuning: f64,
    pub mean_signal: f64,
    pub mean_idler: f64,
}

/// Scattered photons per pulse for each detuning, from the exact moments.
pub fn detuning_scan(
    res: &ResonatorParams,
    pulse: &PulseParams,
    detunings: &[f64],
    dt: f64,
    spm: bool,
    xpm: bool,
) -> Result<Vec<DetuningPoint>> {
    detunings
        .iter()
        .map(|&d| {
            let pump = solve_pump(res, &pulse.with_detuning(d), dt, spm)?;
            let m = second_moments(res, &pump, xpm)?;
            let (s, i) = mean_scattered_gaussian(res, &m);
            Ok(DetuningPoint { detuning: d, mean_signal: s, mean_idler: i })
        })
        .collect()
}

/// Scan point with the largest signal output.
pub fn optimal_detuning(scan: &[DetuningPoint]) -> Option<DetuningPoint> {
    scan.iter().copied().fold(None, |best, p| match best {
        Some(b) if b.mean_signal >= p.mean_signal => Some(b),
        _ => Some(p),
    })
}
