use alloc::vec::Vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::params::{PulseParams, ResonatorParams};
use crate::error::{Error, Result};

/// Largest pump step as a fraction of the pump lifetime.
pub const MAX_STEP_FRACTION: f64 = 0.02;

/// Ring-down after the drive, in pump lifetimes.
pub const RING_DOWN_LIFETIMES: f64 = 10.0;

/// Intracavity pump amplitude `⟨a_p⟩` (√photons) on a uniform grid from `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSeries {
    pub dt: f64,
    pub values: Vec<Complex64>,
    /// Self-phase strength `Λ̄` used (1/ps), kept for the quantum stage.
    pub lambda_bar: f64,
}

impl PumpSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the last sample (ps).
    pub fn end_time(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Peak intracavity photon number.
    pub fn peak_intensity(&self) -> f64 {
        self.values.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
    }
}

fn cis(theta: f64) -> Complex64 {
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

/// Integrates `da/dt = (−γ + 2iΛ̄|a|²) a − i√(2γ_ep) β(t) e^{iΔt}` with RK4
/// over `[0, T + 10/γ]`. With `spm = false` the intensity-dependent term is
/// dropped.
pub fn solve_pump(res: &ResonatorParams, pulse: &PulseParams, dt: f64, spm: bool) -> Result<PumpSeries> {
    res.validate()?;
    pulse.validate()?;
    let limit = MAX_STEP_FRACTION / res.gamma_tot_p;
    if !(dt.is_finite() && dt > 0.0 && dt <= limit) {
        return Err(Error::StepSize { dt, limit });
    }
    let t_end = pulse.duration + RING_DOWN_LIFETIMES / res.gamma_tot_p;
    let steps = libm::ceil(t_end / dt) as usize;
    let gamma = res.gamma_tot_p;
    let lam = if spm { res.lambda_bar_per_ps() } else { 0.0 };
    let drive = libm::sqrt(2.0 * res.gamma_ep() * pulse.drive_flux());
    let duration = pulse.duration;
    let detuning = pulse.detuning;
    let rhs = |t: f64, a: Complex64| -> Complex64 {
        let on = if (0.0..duration).contains(&t) { drive } else { 0.0 };
        let forcing = Complex64::new(0.0, -on) * cis(detuning * t);
        Complex64::new(-gamma, 2.0 * lam * a.norm_sqr()) * a + forcing
    };
    let mut values = Vec::with_capacity(steps + 1);
    let mut a = Complex64::new(0.0, 0.0);
    values.push(a);
    for j in 0..steps {
        let t = j as f64 * dt;
        let k1 = rhs(t, a);
        let k2 = rhs(t + 0.5 * dt, a + k1 * (0.5 * dt));
        let k3 = rhs(t + 0.5 * dt, a + k2 * (0.5 * dt));
        let k4 = rhs(t + dt, a + k3 * dt);
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        values.push(a);
    }
    Ok(PumpSeries { dt, values, lambda_bar: res.lambda_bar_per_ps() })
}

/// Steady intracavity photon number of a continuous drive with flux `flux`,
/// the largest real root of `I(γ² + (Δ − 2Λ̄I)²) = 2γ_ep·flux`.
pub fn steady_state_intensity(res: &ResonatorParams, flux: f64, detuning: f64, spm: bool) -> f64 {
    let g = res.gamma_tot_p;
    let s = 2.0 * res.gamma_ep() * flux;
    let lam = if spm { res.lambda_bar_per_ps() } else { 0.0 };
    if lam == 0.0 {
        return s / (g * g + detuning * detuning);
    }
    // Cubic 4Λ̄² I³ − 4Λ̄Δ I² + (γ² + Δ²) I − s = 0; bisection on the upper branch.
    let f = |i: f64| i * (g * g + (detuning - 2.0 * lam * i) * (detuning - 2.0 * lam * i)) - s;
    let mut hi = s / (g * g) + detuning.abs() / lam + 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
