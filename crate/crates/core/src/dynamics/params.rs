use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Pump wavelength of the reference device (m).
pub const PUMP_WAVELENGTH: f64 = 1544.5e-9;

const PER_SECOND_TO_PER_PS: f64 = 1e-12;

/// Microresonator parameters. Rates are amplitude decay rates in 1/ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub gamma_tot_p: f64,
    pub gamma_tot_s: f64,
    pub gamma_tot_i: f64,
    pub eta_es: f64,
    pub eta_ei: f64,
    /// Pump coupling rate (1/ps); `eta_es * gamma_tot_p` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_ep: Option<f64>,
    /// Round-trip time (ps).
    pub tau_rt: f64,
    #[serde(default = "default_group_index")]
    pub n_g: f64,
    /// Pair-generation and cross-phase strength (1/s).
    pub lambda_bar: f64,
    /// Classical self-phase coefficient (1/J).
    pub lambda_cl: f64,
}

fn default_group_index() -> f64 {
    2.09
}

impl ResonatorParams {
    /// Reference silicon-nitride device.
    pub fn table1() -> Self {
        ResonatorParams {
            gamma_tot_p: 1.84e-3,
            gamma_tot_s: 2.25e-3,
            gamma_tot_i: 2.25e-3,
            eta_es: 0.926,
            eta_ei: 0.926,
            gamma_ep: None,
            tau_rt: 5.0,
            n_g: 2.09,
            lambda_bar: 1.72,
            lambda_cl: 6.72e7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("gamma_tot_p", self.gamma_tot_p),
            ("gamma_tot_s", self.gamma_tot_s),
            ("gamma_tot_i", self.gamma_tot_i),
            ("tau_rt", self.tau_rt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        for (what, v) in [("eta_es", self.eta_es), ("eta_ei", self.eta_ei)] {
            if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        if let Some(g) = self.gamma_ep {
            if !(g.is_finite() && g > 0.0 && g <= self.gamma_tot_p) {
                return Err(Error::Domain { what: "gamma_ep", value: g });
            }
        }
        for (what, v) in [("lambda_bar", self.lambda_bar), ("lambda_cl", self.lambda_cl)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(())
    }

    pub fn gamma_ep(&self) -> f64 {
        self.gamma_ep.unwrap_or(self.eta_es * self.gamma_tot_p)
    }

    /// `lambda_bar` in 1/ps.
    pub fn lambda_bar_per_ps(&self) -> f64 {
        self.lambda_bar * PER_SECOND_TO_PER_PS
    }

    /// Escape (external) rate of the signal mode, `η_es γ_tot,s`.
    pub fn gamma_es(&self) -> f64 {
        self.eta_es * self.gamma_tot_s
    }

    pub fn gamma_ei(&self) -> f64 {
        self.eta_ei * self.gamma_tot_i
    }
}

/// Top-hat pump pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Average power (mW).
    pub power: f64,
    /// Repetition rate (1/s).
    pub rep_rate: f64,
    /// Duration (ps).
    pub duration: f64,
    /// Laser detuning from the cold pump resonance (1/ps).
    pub detuning: f64,
    /// Pump angular frequency (rad/ps).
    pub pump_freq: f64,
}

impl PulseParams {
    /// 300 ps pulses at 2.5 MHz, on the cold resonance.
    pub fn reference(power_mw: f64) -> Self {
        PulseParams {
            power: power_mw,
            rep_rate: 2.5e6,
            duration: 300.0,
            detuning: 0.0,
            pump_freq: 2.0 * core::f64::consts::PI * SPEED_OF_LIGHT / PUMP_WAVELENGTH * PER_SECOND_TO_PER_PS,
        }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        PulseParams { detuning, ..self }
    }

    pub fn with_power(self, power: f64) -> Self {
        PulseParams { power, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::Domain { what: "power", value: self.power });
        }
        for (what, v) in [
            ("rep_rate", self.rep_rate),
            ("duration", self.duration),
            ("pump_freq", self.pump_freq),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        if !self.detuning.is_finite() {
            return Err(Error::Domain { what: "detuning", value: self.detuning });
        }
        Ok(())
    }

    /// Pump photons per pulse, `P / (R ħ ω_p)`.
    pub fn photons_per_pulse(&self) -> f64 {
        let energy = self.power * 1e-3 / self.rep_rate;
        energy / (HBAR * self.pump_freq / PER_SECOND_TO_PER_PS)
    }

    /// Squared drive amplitude `|β|²` during the pulse: the photon flux in 1/ps.
    pub fn drive_flux(&self) -> f64 {
        self.photons_per_pulse() / self.duration
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::escape_efficiency;

    #[test]
    fn reference_values() {
        let r = ResonatorParams::table1();
        r.validate().unwrap();
        assert!((r.gamma_ep() - 0.926 * 1.84e-3).abs() < 1e-15);
        let p = PulseParams::reference(1.0);
        assert!((p.pump_freq - 1219.6).abs() < 0.1, "{}", p.pump_freq);
        // 0.4 nJ per pulse of ~1.29e-19 J photons.
        assert!((p.photons_per_pulse() / 3.109e9 - 1.0).abs() < 1e-3);
        // The escape efficiency matches the loaded and intrinsic quality factors.
        assert!((escape_efficiency(2.6e5, 3.5e6).unwrap() - r.eta_es).abs() < 1e-3);
    }

    #[test]
    fn classical_and_quantum_kerr_coefficients_agree() {
        let r = ResonatorParams::table1();
        let p = PulseParams::reference(1.0);
        let hbar_omega = HBAR * p.pump_freq * 1e12;
        let from_classical = r.lambda_cl * hbar_omega / (r.tau_rt * 1e-12);
        assert!((from_classical / r.lambda_bar - 1.0).abs() < 0.01, "{from_classical}");
    }
}
