use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::params::ResonatorParams;
use super::pump::PumpSeries;
use super::state::{apply_generator, Generator, Layout, QuantumState, Workspace};
use crate::error::{Error, Result};
use crate::fock::JointPnd;

/// Default Fock truncation per mode.
pub const DEFAULT_TRUNCATION: usize = 12;

/// Highest-level population that aborts an evolution.
pub const TOP_POPULATION_LIMIT: f64 = 1e-4;

/// Largest acceptable unintegrated scattered-photon tail.
pub const TAIL_LIMIT: f64 = 1e-4;

/// Pair coupling below this fraction of the slower decay rate counts as off.
pub const COUPLING_CUTOFF: f64 = 1e-6;

/// Options of the quantum stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumConfig {
    /// Fock truncation per mode.
    pub nf: usize,
    /// Include the cross-phase shift `−2Λ̄|a_p|²(n_s + n_i)`.
    pub xpm: bool,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        QuantumConfig { nf: DEFAULT_TRUNCATION, xpm: true }
    }
}

impl QuantumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nf < 1 {
            return Err(Error::invalid("Fock truncation must be at least 1"));
        }
        Ok(())
    }
}

/// Quantum step count of a pump series: one step spans two pump samples so
/// that every Runge-Kutta stage lands on a sample.
pub(crate) fn quantum_steps(pump: &PumpSeries) -> usize {
    (pump.len().saturating_sub(1)) / 2
}

/// Pair amplitude `Λ̄ (a_p*)²` and cross-phase shift `2Λ̄|a_p|²` at sample `j`.
pub(crate) fn couplings(pump: &PumpSeries, j: usize, xpm: bool) -> (Complex64, f64) {
    let a = pump.values[j];
    let g = a.conj() * a.conj() * pump.lambda_bar;
    let x = if xpm { 2.0 * pump.lambda_bar * a.norm_sqr() } else { 0.0 };
    (g, x)
}

/// First quantum step after which the pair coupling stays negligible.
pub(crate) fn coupling_horizon(res: &ResonatorParams, pump: &PumpSeries) -> usize {
    let steps = quantum_steps(pump);
    let cutoff = COUPLING_CUTOFF * res.gamma_tot_s.min(res.gamma_tot_i);
    let last_on = (0..=2 * steps).rev().find(|&j| pump.values[j].norm_sqr() * pump.lambda_bar > cutoff);
    match last_on {
        None => 0,
        Some(j) => ((j + 2) / 2).min(steps),
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Rates {
    pub recycle_s: f64,
    pub recycle_i: f64,
}

pub(crate) fn generator_at(res: &ResonatorParams, pump: &PumpSeries, j: usize, xpm: bool, rates: Rates) -> Generator {
    let (g, x) = couplings(pump, j, xpm);
    Generator {
        g,
        x,
        gamma_s: res.gamma_tot_s,
        gamma_i: res.gamma_tot_i,
        recycle_s: rates.recycle_s,
        recycle_i: rates.recycle_i,
    }
}

/// Classic fourth-order Runge-Kutta buffers for the block state.
#[derive(Debug, Clone)]
pub(crate) struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4 {
    pub fn new(size: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); size];
        Rk4 { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advances `rho` by `h` with generators at the start, middle and end.
    pub fn step(
        &mut self,
        layout: &Layout,
        ws: &Workspace,
        gens: [&Generator; 3],
        rho: &mut [Complex64],
        h: f64,
    ) {
        apply_generator(layout, ws, gens[0], rho, &mut self.k1);
        for ((t, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(&self.k1) {
            *t = r + k * (0.5 * h);
        }
        apply_generator(layout, ws, gens[1], &self.tmp, &mut self.k2);
        for ((t, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(&self.k2) {
            *t = r + k * (0.5 * h);
        }
        apply_generator(layout, ws, gens[1], &self.tmp, &mut self.k3);
        for ((t, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(&self.k3) {
            *t = r + k * h;
        }
        apply_generator(layout, ws, gens[2], &self.tmp, &mut self.k4);
        let w = h / 6.0;
        for (i, r) in rho.iter_mut().enumerate() {
            *r += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }
}

/// Unconditioned evolution sampled on the quantum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    /// Quantum step (ps).
    pub dt: f64,
    pub times: Vec<f64>,
    /// Intracavity `Tr(ρ a_s†a_s)` and `Tr(ρ a_i†a_i)`.
    pub n_s: Vec<f64>,
    pub n_i: Vec<f64>,
    pub trace: Vec<f64>,
    /// Pair generation rate `−2 Im(g ⟨a_s†a_i†⟩)` (1/ps).
    pub pair_rate: Vec<f64>,
    pub max_top_population: f64,
    pub max_positivity_defect: f64,
    /// Photon-number distribution at the moment of the largest `⟨n_s⟩`.
    pub peak_pnd: Vec<f64>,
}

/// Integrates the master equation with decay `D[√(2γ) a]` on both modes,
/// starting from vacuum at `t = 0`.
pub fn evolve(res: &ResonatorParams, pump: &PumpSeries, cfg: &QuantumConfig) -> Result<Evolution> {
    evolve_observed(res, pump, cfg, |_| {})
}

/// [`evolve`] calling `observe` with the state at every grid time.
pub fn evolve_observed<F: FnMut(&QuantumState)>(
    res: &ResonatorParams,
    pump: &PumpSeries,
    cfg: &QuantumConfig,
    mut observe: F,
) -> Result<Evolution> {
    res.validate()?;
    cfg.validate()?;
    let steps = quantum_steps(pump);
    if steps == 0 {
        return Err(Error::invalid("pump series too short for a quantum step"));
    }
    let h = 2.0 * pump.dt;
    let mut state = QuantumState::vacuum(cfg.nf);
    let layout = state.layout().clone();
    let ws = Workspace::new(&layout);
    let mut rk = Rk4::new(layout.size());
    let rates = Rates { recycle_s: 2.0 * res.gamma_tot_s, recycle_i: 2.0 * res.gamma_tot_i };

    let mut evo = Evolution {
        dt: h,
        times: Vec::with_capacity(steps + 1),
        n_s: Vec::with_capacity(steps + 1),
        n_i: Vec::with_capacity(steps + 1),
        trace: Vec::with_capacity(steps + 1),
        pair_rate: Vec::with_capacity(steps + 1),
        max_top_population: 0.0,
        max_positivity_defect: 0.0,
        peak_pnd: state.photon_numbers(),
    };
    let mut peak = -1.0;
    let mut record = |state: &QuantumState, m: usize, evo: &mut Evolution| -> Result<()> {
        let t = m as f64 * h;
        let (ns, ni) = state.mean_numbers();
        let (g, _) = couplings(pump, 2 * m, cfg.xpm);
        let top = state.top_population();
        evo.times.push(t);
        evo.n_s.push(ns);
        evo.n_i.push(ni);
        evo.trace.push(state.trace());
        evo.pair_rate.push(-2.0 * (g * state.pair_coherence()).im);
        evo.max_top_population = evo.max_top_population.max(top);
        if m.is_multiple_of(16) {
            evo.max_positivity_defect = evo.max_positivity_defect.max(state.positivity_defect());
        }
        if ns > peak {
            peak = ns;
            evo.peak_pnd = state.photon_numbers();
        }
        if top > TOP_POPULATION_LIMIT {
            return Err(Error::TruncationOverflow { population: top, time: t });
        }
        Ok(())
    };
    record(&state, 0, &mut evo)?;
    observe(&state);
    for m in 0..steps {
        let g0 = generator_at(res, pump, 2 * m, cfg.xpm, rates);
        let g1 = generator_at(res, pump, 2 * m + 1, cfg.xpm, rates);
        let g2 = generator_at(res, pump, 2 * m + 2, cfg.xpm, rates);
        rk.step(&layout, &ws, [&g0, &g1, &g2], state.data_mut(), h);
        state.time = (m + 1) as f64 * h;
        record(&state, m + 1, &mut evo)?;
        observe(&state);
    }
    Ok(evo)
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dt * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Photons per pulse leaving through the bus waveguide,
/// `2 η_e γ_tot ∫ Tr(ρ a†a) dt`, for signal and idler.
pub fn mean_scattered(res: &ResonatorParams, evo: &Evolution) -> Result<(f64, f64)> {
    let last_s = evo.n_s.last().copied().unwrap_or(0.0);
    let last_i = evo.n_i.last().copied().unwrap_or(0.0);
    // After the pump is gone ⟨n⟩ decays as e^{−2γt}, leaving η_e ⟨n(t_end)⟩.
    let tail = (res.eta_es * last_s).max(res.eta_ei * last_i);
    if tail > TAIL_LIMIT {
        return Err(Error::UnconvergedTail { tail });
    }
    Ok((
        2.0 * res.gamma_es() * trapezoid(&evo.n_s, evo.dt),
        2.0 * res.gamma_ei() * trapezoid(&evo.n_i, evo.dt),
    ))
}

/// Photon bookkeeping of an evolution: `(generated, emitted, remaining)` per
/// mode, where emitted counts all decay channels.
pub fn photon_balance(res: &ResonatorParams, evo: &Evolution) -> (f64, f64, f64) {
    let generated = trapezoid(&evo.pair_rate, evo.dt);
    let emitted = 2.0 * res.gamma_tot_s * trapezoid(&evo.n_s, evo.dt);
    (generated, emitted, evo.n_s.last().copied().unwrap_or(0.0))
}

/// Exact distribution of detected photocounts per pulse.
///
/// Evolves one unnormalized state per count pair `(k_s, k_i)` with the
/// monitored jumps feeding the next count; counts at or above `max_count`
/// are pooled in the last bin. Once the pump coupling is negligible the
/// remaining intracavity photons are detected independently with probability
/// `η_e`, which completes the distribution in closed form.
pub fn counting_pnd(
    res: &ResonatorParams,
    pump: &PumpSeries,
    cfg: &QuantumConfig,
    max_count: usize,
) -> Result<CountingResult> {
    res.validate()?;
    cfg.validate()?;
    if max_count < 1 {
        return Err(Error::invalid("max_count must be at least 1"));
    }
    let steps = coupling_horizon(res, pump);
    let h = 2.0 * pump.dt;
    let k = max_count + 1;
    let vac = QuantumState::vacuum(cfg.nf);
    let layout = vac.layout().clone();
    let ws = Workspace::new(&layout);
    let size = layout.size();
    let total = k * k * size;
    let mut rho = vec![Complex64::new(0.0, 0.0); total];
    rho[..size].copy_from_slice(vac.data());

    let rates = Rates {
        recycle_s: 2.0 * (1.0 - res.eta_es) * res.gamma_tot_s,
        recycle_i: 2.0 * (1.0 - res.eta_ei) * res.gamma_tot_i,
    };
    let jump_s = 2.0 * res.gamma_es();
    let jump_i = 2.0 * res.gamma_ei();

    let deriv = |gen: &Generator, src: &[Complex64], dst: &mut [Complex64]| {
        for ks in 0..k {
            for ki in 0..k {
                let idx = (ks * k + ki) * size;
                let out = &mut dst[idx..idx + size];
                apply_generator(&layout, &ws, gen, &src[idx..idx + size], out);
                let mut add_jump = |from_s: usize, from_i: usize, signal: bool| {
                    let from = (from_s * k + from_i) * size;
                    let view = &src[from..from + size];
                    super::state::jump_add(&layout, view, out, if signal { jump_s } else { jump_i }, signal);
                };
                if ks > 0 {
                    add_jump(ks - 1, ki, true);
                }
                if ks == k - 1 {
                    add_jump(ks, ki, true);
                }
                if ki > 0 {
                    add_jump(ks, ki - 1, false);
                }
                if ki == k - 1 {
                    add_jump(ks, ki, false);
                }
            }
        }
    };

    let zero = Complex64::new(0.0, 0.0);
    let mut k1 = vec![zero; total];
    let mut k2 = vec![zero; total];
    let mut k3 = vec![zero; total];
    let mut k4 = vec![zero; total];
    let mut tmp = vec![zero; total];
    let mut max_top: f64 = 0.0;
    for m in 0..steps {
        let g0 = generator_at(res, pump, 2 * m, cfg.xpm, rates);
        let g1 = generator_at(res, pump, 2 * m + 1, cfg.xpm, rates);
        let g2 = generator_at(res, pump, 2 * m + 2, cfg.xpm, rates);
        deriv(&g0, &rho, &mut k1);
        for i in 0..total {
            tmp[i] = rho[i] + k1[i] * (0.5 * h);
        }
        deriv(&g1, &tmp, &mut k2);
        for i in 0..total {
            tmp[i] = rho[i] + k2[i] * (0.5 * h);
        }
        deriv(&g1, &tmp, &mut k3);
        for i in 0..total {
            tmp[i] = rho[i] + k3[i] * h;
        }
        deriv(&g2, &tmp, &mut k4);
        for i in 0..total {
            rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        if m % 8 == 0 || m + 1 == steps {
            let mut top = 0.0;
            for c in 0..k * k {
                let mut s = QuantumState::zeros_like(&vac);
                s.data_mut().copy_from_slice(&rho[c * size..(c + 1) * size]);
                top += s.top_population();
            }
            max_top = max_top.max(top);
            if top > TOP_POPULATION_LIMIT {
                return Err(Error::TruncationOverflow { population: top, time: (m + 1) as f64 * h });
            }
        }
    }

    // Closed-form completion: remaining photons are detected binomially.
    let nf = cfg.nf;
    let bs = binomial_table(nf, res.eta_es);
    let bi = binomial_table(nf, res.eta_ei);
    let mut probs = vec![0.0; k * k];
    for ks in 0..k {
        for ki in 0..k {
            let c = ks * k + ki;
            let mut s = QuantumState::zeros_like(&vac);
            s.data_mut().copy_from_slice(&rho[c * size..(c + 1) * size]);
            let pops = s.photon_numbers();
            for ns in 0..=nf {
                for ni in 0..=nf {
                    let p = pops[ns * (nf + 1) + ni];
                    if p == 0.0 {
                        continue;
                    }
                    for ds in 0..=ns {
                        let ws_ = bs[ns][ds];
                        for di in 0..=ni {
                            let fs = (ks + ds).min(k - 1);
                            let fi = (ki + di).min(k - 1);
                            probs[fs * k + fi] += p * ws_ * bi[ni][di];
                        }
                    }
                }
            }
        }
    }
    let norm: f64 = probs.iter().sum();
    let pooled: f64 = probs
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx / k == k - 1 || idx % k == k - 1)
        .map(|(_, p)| *p)
        .sum();
    Ok(CountingResult {
        pnd: JointPnd::from_weights(max_count, probs)?,
        trace: norm,
        pooled_mass: pooled / norm,
        max_top_population: max_top,
    })
}

/// Output of [`counting_pnd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    /// Detected-count distribution; the last row and column pool higher counts.
    pub pnd: JointPnd,
    /// Total probability before renormalization (1 up to integration error).
    pub trace: f64,
    /// Probability in the pooled last row and column.
    pub pooled_mass: f64,
    pub max_top_population: f64,
}

/// `table[n][m] = C(n, m) ηᵐ (1−η)^{n−m}`.
pub(crate) fn binomial_table(nf: usize, eta: f64) -> Vec<Vec<f64>> {
    (0..=nf)
        .map(|n| {
            let mut row = vec![0.0; n + 1];
            let mut c = 1.0;
            for m in 0..=n {
                row[m] = c * libm::pow(eta, m as f64) * libm::pow(1.0 - eta, (n - m) as f64);
                c = c * (n - m) as f64 / (m + 1) as f64;
            }
            row
        })
        .collect()
}
