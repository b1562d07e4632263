use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::gaussian::G2Estimate;
use super::master::{coupling_horizon, generator_at, quantum_steps, QuantumConfig, Rates, Rk4, TOP_POPULATION_LIMIT};
use super::params::{PulseParams, ResonatorParams};
use super::pump::{solve_pump, PumpSeries};
use super::state::{jump_add, Layout, QuantumState, Workspace};
use crate::error::{Error, Result};
use crate::fock::{Arm, JointPnd};
use crate::rng::{stream, StreamRng};

/// Largest allowed jump probability per channel and step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.05;

/// Detected photocounts of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickCount {
    pub n_s: u32,
    pub n_i: u32,
}

/// Per-pulse counts of a batch of trajectories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub counts: Vec<ClickCount>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn arm_counts(&self, arm: Arm) -> impl Iterator<Item = u32> + '_ {
        self.counts.iter().map(move |c| match arm {
            Arm::Signal => c.n_s,
            Arm::Idler => c.n_i,
        })
    }

    /// Sample mean and its standard error for one arm.
    pub fn mean(&self, arm: Arm) -> (f64, f64) {
        let n = self.counts.len() as f64;
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let m = self.arm_counts(arm).map(f64::from).sum::<f64>() / n;
        let v = self.arm_counts(arm).map(|c| (f64::from(c) - m) * (f64::from(c) - m)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, libm::sqrt(v / n))
    }
}

/// Largest number of step halvings used to keep jump probabilities small.
pub const MAX_REFINEMENTS: u32 = 4;

/// Predicted jump probability above which a step is split in two.
const REFINE_THRESHOLD: f64 = 0.4 * MAX_JUMP_PROBABILITY;

/// Options of the trajectory stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub quantum: QuantumConfig,
    pub seed: u64,
    /// Pump step (ps); the quantum step is twice this.
    pub dt: f64,
    /// Include self-phase modulation of the pump.
    pub spm: bool,
}

impl TrajectoryConfig {
    pub fn new(n_traj: usize, nf: usize, seed: u64) -> Self {
        TrajectoryConfig { n_traj, quantum: QuantumConfig { nf, xpm: true }, seed, dt: 4.0, spm: true }
    }
}

/// Runs `n_traj` photodetection-conditioned evolutions.
///
/// Each step evolves the conditioned density operator with the no-jump
/// generator, where only the unmonitored losses `2(1−η_e)γ_tot` are recycled,
/// and then fires a detection in each arm with probability
/// `2η_eγ_tot ⟨a†a⟩ dt`, averaged over the step. Steps where the conditioned
/// photon number would make that probability large are split in halves, up
/// to [`MAX_REFINEMENTS`] times, on pump series solved at the finer steps.
/// Once the pump coupling is negligible the remaining photons are drawn from
/// the conditioned photon distribution and detected independently with
/// probability `η_e`. Trajectory `j` uses random stream `j` of `seed`.
pub fn simulate_trajectories(
    res: &ResonatorParams,
    pulse: &PulseParams,
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryRecord> {
    res.validate()?;
    cfg.quantum.validate()?;
    if cfg.n_traj == 0 {
        return Err(Error::invalid("n_traj must be at least 1"));
    }
    let pumps = (0..=MAX_REFINEMENTS)
        .map(|level| solve_pump(res, pulse, cfg.dt / f64::from(1u32 << level), cfg.spm))
        .collect::<Result<Vec<_>>>()?;
    if quantum_steps(&pumps[0]) == 0 {
        return Err(Error::invalid("pump series too short for a quantum step"));
    }
    let results = crate::par::map_indices(cfg.n_traj, |j| {
        let mut rng = stream(cfg.seed, j as u64);
        run_one(res, &pumps, &cfg.quantum, &mut rng)
    });
    let counts = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryRecord { seed: cfg.seed, counts })
}

struct Conditioned<'a> {
    res: &'a ResonatorParams,
    q: &'a QuantumConfig,
    state: QuantumState,
    layout: Layout,
    ws: Workspace,
    rk: Rk4,
    scratch: Vec<Complex64>,
    rates: Rates,
    rate_s: f64,
    rate_i: f64,
    clicks: ClickCount,
}

impl Conditioned<'_> {
    /// One no-jump step of length `2·pump.dt` starting at sample `j`, then
    /// the jump draws.
    fn step(&mut self, pump: &PumpSeries, j: usize, rng: &mut StreamRng) -> Result<()> {
        let h = 2.0 * pump.dt;
        let (ns0, ni0) = self.state.mean_numbers();
        let g0 = generator_at(self.res, pump, j, self.q.xpm, self.rates);
        let g1 = generator_at(self.res, pump, j + 1, self.q.xpm, self.rates);
        let g2 = generator_at(self.res, pump, j + 2, self.q.xpm, self.rates);
        self.rk.step(&self.layout, &self.ws, [&g0, &g1, &g2], self.state.data_mut(), h);
        let tr = self.state.trace();
        self.state.scale(1.0 / tr);
        let (ns1, ni1) = self.state.mean_numbers();
        let p_s = self.rate_s * h * 0.5 * (ns0 + ns1);
        let p_i = self.rate_i * h * 0.5 * (ni0 + ni1);
        for p in [p_s, p_i] {
            if p >= MAX_JUMP_PROBABILITY {
                return Err(Error::JumpProbability { probability: p, limit: MAX_JUMP_PROBABILITY });
            }
        }
        for (p, signal) in [(p_s, true), (p_i, false)] {
            if rng.random::<f64>() < p {
                self.scratch.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                jump_add(&self.layout, self.state.data(), &mut self.scratch, 1.0, signal);
                self.state.data_mut().copy_from_slice(&self.scratch);
                let tr = self.state.trace();
                if tr <= 0.0 {
                    return Err(Error::invalid("jump from an empty mode"));
                }
                self.state.scale(1.0 / tr);
                if signal {
                    self.clicks.n_s += 1;
                } else {
                    self.clicks.n_i += 1;
                }
            }
        }
        let top = self.state.top_population();
        if top > TOP_POPULATION_LIMIT {
            return Err(Error::TruncationOverflow { population: top, time: pump.time(j + 2) });
        }
        Ok(())
    }

    /// Covers the interval `[j, j + 2]` of refinement `level` with steps
    /// small enough for the current photon number.
    fn advance(&mut self, pumps: &[PumpSeries], level: usize, j: usize, rng: &mut StreamRng) -> Result<()> {
        let (ns, ni) = self.state.mean_numbers();
        let h = 2.0 * pumps[level].dt;
        let predicted = h * (self.rate_s * ns).max(self.rate_i * ni);
        if predicted > REFINE_THRESHOLD && level + 1 < pumps.len() {
            self.advance(pumps, level + 1, 2 * j, rng)?;
            self.advance(pumps, level + 1, 2 * j + 2, rng)
        } else {
            self.step(&pumps[level], j, rng)
        }
    }
}

fn run_one(res: &ResonatorParams, pumps: &[PumpSeries], q: &QuantumConfig, rng: &mut StreamRng) -> Result<ClickCount> {
    let steps = coupling_horizon(res, &pumps[0]);
    let state = QuantumState::vacuum(q.nf);
    let layout = state.layout().clone();
    let mut c = Conditioned {
        res,
        q,
        ws: Workspace::new(&layout),
        rk: Rk4::new(layout.size()),
        scratch: vec![Complex64::new(0.0, 0.0); layout.size()],
        layout,
        state,
        rates: Rates {
            recycle_s: 2.0 * (1.0 - res.eta_es) * res.gamma_tot_s,
            recycle_i: 2.0 * (1.0 - res.eta_ei) * res.gamma_tot_i,
        },
        rate_s: 2.0 * res.gamma_es(),
        rate_i: 2.0 * res.gamma_ei(),
        clicks: ClickCount { n_s: 0, n_i: 0 },
    };
    for m in 0..steps {
        c.advance(pumps, 0, 2 * m, rng)?;
    }
    let (state, mut clicks) = (c.state, c.clicks);
    // Remaining intracavity photons leave without further pair creation.
    let pops = state.photon_numbers();
    let total: f64 = pops.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let d = q.nf + 1;
    let mut pick = pops.len() - 1;
    for (idx, p) in pops.iter().enumerate() {
        if u < *p {
            pick = idx;
            break;
        }
        u -= p;
    }
    let (ns, ni) = (pick / d, pick % d);
    let draw = |rng: &mut StreamRng, n: usize, eta: f64| -> Result<u32> {
        if n == 0 {
            return Ok(0);
        }
        let b = Binomial::new(n as u64, eta).map_err(|_| Error::Domain { what: "eta_e", value: eta })?;
        Ok(b.sample(rng) as u32)
    };
    clicks.n_s += draw(rng, ns, res.eta_es)?;
    clicks.n_i += draw(rng, ni, res.eta_ei)?;
    Ok(clicks)
}

/// Normalized histogram of the counts on `[0, trunc]²`.
pub fn pnd_from_trajectories(rec: &TrajectoryRecord, trunc: usize) -> Result<JointPnd> {
    if rec.is_empty() {
        return Err(Error::invalid("empty trajectory record"));
    }
    let d = trunc + 1;
    let mut hist = vec![0.0; d * d];
    for c in &rec.counts {
        let (s, i) = (c.n_s as usize, c.n_i as usize);
        if s > trunc || i > trunc {
            return Err(Error::Shape { expected: d, got: s.max(i) + 1 });
        }
        hist[s * d + i] += 1.0;
    }
    let n = rec.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    JointPnd::new(trunc, hist)
}

/// `ḡ₂ = ⟨n(n−1)⟩/⟨n⟩²` over the per-pulse counts of one arm.
pub fn g2bar(rec: &TrajectoryRecord, arm: Arm) -> Result<G2Estimate> {
    if rec.is_empty() {
        return Err(Error::invalid("empty trajectory record"));
    }
    let n = rec.len() as f64;
    let mean = rec.arm_counts(arm).map(f64::from).sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::invalid("no counts in the record"));
    }
    let fact = rec.arm_counts(arm).map(|c| f64::from(c) * (f64::from(c) - 1.0)).sum::<f64>() / n;
    Ok(G2Estimate::new(fact / (mean * mean)))
}

/// `ḡ₂` of one arm of a count distribution.
pub fn g2bar_of_pnd(p: &JointPnd, arm: Arm) -> Result<G2Estimate> {
    let m = p.marginal(arm);
    let mean = m.mean();
    if mean == 0.0 {
        return Err(Error::invalid("no counts in the distribution"));
    }
    let fact: f64 = m.probs().iter().enumerate().map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p).sum();
    Ok(G2Estimate::new(fact / (mean * mean)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::params::PulseParams;

    fn record(counts: &[(u32, u32)]) -> TrajectoryRecord {
        TrajectoryRecord { seed: 0, counts: counts.iter().map(|&(n_s, n_i)| ClickCount { n_s, n_i }).collect() }
    }

    #[test]
    fn no_nonlinearity_gives_no_counts() {
        let res = ResonatorParams { lambda_bar: 0.0, ..ResonatorParams::table1() };
        let rec = simulate_trajectories(&res, &PulseParams::reference(1.0), &TrajectoryConfig::new(5, 4, 1)).unwrap();
        assert!(rec.counts.iter().all(|c| c.n_s == 0 && c.n_i == 0));
        let p = pnd_from_trajectories(&rec, 3).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let res = ResonatorParams::table1();
        let cfg = TrajectoryConfig::new(8, 6, 9);
        let a = simulate_trajectories(&res, &PulseParams::reference(1.0), &cfg).unwrap();
        let b = simulate_trajectories(&res, &PulseParams::reference(1.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_normalized() {
        let rec = record(&[(0, 0), (1, 2), (1, 2), (3, 0)]);
        let p = pnd_from_trajectories(&rec, 3).unwrap();
        assert_eq!(p.probs().iter().sum::<f64>(), 1.0);
        assert_eq!(p.get(1, 2), 0.5);
        assert!(pnd_from_trajectories(&rec, 2).is_err());
        assert!(pnd_from_trajectories(&record(&[]), 2).is_err());
    }

    #[test]
    fn g2_of_simple_records() {
        // Counts 0 and 2 with equal weight: ⟨n(n−1)⟩ = 1, ⟨n⟩ = 1.
        let rec = record(&[(0, 0), (2, 0)]);
        assert!((g2bar(&rec, Arm::Signal).unwrap().g2bar - 1.0).abs() < 1e-15);
        assert!(g2bar(&rec, Arm::Idler).is_err());
    }
}
