//! The pipeline stages behind each subcommand, as plain functions on
//! configuration values.

use pndrecon_core::dynamics::{
    g2bar, pnd_from_trajectories, simulate_trajectories, G2Estimate, PulseParams, QuantumConfig, ResonatorParams,
    TrajectoryConfig, TrajectoryRecord,
};
use pndrecon_core::em::{em_joint, em_single, rescale_plane, EmConfig, EmDiagnostics};
use pndrecon_core::fock::{apply_loss_joint, coherent_pnd, source_model_pnd, thermal_pnd};
use pndrecon_core::forward::sample_click_table;
use pndrecon_core::metrics::{
    fit_source_model, linear_fit, mandel_q, moments, nrf, squeezing_db, LinearFit, SearchConfig, SourceFit,
    SourceFitBounds,
};
use pndrecon_core::rng::stream;
use pndrecon_core::{Arm, ClickTable, EfficiencyLadder, JointPnd, Pnd, PowerScaling, SourceModelParams};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::PndFile;

/// Transmission of a loss given in dB.
pub fn db_to_eta(loss_db: f64) -> Result<f64> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(CliError::config(format!("loss {loss_db} dB must be non-negative")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Where a run's seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedChoice {
    pub seed: u64,
    pub source: SeedSource,
}

/// Uses the given seed, or draws one from the operating system.
pub fn resolve_seed(flag: Option<u64>) -> SeedChoice {
    match flag {
        Some(seed) => SeedChoice { seed, source: SeedSource::Flag },
        None => SeedChoice { seed: rand::random(), source: SeedSource::Entropy },
    }
}

/// Sidecar describing how an output was produced.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<T: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub config: T,
}

impl<T: Serialize> Provenance<T> {
    pub fn new(command: &'static str, seed: SeedChoice, config: T) -> Self {
        Provenance { command, version: env!("CARGO_PKG_VERSION"), seed: seed.seed, seed_source: seed.source, config }
    }
}

/// States that `synth` can prepare. Single-mode states occupy the signal arm
/// with the idler in vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum StateModel {
    Vacuum,
    Thermal { mean: f64 },
    Coherent { mean: f64 },
    /// Coherent light in both arms, `mean` photons each.
    CoherentPair { mean: f64 },
    /// Two-mode squeezed vacuum convolved with thermal backgrounds.
    Source(SourceModelParams),
}

impl StateModel {
    pub fn build(&self, trunc: usize) -> Result<JointPnd> {
        Ok(match *self {
            StateModel::Vacuum => JointPnd::vacuum(trunc),
            StateModel::Thermal { mean } => JointPnd::from_signal(&thermal_pnd(mean, trunc)?),
            StateModel::Coherent { mean } => JointPnd::from_signal(&coherent_pnd(mean, trunc)?),
            StateModel::CoherentPair { mean } => {
                let c = coherent_pnd(mean, trunc)?;
                JointPnd::product(&c, &c)?
            }
            StateModel::Source(params) => source_model_pnd(&params, trunc)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub model: StateModel,
    /// Truncation used to build the state; keep it well above the mean.
    pub model_trunc: usize,
    pub ladder: EfficiencyLadder,
    pub trials: u64,
}

/// Samples a click table of `cfg.model` through `cfg.ladder`.
pub fn synth(cfg: &SynthConfig, seed: u64) -> Result<ClickTable> {
    let state = cfg.model.build(cfg.model_trunc)?;
    Ok(sample_click_table(&state, &cfg.ladder, cfg.trials, seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub em: EmConfig,
    /// Reconstruct the marginal of one arm instead of the joint distribution.
    pub arm: Option<Arm>,
    /// Transmission of a segment, included in the table's transmissions, to
    /// move the reconstruction plane across.
    pub segment_eta: Option<f64>,
}

/// Diagnostics file: the solver record plus the configuration actually used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructReport {
    #[serde(flatten)]
    pub diagnostics: EmDiagnostics,
    pub config: EmConfig,
    pub arm: Option<Arm>,
}

pub fn reconstruct(table: &ClickTable, cfg: &ReconstructConfig) -> Result<(PndFile, ReconstructReport)> {
    let em = match cfg.segment_eta {
        Some(eta) => rescale_plane(&cfg.em, eta, &table.settings())?,
        None => cfg.em,
    };
    let (pnd, diagnostics) = match cfg.arm {
        Some(arm) => {
            let (p, d) = em_single(&table.off_frequencies(arm), &em)?;
            (PndFile::Single(p), d)
        }
        None => {
            let (p, d) = em_joint(table, &em)?;
            (PndFile::Joint(p), d)
        }
    };
    Ok((pnd, ReconstructReport { diagnostics, config: em, arm: cfg.arm }))
}

/// Source-model fit summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r: f64,
    pub n_th_s: f64,
    pub n_th_i: f64,
    pub fidelity: f64,
    /// `20 r log10 e`.
    pub squeezing_db: f64,
}

impl FitReport {
    pub fn new(fit: &SourceFit) -> Result<Self> {
        let SourceModelParams { r, n_th_s, n_th_i } = fit.params;
        Ok(FitReport { r, n_th_s, n_th_i, fidelity: fit.fidelity, squeezing_db: squeezing_db(r)? })
    }
}

/// Metrics of a joint distribution. Quantities undefined for the input,
/// such as the NRF of vacuum, are `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_s: f64,
    pub mean_i: f64,
    pub v_diff: f64,
    pub n_tot: f64,
    pub nrf: Option<f64>,
    pub nrf_db: Option<f64>,
    pub mandel_q_s: Option<f64>,
    pub mandel_q_i: Option<f64>,
    pub fit: Option<FitReport>,
}

pub fn joint_metrics(p: &JointPnd) -> MetricsReport {
    let m = moments(p);
    let report = nrf(p).ok();
    MetricsReport {
        mean_s: m.mean_s,
        mean_i: m.mean_i,
        v_diff: m.var_s + m.var_i - 2.0 * m.covariance(),
        n_tot: m.mean_s + m.mean_i,
        nrf: report.map(|r| r.nrf),
        nrf_db: report.map(|r| r.nrf_db),
        mandel_q_s: mandel_q(&p.marginal(Arm::Signal)).ok(),
        mandel_q_i: mandel_q(&p.marginal(Arm::Idler)).ok(),
        fit: None,
    }
}

/// Metrics of a single-mode distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleMetricsReport {
    pub mean: f64,
    pub variance: f64,
    pub mandel_q: Option<f64>,
}

pub fn single_metrics(p: &Pnd) -> SingleMetricsReport {
    SingleMetricsReport { mean: p.mean(), variance: p.variance(), mandel_q: mandel_q(p).ok() }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitConfig {
    pub bounds: SourceFitBounds,
    pub search: SearchConfig,
}

/// Metrics with the best-fit source model filled in.
pub fn fit(p: &JointPnd, cfg: &FitConfig) -> Result<MetricsReport> {
    let f = fit_source_model(p, &cfg.bounds, &cfg.search)?;
    Ok(MetricsReport { fit: Some(FitReport::new(&f)?), ..joint_metrics(p) })
}

/// Resonator and pulse, as stored in a parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub resonator: ResonatorParams,
    pub pulse: PulseParams,
}

impl SimulationParams {
    /// Reference device driven at `power` mW on the cold resonance.
    pub fn reference(power: f64) -> Self {
        SimulationParams { resonator: ResonatorParams::table1(), pulse: PulseParams::reference(power) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub params: SimulationParams,
    pub n_traj: usize,
    /// Fock truncation per mode.
    pub nf: usize,
    /// Pump step (ps).
    pub dt: f64,
    pub spm: bool,
    pub xpm: bool,
    /// Histogram truncation; the largest observed count when absent.
    pub trunc: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub n_traj: usize,
    pub mean_s: f64,
    pub stderr_s: f64,
    pub mean_i: f64,
    pub stderr_i: f64,
    /// `null` when the arm never clicked.
    pub g2bar_s: Option<G2Estimate>,
    pub g2bar_i: Option<G2Estimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub record: TrajectoryRecord,
    pub pnd: JointPnd,
    pub summary: SimulationSummary,
}

pub fn simulate(cfg: &SimulateConfig, seed: u64) -> Result<SimulationOutput> {
    let traj = TrajectoryConfig {
        n_traj: cfg.n_traj,
        quantum: QuantumConfig { nf: cfg.nf, xpm: cfg.xpm },
        seed,
        dt: cfg.dt,
        spm: cfg.spm,
    };
    let record = simulate_trajectories(&cfg.params.resonator, &cfg.params.pulse, &traj)?;
    let observed = record.counts.iter().map(|c| c.n_s.max(c.n_i) as usize).max().unwrap_or(0).max(1);
    let pnd = pnd_from_trajectories(&record, cfg.trunc.unwrap_or(observed))?;
    let (mean_s, stderr_s) = record.mean(Arm::Signal);
    let (mean_i, stderr_i) = record.mean(Arm::Idler);
    let summary = SimulationSummary {
        n_traj: record.len(),
        mean_s,
        stderr_s,
        mean_i,
        stderr_i,
        g2bar_s: g2bar(&record, Arm::Signal).ok(),
        g2bar_i: g2bar(&record, Arm::Idler).ok(),
    };
    Ok(SimulationOutput { record, pnd, summary })
}

/// State family swept over pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PowerFamily {
    /// Source model with `r = aP`, `n_th = bP`.
    Source(PowerScaling),
    /// Coherent light in both arms with `mean_per_mw · P` photons each.
    CoherentPair { mean_per_mw: f64 },
}

impl PowerFamily {
    pub fn model_at(&self, power: f64) -> Result<StateModel> {
        Ok(match self {
            PowerFamily::Source(s) => StateModel::Source(s.at_power(power)?),
            PowerFamily::CoherentPair { mean_per_mw } => StateModel::CoherentPair { mean: mean_per_mw * power },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: PowerFamily,
    /// Pump powers (mW).
    pub powers: Vec<f64>,
    pub model_trunc: usize,
    pub ladder: EfficiencyLadder,
    pub trials: u64,
    pub reconstruct: ReconstructConfig,
    /// Source-model fit of each reconstruction; skipped when absent.
    pub fit: Option<FitConfig>,
}

/// One power of a sweep. `exact_*` columns are moments of the true state
/// at the reconstruction plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub power: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub mean_s: f64,
    pub mean_i: f64,
    pub n_tot: f64,
    pub v_diff: f64,
    pub nrf: Option<f64>,
    pub exact_n_tot: f64,
    pub exact_v_diff: f64,
    pub r: Option<f64>,
    pub n_th_s: Option<f64>,
    pub n_th_i: Option<f64>,
    pub fidelity: Option<f64>,
}

/// Straight-line fits over a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepFits {
    /// Fitted squeezing parameter against power.
    pub r_vs_power: Option<LinearFit>,
    /// Reconstructed `V_Δn` against `⟨n_tot⟩`.
    pub v_diff_vs_n_tot: Option<LinearFit>,
    /// The same line through the exact moments.
    pub exact_v_diff_vs_n_tot: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub fits: SweepFits,
}

/// Synthesizes, reconstructs and analyses one table per power. Power `k`
/// samples with the `k`-th draw of stream 0 of `seed`.
pub fn sweep(cfg: &SweepConfig, seed: u64) -> Result<SweepOutput> {
    if cfg.powers.is_empty() {
        return Err(CliError::config("sweep needs at least one power"));
    }
    if cfg.reconstruct.arm.is_some() {
        return Err(CliError::config("sweeps reconstruct joint distributions"));
    }
    let mut seeds = stream(seed, 0);
    let mut rows = Vec::with_capacity(cfg.powers.len());
    for &power in &cfg.powers {
        let row_seed = seeds.next_u64();
        let model = cfg.family.model_at(power)?;
        let synth_cfg = SynthConfig { model, model_trunc: cfg.model_trunc, ladder: cfg.ladder.clone(), trials: cfg.trials };
        let table = synth(&synth_cfg, row_seed)?;
        let (pnd, report) = reconstruct(&table, &cfg.reconstruct)?;
        let PndFile::Joint(pnd) = pnd else { unreachable!("joint reconstruction") };
        let seg = cfg.reconstruct.segment_eta.unwrap_or(1.0);
        let exact = joint_metrics(&apply_loss_joint(&model.build(cfg.model_trunc)?, seg, seg)?);
        let m = joint_metrics(&pnd);
        let fitted = cfg.fit.as_ref().map(|f| fit_source_model(&pnd, &f.bounds, &f.search)).transpose()?;
        rows.push(SweepRow {
            power,
            seed: row_seed,
            iterations: report.diagnostics.iterations,
            converged: report.diagnostics.converged,
            mean_s: m.mean_s,
            mean_i: m.mean_i,
            n_tot: m.n_tot,
            v_diff: m.v_diff,
            nrf: m.nrf,
            exact_n_tot: exact.n_tot,
            exact_v_diff: exact.v_diff,
            r: fitted.map(|f| f.params.r),
            n_th_s: fitted.map(|f| f.params.n_th_s),
            n_th_i: fitted.map(|f| f.params.n_th_i),
            fidelity: fitted.map(|f| f.fidelity),
        });
    }
    let line = |xs: Vec<f64>, ys: Vec<f64>| linear_fit(&xs, &ys).ok();
    let fits = SweepFits {
        r_vs_power: if cfg.fit.is_some() {
            line(rows.iter().map(|r| r.power).collect(), rows.iter().filter_map(|r| r.r).collect())
        } else {
            None
        },
        v_diff_vs_n_tot: line(rows.iter().map(|r| r.n_tot).collect(), rows.iter().map(|r| r.v_diff).collect()),
        exact_v_diff_vs_n_tot: line(
            rows.iter().map(|r| r.exact_n_tot).collect(),
            rows.iter().map(|r| r.exact_v_diff).collect(),
        ),
    };
    Ok(SweepOutput { rows, fits })
}
