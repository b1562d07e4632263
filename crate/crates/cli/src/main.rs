use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pndrecon::commands::{
    self, db_to_eta, resolve_seed, FitConfig, PowerFamily, Provenance, ReconstructConfig, SeedChoice, SimulateConfig,
    SimulationParams, StateModel, SweepConfig, SynthConfig,
};
use pndrecon::io::{self, PndFile};
use pndrecon::{CliError, Result};
use pndrecon_core::em::EmConfig;
use pndrecon_core::metrics::{Interval, SearchConfig, SourceFitBounds};
use pndrecon_core::{Arm, EfficiencyLadder, PowerScaling, SourceModelParams};
use serde::Serialize;

/// Photon-number distributions from on/off click statistics.
#[derive(Parser)]
#[command(name = "pndrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a click table from a model state.
    Synth(SynthArgs),
    /// Reconstruct a distribution from a click table.
    Reconstruct(ReconstructArgs),
    /// Fit the source model to a joint distribution and report metrics.
    Fit(FitArgs),
    /// Simulate photodetection trajectories of the pulsed resonator.
    Simulate(SimulateArgs),
    /// Report moments, Mandel Q and the noise reduction factor.
    Metrics(MetricsArgs),
    /// Synthesize, reconstruct and analyse a state family over pump powers.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Vacuum,
    Thermal,
    Coherent,
    CoherentPair,
    Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Signal,
    Idler,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Arm {
        match a {
            ArmArg::Signal => Arm::Signal,
            ArmArg::Idler => Arm::Idler,
        }
    }
}

#[derive(Args)]
struct SeedArgs {
    /// Master seed; drawn from the operating system and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LadderArgs {
    /// CSV ladder with column `eta` or columns `eta_s,eta_i`.
    #[arg(long, conflicts_with_all = ["eta", "loss_db"])]
    ladder: Option<PathBuf>,
    /// System transmission excluding the attenuator; settings are `eta` times
    /// evenly spaced attenuator transmissions in `voa_min..=voa_max`.
    #[arg(long, conflicts_with = "loss_db")]
    eta: Option<f64>,
    /// The same transmission as a loss in dB.
    #[arg(long)]
    loss_db: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    voa_min: f64,
    #[arg(long, default_value_t = 0.95)]
    voa_max: f64,
    /// Number of attenuator settings.
    #[arg(long, default_value_t = 50)]
    settings: usize,
}

impl LadderArgs {
    fn build(&self) -> Result<EfficiencyLadder> {
        if let Some(path) = &self.ladder {
            return io::read_ladder(path);
        }
        let eta = match (self.eta, self.loss_db) {
            (Some(eta), _) => eta,
            (None, Some(db)) => db_to_eta(db)?,
            (None, None) => return Err(CliError::config("give --ladder, --eta or --loss-db")),
        };
        Ok(EfficiencyLadder::voa_sweep(eta, self.voa_min, self.voa_max, self.settings)?)
    }
}

#[derive(Args)]
struct EmArgs {
    /// Highest photon number per mode.
    #[arg(long, default_value_t = 9)]
    trunc: usize,
    /// Stop when the relative change of the error drops below this.
    #[arg(long, default_value_t = 1e-3)]
    rel_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Transmission of a segment counted in the table's transmissions; the
    /// reconstruction then refers to the plane after it and carries its loss.
    #[arg(long, conflicts_with = "segment_loss_db")]
    segment_eta: Option<f64>,
    /// The same segment as a loss in dB.
    #[arg(long)]
    segment_loss_db: Option<f64>,
}

impl EmArgs {
    fn build(&self, arm: Option<Arm>) -> Result<ReconstructConfig> {
        let em = EmConfig { trunc: self.trunc, rel_tol: self.rel_tol, max_iters: self.max_iters, plane_scale: 1.0 };
        em.validate()?;
        let segment_eta = match (self.segment_eta, self.segment_loss_db) {
            (Some(eta), _) => Some(eta),
            (None, Some(db)) => Some(db_to_eta(db)?),
            (None, None) => None,
        };
        Ok(ReconstructConfig { em, arm, segment_eta })
    }
}

#[derive(Args)]
struct FitSearchArgs {
    #[arg(long, default_value_t = 1.5)]
    r_max: f64,
    #[arg(long, default_value_t = 1.0)]
    n_th_max: f64,
    /// Coarse grid points per parameter.
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
    /// Final refinement step.
    #[arg(long, default_value_t = 1e-4)]
    fit_tol: f64,
}

impl FitSearchArgs {
    fn build(&self) -> Result<FitConfig> {
        let th = Interval::new(0.0, self.n_th_max)?;
        Ok(FitConfig {
            bounds: SourceFitBounds { r: Interval::new(0.0, self.r_max)?, n_th_s: th, n_th_i: th },
            search: SearchConfig { grid_points: self.grid_points, tol: self.fit_tol, ..SearchConfig::default() },
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Mean photon number (per arm for `coherent-pair`).
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 0.0)]
    n_th_s: f64,
    #[arg(long, default_value_t = 0.0)]
    n_th_i: f64,
    /// Truncation used to build the state.
    #[arg(long, default_value_t = 40)]
    model_trunc: usize,
    #[command(flatten)]
    ladder: LadderArgs,
    /// Trials per setting.
    #[arg(long, default_value_t = 12_500_000)]
    trials: u64,
    #[command(flatten)]
    seed: SeedArgs,
    /// Output click table (CSV).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input click table (CSV).
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    em: EmArgs,
    /// Reconstruct one arm only.
    #[arg(long, value_enum)]
    arm: Option<ArmArg>,
    /// Output distribution (CSV).
    #[arg(long, short)]
    out: PathBuf,
    /// Diagnostics JSON; next to the output by default.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Joint distribution (CSV `n,k,prob`).
    #[arg(long)]
    pnd: PathBuf,
    #[command(flatten)]
    search: FitSearchArgs,
    /// Metrics JSON; standard output by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Distribution (CSV `n,k,prob` or `n,prob`).
    #[arg(long)]
    pnd: PathBuf,
    /// Metrics JSON; standard output by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON with `resonator` and `pulse` blocks; the reference device by default.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Average pump power (mW); overrides the parameter file.
    #[arg(long)]
    power: Option<f64>,
    /// Pump detuning (1/ps); overrides the parameter file.
    #[arg(long)]
    detuning: Option<f64>,
    #[arg(long, default_value_t = 3000)]
    n_traj: usize,
    /// Fock truncation per mode.
    #[arg(long, default_value_t = 12)]
    nf: usize,
    /// Pump integration step (ps).
    #[arg(long, default_value_t = 4.0)]
    dt: f64,
    #[arg(long)]
    no_spm: bool,
    #[arg(long)]
    no_xpm: bool,
    /// Histogram truncation; the largest count by default.
    #[arg(long)]
    trunc: Option<usize>,
    #[command(flatten)]
    seed: SeedArgs,
    /// Per-trajectory counts (CSV).
    #[arg(long)]
    trajectories: PathBuf,
    /// Binned joint distribution (CSV).
    #[arg(long)]
    pnd: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Source,
    CoherentPair,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated pump powers (mW).
    #[arg(long, value_delimiter = ',', required = true)]
    powers: Vec<f64>,
    #[arg(long, value_enum, default_value = "source")]
    family: FamilyArg,
    /// Squeezing parameter per mW.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Signal background photons per mW.
    #[arg(long, default_value_t = 0.0)]
    b_s: f64,
    /// Idler background photons per mW.
    #[arg(long, default_value_t = 0.0)]
    b_i: f64,
    /// Coherent photons per arm per mW.
    #[arg(long, default_value_t = 0.0)]
    mean_per_mw: f64,
    #[arg(long, default_value_t = 40)]
    model_trunc: usize,
    #[command(flatten)]
    ladder: LadderArgs,
    #[arg(long, default_value_t = 12_500_000)]
    trials: u64,
    #[command(flatten)]
    em: EmArgs,
    /// Skip the source-model fit of each reconstruction.
    #[arg(long)]
    no_fit: bool,
    #[command(flatten)]
    search: FitSearchArgs,
    #[command(flatten)]
    seed: SeedArgs,
    /// Per-power table (CSV).
    #[arg(long, short)]
    out: PathBuf,
    /// Line fits (JSON); next to the output by default.
    #[arg(long)]
    fits: Option<PathBuf>,
}

fn write_provenance<T: Serialize>(out: &Path, command: &'static str, seed: SeedChoice, config: T) -> Result<()> {
    io::write_json(&io::sidecar(out, "provenance"), &Provenance::new(command, seed, config))
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let model = match a.model {
        ModelArg::Vacuum => StateModel::Vacuum,
        ModelArg::Thermal => StateModel::Thermal { mean: a.mean },
        ModelArg::Coherent => StateModel::Coherent { mean: a.mean },
        ModelArg::CoherentPair => StateModel::CoherentPair { mean: a.mean },
        ModelArg::Source => StateModel::Source(SourceModelParams::new(a.r, a.n_th_s, a.n_th_i)?),
    };
    let cfg = SynthConfig { model, model_trunc: a.model_trunc, ladder: a.ladder.build()?, trials: a.trials };
    let seed = resolve_seed(a.seed.seed);
    let table = commands::synth(&cfg, seed.seed)?;
    io::write_click_table(&a.out, &table)?;
    write_provenance(&a.out, "synth", seed, &cfg)
}

fn run_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let cfg = a.em.build(a.arm.map(Arm::from))?;
    let table = io::read_click_table(&a.table)?;
    let (pnd, report) = commands::reconstruct(&table, &cfg)?;
    io::write_pnd(&a.out, &pnd)?;
    let diag = a.diagnostics.clone().unwrap_or_else(|| io::sidecar(&a.out, "diagnostics"));
    io::write_json(&diag, &report)
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let cfg = a.search.build()?;
    let p = io::read_joint_pnd(&a.pnd)?;
    emit_json(a.out.as_deref(), &commands::fit(&p, &cfg)?)
}

fn run_metrics(a: &MetricsArgs) -> Result<()> {
    match io::read_pnd(&a.pnd)? {
        PndFile::Joint(p) => emit_json(a.out.as_deref(), &commands::joint_metrics(&p)),
        PndFile::Single(p) => emit_json(a.out.as_deref(), &commands::single_metrics(&p)),
    }
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let mut params = match &a.params {
        Some(path) => io::read_json::<SimulationParams>(path)?,
        None => SimulationParams::reference(1.0),
    };
    if let Some(p) = a.power {
        params.pulse.power = p;
    }
    if let Some(d) = a.detuning {
        params.pulse.detuning = d;
    }
    params.resonator.validate()?;
    params.pulse.validate()?;
    let cfg = SimulateConfig {
        params,
        n_traj: a.n_traj,
        nf: a.nf,
        dt: a.dt,
        spm: !a.no_spm,
        xpm: !a.no_xpm,
        trunc: a.trunc,
    };
    let seed = resolve_seed(a.seed.seed);
    let out = commands::simulate(&cfg, seed.seed)?;
    io::write_trajectories(&a.trajectories, &out.record)?;
    io::write_pnd(&a.pnd, &PndFile::Joint(out.pnd))?;
    io::write_json(&io::sidecar(&a.pnd, "summary"), &out.summary)?;
    write_provenance(&a.trajectories, "simulate", seed, &cfg)
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let family = match a.family {
        FamilyArg::Source => {
            let s = PowerScaling { a: a.a, b_s: a.b_s, b_i: a.b_i };
            s.validate()?;
            PowerFamily::Source(s)
        }
        FamilyArg::CoherentPair => PowerFamily::CoherentPair { mean_per_mw: a.mean_per_mw },
    };
    let cfg = SweepConfig {
        family,
        powers: a.powers.clone(),
        model_trunc: a.model_trunc,
        ladder: a.ladder.build()?,
        trials: a.trials,
        reconstruct: a.em.build(None)?,
        fit: if a.no_fit { None } else { Some(a.search.build()?) },
    };
    let seed = resolve_seed(a.seed.seed);
    let out = commands::sweep(&cfg, seed.seed)?;
    io::write_rows(&a.out, &out.rows)?;
    let fits = a.fits.clone().unwrap_or_else(|| io::sidecar(&a.out, "fits"));
    io::write_json(&fits, &out.fits)?;
    write_provenance(&a.out, "sweep", seed, &cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Metrics(a) => run_metrics(a),
        Command::Sweep(a) => run_sweep(a),
    }
}

fn fail(err: &CliError) -> ExitCode {
    let report = err.report();
    let text = serde_json::to_string(&report).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", report.message));
    eprintln!("{text}");
    ExitCode::from(report.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::config(e.render().to_string())),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
