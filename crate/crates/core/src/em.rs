//! Expectation-maximization reconstruction of photon-number distributions
//! from on/off frequencies.
//!
//! Both estimators solve `f ≈ B ρ` for a probability vector `ρ ≥ 0` with the
//! multiplicative update
//!
//! ```text
//! ρ_n ← ρ_n · Σ_μ B_μn f_μ / p_μ(ρ)  /  Σ_μ B_μn,      p = B ρ,
//! ```
//!
//! followed by renormalization, starting from the uniform distribution. The
//! progress measure is the mean absolute residual `ε = mean |f − p|`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{JointPnd, Pnd};
use crate::forward::{b_matrix_joint, b_matrix_single, ClickTable, OffFrequency, Setting};
use crate::linalg::Matrix;

/// Model probabilities below this are treated as this value in the update.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Highest photon number per mode inside the reliable reporting window.
pub const REPORTING_WINDOW: usize = 5;

/// Mass outside the reporting window that triggers a warning.
pub const WINDOW_MASS_WARNING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Highest photon number per mode.
    pub trunc: usize,
    /// Stop once `|ε⁽ⁱ⁾ − ε⁽ⁱ⁻¹⁾| / ε⁽ⁱ⁾` drops below this.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Multiplies every transmission of the input data before solving.
    pub plane_scale: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { trunc: 9, rel_tol: 1e-3, max_iters: 100_000, plane_scale: 1.0 }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunc < 1 {
            return Err(Error::invalid("EM truncation must be at least 1"));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::Domain { what: "rel_tol", value: self.rel_tol });
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.plane_scale.is_finite() && self.plane_scale > 0.0) {
            return Err(Error::Domain { what: "plane_scale", value: self.plane_scale });
        }
        Ok(())
    }
}

/// Moves the reconstruction plane across a segment of transmission `eta_seg`
/// that the data transmissions currently include: they are divided by
/// `eta_seg`, so the reconstructed distribution carries that segment's loss.
///
/// Fails if that pushes any of `settings` above unit transmission.
pub fn rescale_plane(config: &EmConfig, eta_seg: f64, settings: &[Setting]) -> Result<EmConfig> {
    if !(eta_seg.is_finite() && eta_seg > 0.0 && eta_seg <= 1.0) {
        return Err(Error::Domain { what: "segment transmission", value: eta_seg });
    }
    let out = EmConfig { plane_scale: config.plane_scale / eta_seg, ..*config };
    for s in settings {
        s.scaled(out.plane_scale)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmWarning {
    /// Stopped at `max_iters` before meeting the tolerance.
    NotConverged { iterations: usize },
    /// Probability outside `0..=REPORTING_WINDOW` on some axis.
    MassOutsideWindow { mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    /// Number of updates applied.
    pub iterations: usize,
    /// `ε` of the ansatz and of every iterate.
    pub epsilon_history: Vec<f64>,
    pub final_epsilon: f64,
    pub converged: bool,
    pub warnings: Vec<EmWarning>,
}

impl EmDiagnostics {
    /// One-line human summary.
    pub fn summary(&self) -> String {
        alloc::format!(
            "{} iterations, final epsilon {:.3e}, {}",
            self.iterations,
            self.final_epsilon,
            if self.converged { "converged" } else { "not converged" }
        )
    }
}

/// `(1/M′) Σ |f − p|`.
pub fn error_metric(frequencies: &[f64], model: &[f64]) -> Result<f64> {
    if frequencies.len() != model.len() {
        return Err(Error::Shape { expected: frequencies.len(), got: model.len() });
    }
    if frequencies.is_empty() {
        return Err(Error::invalid("empty frequency vector"));
    }
    Ok(mean_abs_diff(frequencies, model))
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Iteration state of one reconstruction.
#[derive(Debug, Clone)]
pub struct EmSolver {
    b: Matrix,
    f: Vec<f64>,
    col_sums: Vec<f64>,
    rho: Vec<f64>,
    model: Vec<f64>,
    ratio: Vec<f64>,
    back: Vec<f64>,
}

impl EmSolver {
    /// Solver for `f ≈ B ρ`, starting from the uniform distribution.
    pub fn new(b: Matrix, f: Vec<f64>) -> Result<Self> {
        if b.rows() != f.len() {
            return Err(Error::Shape { expected: b.rows(), got: f.len() });
        }
        if let Some(&bad) = f.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Domain { what: "frequency", value: bad });
        }
        let cols = b.cols();
        let rho = vec![1.0 / cols as f64; cols];
        Self::with_start(b, f, rho)
    }

    /// Solver starting from a given strictly positive distribution.
    pub fn with_start(b: Matrix, f: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != b.cols() {
            return Err(Error::Shape { expected: b.cols(), got: rho.len() });
        }
        let col_sums = b.column_sums();
        let (rows, cols) = b.shape();
        let mut s = EmSolver {
            b,
            f,
            col_sums,
            rho,
            model: vec![0.0; rows],
            ratio: vec![0.0; rows],
            back: vec![0.0; cols],
        };
        s.refresh_model();
        Ok(s)
    }

    fn refresh_model(&mut self) {
        self.b.mul_vec_into(&self.rho, &mut self.model);
    }

    pub fn distribution(&self) -> &[f64] {
        &self.rho
    }

    /// Model probabilities `B ρ` of the current iterate.
    pub fn model(&self) -> &[f64] {
        &self.model
    }

    /// `ε` of the current iterate.
    pub fn epsilon(&self) -> f64 {
        mean_abs_diff(&self.f, &self.model)
    }

    /// Applies one multiplicative update and renormalizes.
    pub fn step(&mut self) -> Result<()> {
        for (row, ((r, &f), &p)) in self.ratio.iter_mut().zip(&self.f).zip(&self.model).enumerate() {
            if p <= 0.0 && f > 0.0 {
                return Err(Error::ZeroModelProbability { row, frequency: f });
            }
            *r = f / p.max(PROBABILITY_FLOOR);
        }
        self.b.tr_mul_vec_into(&self.ratio, &mut self.back);
        for ((rho, &g), &s) in self.rho.iter_mut().zip(&self.back).zip(&self.col_sums) {
            *rho = if s > 0.0 { *rho * g / s } else { 0.0 };
        }
        let total: f64 = self.rho.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ZeroModelProbability { row: 0, frequency: total });
        }
        self.rho.iter_mut().for_each(|v| *v /= total);
        self.refresh_model();
        Ok(())
    }

    /// Iterates until the relative change of `ε` drops below `rel_tol`, two
    /// consecutive residuals are exactly zero, or `max_iters` updates are spent.
    pub fn run(&mut self, rel_tol: f64, max_iters: usize) -> Result<EmDiagnostics> {
        let mut history = Vec::new();
        history.push(self.epsilon());
        let mut converged = false;
        let mut iterations = 0;
        while iterations < max_iters {
            self.step()?;
            iterations += 1;
            let eps = self.epsilon();
            let prev = history[history.len() - 1];
            history.push(eps);
            if eps == 0.0 {
                if prev == 0.0 {
                    converged = true;
                    break;
                }
            } else if (eps - prev).abs() / eps < rel_tol {
                converged = true;
                break;
            }
        }
        // An exact fit of the ansatz itself needs no iterations at all.
        if iterations == 0 {
            converged = history[0] == 0.0;
        }
        let mut warnings = Vec::new();
        if !converged {
            warnings.push(EmWarning::NotConverged { iterations });
        }
        Ok(EmDiagnostics {
            iterations,
            final_epsilon: history[history.len() - 1],
            epsilon_history: history,
            converged,
            warnings,
        })
    }
}

/// Single-mode reconstruction from no-click fractions.
pub fn em_single(data: &[OffFrequency], config: &EmConfig) -> Result<(Pnd, EmDiagnostics)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no off-frequencies supplied"));
    }
    let etas = data
        .iter()
        .map(|d| Setting::symmetric(d.eta).scaled(config.plane_scale).map(|s| s.eta_s))
        .collect::<Result<Vec<_>>>()?;
    let f = data.iter().map(|d| d.f0).collect();
    let b = b_matrix_single(&etas, config.trunc)?;
    let mut solver = EmSolver::new(b, f)?;
    let mut diag = solver.run(config.rel_tol, config.max_iters)?;
    let pnd = Pnd::from_weights(solver.distribution().to_vec())?;
    let outside: f64 = pnd.probs().iter().skip(REPORTING_WINDOW + 1).sum();
    if outside > WINDOW_MASS_WARNING {
        diag.warnings.push(EmWarning::MassOutsideWindow { mass: outside });
    }
    Ok((pnd, diag))
}

/// Data vector `(f00…, f01…, f10…)` matching [`b_matrix_joint`].
pub fn joint_frequencies(table: &ClickTable) -> Vec<f64> {
    let freqs: Vec<_> = table.rows().iter().map(|r| r.frequencies()).collect();
    let mut f = Vec::with_capacity(3 * freqs.len());
    f.extend(freqs.iter().map(|c| c.p00));
    f.extend(freqs.iter().map(|c| c.p01));
    f.extend(freqs.iter().map(|c| c.p10));
    f
}

/// Builds the joint solver for a table under `config` without running it.
pub fn joint_solver(table: &ClickTable, config: &EmConfig) -> Result<EmSolver> {
    config.validate()?;
    let settings = table
        .settings()
        .iter()
        .map(|s| s.scaled(config.plane_scale))
        .collect::<Result<Vec<_>>>()?;
    let b = b_matrix_joint(&settings, config.trunc)?;
    EmSolver::new(b, joint_frequencies(table))
}

/// Joint reconstruction from a click table.
pub fn em_joint(table: &ClickTable, config: &EmConfig) -> Result<(JointPnd, EmDiagnostics)> {
    let mut solver = joint_solver(table, config)?;
    let mut diag = solver.run(config.rel_tol, config.max_iters)?;
    let pnd = JointPnd::from_weights(config.trunc, solver.distribution().to_vec())?;
    let outside: f64 = pnd
        .iter()
        .filter(|(n, k, _)| *n > REPORTING_WINDOW || *k > REPORTING_WINDOW)
        .map(|(_, _, p)| p)
        .sum();
    if outside > WINDOW_MASS_WARNING {
        diag.warnings.push(EmWarning::MassOutsideWindow { mass: outside });
    }
    Ok((pnd, diag))
}
