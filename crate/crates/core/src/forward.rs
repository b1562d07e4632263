//! On/off detection model.
//!
//! A detector of efficiency η stays dark on `n` incident photons with
//! probability `(1−η)ⁿ`. For two arms the four outcomes are labelled `xy`,
//! `x` for the signal detector and `y` for the idler, `0` dark and `1` click.

use alloc::vec::Vec;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_range, Error, Result};
use crate::fock::{Arm, JointPnd, Pnd, SourceModelParams};
use crate::linalg::Matrix;
use crate::par::map_indices;
use crate::rng;

/// Transmissions seen by the signal and idler detectors in one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub eta_s: f64,
    pub eta_i: f64,
}

impl Setting {
    pub fn symmetric(eta: f64) -> Self {
        Setting { eta_s: eta, eta_i: eta }
    }

    pub fn is_symmetric(&self) -> bool {
        self.eta_s == self.eta_i
    }

    pub fn eta(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Signal => self.eta_s,
            Arm::Idler => self.eta_i,
        }
    }

    /// Both transmissions in `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("signal transmission", self.eta_s), ("idler transmission", self.eta_i)] {
            if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(())
    }

    /// Multiplies both transmissions by `factor`, failing if either leaves `(0, 1]`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let s = Setting { eta_s: self.eta_s * factor, eta_i: self.eta_i * factor };
        s.validate()?;
        Ok(s)
    }
}

/// Attenuation settings of one measurement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyLadder {
    settings: Vec<Setting>,
}

impl EfficiencyLadder {
    /// Equal transmission on both arms for each setting.
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        Self::asymmetric(etas.into_iter().map(Setting::symmetric).collect())
    }

    pub fn asymmetric(settings: Vec<Setting>) -> Result<Self> {
        if settings.len() < 2 {
            return Err(Error::invalid("an efficiency ladder needs at least two settings"));
        }
        for s in &settings {
            s.validate()?;
        }
        Ok(EfficiencyLadder { settings })
    }

    /// Every combination of a signal and an idler transmission.
    pub fn grid(etas_s: &[f64], etas_i: &[f64]) -> Result<Self> {
        let settings = etas_s
            .iter()
            .flat_map(|&eta_s| etas_i.iter().map(move |&eta_i| Setting { eta_s, eta_i }))
            .collect();
        Self::asymmetric(settings)
    }

    /// `eta_exp · η_VOA` with `η_VOA` stepping linearly in transmission from
    /// `lo` to `hi` over `m` settings.
    pub fn voa_sweep(eta_exp: f64, lo: f64, hi: f64, m: usize) -> Result<Self> {
        check_range("system transmission", eta_exp, 0.0, 1.0)?;
        check_range("lowest VOA transmission", lo, 0.0, 1.0)?;
        check_range("highest VOA transmission", hi, lo, 1.0)?;
        if m < 2 {
            return Err(Error::invalid("an efficiency ladder needs at least two settings"));
        }
        let step = (hi - lo) / (m - 1) as f64;
        Self::new((0..m).map(|j| eta_exp * (lo + step * j as f64)).collect())
    }

    /// Same ladder with every transmission multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let settings = self.settings.iter().map(|s| s.scaled(factor)).collect::<Result<_>>()?;
        Ok(EfficiencyLadder { settings })
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.settings.iter().all(Setting::is_symmetric)
    }
}

/// Probabilities of the four joint outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbs {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl ClickProbs {
    /// Builds the table from the off-probabilities `P(00)`, `P(signal off)`
    /// and `P(idler off)`; `p11` is the complement.
    fn from_offs(p00: f64, signal_off: f64, idler_off: f64) -> Self {
        let p01 = (signal_off - p00).max(0.0);
        let p10 = (idler_off - p00).max(0.0);
        let p00 = p00.clamp(0.0, 1.0);
        let p11 = (1.0 - p00 - p01 - p10).max(0.0);
        ClickProbs { p00, p01, p10, p11 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p00, self.p01, self.p10, self.p11]
    }

    /// Probability that the given arm's detector stays dark.
    pub fn off(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Signal => self.p00 + self.p01,
            Arm::Idler => self.p00 + self.p10,
        }
    }
}

/// Counts recorded at one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub c00: u64,
    pub c01: u64,
    pub c10: u64,
    pub c11: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRow {
    pub setting: Setting,
    pub trials: u64,
    pub counts: Counts,
}

impl ClickRow {
    pub fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("a click-table row needs at least one trial"));
        }
        let Counts { c00, c01, c10, c11 } = self.counts;
        let total = [c00, c01, c10, c11].iter().try_fold(0u64, |acc, &c| acc.checked_add(c));
        if total != Some(self.trials) {
            return Err(Error::invalid(alloc::format!(
                "counts {c00}+{c01}+{c10}+{c11} do not add up to {} trials",
                self.trials
            )));
        }
        Ok(())
    }

    /// Relative frequencies `(f00, f01, f10, f11)`.
    pub fn frequencies(&self) -> ClickProbs {
        let t = self.trials as f64;
        ClickProbs {
            p00: self.counts.c00 as f64 / t,
            p01: self.counts.c01 as f64 / t,
            p10: self.counts.c10 as f64 / t,
            p11: self.counts.c11 as f64 / t,
        }
    }
}

/// Click counts for every setting of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickTable {
    rows: Vec<ClickRow>,
}

impl ClickTable {
    pub fn new(rows: Vec<ClickRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empty click table"));
        }
        for r in &rows {
            r.validate()?;
        }
        Ok(ClickTable { rows })
    }

    pub fn rows(&self) -> &[ClickRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().all(|r| r.setting.is_symmetric())
    }

    pub fn settings(&self) -> Vec<Setting> {
        self.rows.iter().map(|r| r.setting).collect()
    }

    /// Single-detector view of one arm: its transmission and dark fraction.
    pub fn off_frequencies(&self, arm: Arm) -> Vec<OffFrequency> {
        self.rows
            .iter()
            .map(|r| OffFrequency { eta: r.setting.eta(arm), f0: r.frequencies().off(arm) })
            .collect()
    }
}

/// Observed no-click fraction of a single detector at transmission `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffFrequency {
    pub eta: f64,
    pub f0: f64,
}

/// `Σ_n (1−η)ⁿ p_n`.
pub fn p_off(p: &Pnd, eta: f64) -> Result<f64> {
    check_range("transmission", eta, 0.0, 1.0)?;
    Ok(off_sum(p.probs(), 1.0 - eta))
}

/// Horner evaluation of `Σ_n tⁿ p_n`.
fn off_sum(probs: &[f64], t: f64) -> f64 {
    probs.iter().rev().fold(0.0, |acc, &p| acc * t + p)
}

/// `B[μ][n] = (1−η_μ)ⁿ`.
pub fn b_matrix_single(etas: &[f64], trunc: usize) -> Result<Matrix> {
    for &eta in etas {
        check_range("transmission", eta, 0.0, 1.0)?;
    }
    Ok(Matrix::from_fn(etas.len(), trunc + 1, |mu, n| libm::pow(1.0 - etas[mu], n as f64)))
}

/// Shared-transmission click probabilities.
pub fn click_probs_joint(p: &JointPnd, eta: f64) -> Result<ClickProbs> {
    click_probs(p, Setting::symmetric(eta))
}

/// Click probabilities with independent arm transmissions.
pub fn click_probs(p: &JointPnd, setting: Setting) -> Result<ClickProbs> {
    check_range("signal transmission", setting.eta_s, 0.0, 1.0)?;
    check_range("idler transmission", setting.eta_i, 0.0, 1.0)?;
    let d = p.dim();
    let (ts, ti) = (1.0 - setting.eta_s, 1.0 - setting.eta_i);
    let mut p00 = 0.0;
    let mut signal_off = 0.0;
    let mut idler_off = 0.0;
    let mut pow_s = 1.0;
    for n in 0..d {
        let row = &p.probs()[n * d..(n + 1) * d];
        let row_off = off_sum(row, ti);
        let row_total: f64 = row.iter().sum();
        p00 += pow_s * row_off;
        signal_off += pow_s * row_total;
        idler_off += row_off;
        pow_s *= ts;
    }
    Ok(ClickProbs::from_offs(p00, signal_off, idler_off))
}

/// Closed-form click probabilities of the untruncated source-model state.
pub fn source_model_click_probs(params: &SourceModelParams, setting: Setting) -> Result<ClickProbs> {
    params.validate()?;
    check_range("signal transmission", setting.eta_s, 0.0, 1.0)?;
    check_range("idler transmission", setting.eta_i, 0.0, 1.0)?;
    let x = params.pair_mean();
    let (ts, ti) = (1.0 - setting.eta_s, 1.0 - setting.eta_i);
    let bg_s = 1.0 / (1.0 + params.n_th_s * setting.eta_s);
    let bg_i = 1.0 / (1.0 + params.n_th_i * setting.eta_i);
    let p00 = bg_s * bg_i / (1.0 + x * (1.0 - ts * ti));
    let signal_off = bg_s / (1.0 + x * setting.eta_s);
    let idler_off = bg_i / (1.0 + x * setting.eta_i);
    Ok(ClickProbs::from_offs(p00, signal_off, idler_off))
}

/// Joint response matrix of shape `3M × (N+1)²`.
///
/// Row blocks are `P(00)`, `P(01)`, `P(10)` over the settings in order;
/// column `k + n(N+1)` belongs to the grid point `(n_s = n, n_i = k)`.
pub fn b_matrix_joint(settings: &[Setting], trunc: usize) -> Result<Matrix> {
    for s in settings {
        check_range("signal transmission", s.eta_s, 0.0, 1.0)?;
        check_range("idler transmission", s.eta_i, 0.0, 1.0)?;
    }
    let m = settings.len();
    let d = trunc + 1;
    let off = |eta: f64, n: usize| libm::pow(1.0 - eta, n as f64);
    Ok(Matrix::from_fn(3 * m, d * d, |row, col| {
        let (block, mu) = (row / m, row % m);
        let (n, k) = (col / d, col % d);
        let bs = off(settings[mu].eta_s, n);
        let bi = off(settings[mu].eta_i, k);
        match block {
            0 => bs * bi,
            1 => bs * (1.0 - bi),
            _ => (1.0 - bs) * bi,
        }
    }))
}

/// Draws a multinomial click table with `trials` events per setting. Row `μ`
/// uses generator stream `μ` of `seed`.
pub fn sample_click_table(
    p: &JointPnd,
    ladder: &EfficiencyLadder,
    trials: u64,
    seed: u64,
) -> Result<ClickTable> {
    if trials == 0 {
        return Err(Error::invalid("trials per setting must be at least 1"));
    }
    let probs = ladder
        .settings()
        .iter()
        .map(|&s| click_probs(p, s))
        .collect::<Result<Vec<_>>>()?;
    sample_from_probs(ladder.settings(), &probs, trials, seed)
}

/// Multinomial sampling of given outcome probabilities, one row per setting.
pub fn sample_from_probs(
    settings: &[Setting],
    probs: &[ClickProbs],
    trials: u64,
    seed: u64,
) -> Result<ClickTable> {
    if settings.len() != probs.len() {
        return Err(Error::Shape { expected: settings.len(), got: probs.len() });
    }
    if trials == 0 {
        return Err(Error::invalid("trials per setting must be at least 1"));
    }
    let rows = map_indices(settings.len(), |mu| {
        let mut rng = rng::stream(seed, mu as u64);
        let counts = sample_multinomial(&probs[mu], trials, &mut rng)?;
        Ok(ClickRow { setting: settings[mu], trials, counts })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ClickTable::new(rows)
}

/// Sequential conditional binomials: `c00`, then `c01` among the rest, then `c10`.
fn sample_multinomial<R: rand::Rng + ?Sized>(
    probs: &ClickProbs,
    trials: u64,
    rng: &mut R,
) -> Result<Counts> {
    for v in probs.as_array() {
        check_non_negative("outcome probability", v)?;
    }
    let mut draw = |n: u64, p: f64| -> Result<u64> {
        if n == 0 || p <= 0.0 {
            return Ok(0);
        }
        if p >= 1.0 {
            return Ok(n);
        }
        let b = Binomial::new(n, p).map_err(|e| Error::invalid(alloc::format!("{e}")))?;
        Ok(b.sample(rng))
    };
    let total = probs.p00 + probs.p01 + probs.p10 + probs.p11;
    let [p00, p01, p10, _] = probs.as_array().map(|v| v / total);
    let c00 = draw(trials, p00)?;
    let mut rest = trials - c00;
    let mut left = 1.0 - p00;
    let c01 = draw(rest, if left > 0.0 { p01 / left } else { 0.0 })?;
    rest -= c01;
    left -= p01;
    let c10 = draw(rest, if left > 0.0 { p10 / left } else { 0.0 })?;
    let c11 = rest - c10;
    Ok(Counts { c00, c01, c10, c11 })
}
