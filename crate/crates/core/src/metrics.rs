//! Figures of merit and model fits.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, Error, Result};
use crate::fock::{convolve_with_thermal, tms_joint_pnd, JointPnd, Pnd, PowerScaling, SourceModelParams};
use crate::forward::{source_model_click_probs, Setting};
use crate::par::map_indices;

/// Squeezing in dB per unit squeezing parameter, `20 log10 e`.
pub const SQUEEZING_DB_PER_R: f64 = 20.0 * core::f64::consts::LOG10_E;

/// Types that expose a flat probability vector of a fixed shape.
pub trait Distribution {
    fn flat_probs(&self) -> &[f64];
}

impl Distribution for Pnd {
    fn flat_probs(&self) -> &[f64] {
        self.probs()
    }
}

impl Distribution for JointPnd {
    fn flat_probs(&self) -> &[f64] {
        self.probs()
    }
}

/// Classical fidelity `Σ √(p q)`.
pub fn fidelity<D: Distribution>(p: &D, q: &D) -> Result<f64> {
    let (a, b) = (p.flat_probs(), q.flat_probs());
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), got: b.len() });
    }
    Ok(bhattacharyya(a, b).min(1.0))
}

fn bhattacharyya(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| libm::sqrt(x * y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_s: f64,
    pub mean_i: f64,
    pub var_s: f64,
    pub var_i: f64,
    /// `⟨n_s n_i⟩`.
    pub cross: f64,
}

impl Moments {
    pub fn covariance(&self) -> f64 {
        self.cross - self.mean_s * self.mean_i
    }
}

pub fn moments(p: &JointPnd) -> Moments {
    let (mut ms, mut mi, mut ss, mut si, mut x) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, k, q) in p.iter() {
        let (n, k) = (n as f64, k as f64);
        ms += n * q;
        mi += k * q;
        ss += n * n * q;
        si += k * k * q;
        x += n * k * q;
    }
    Moments { mean_s: ms, mean_i: mi, var_s: ss - ms * ms, var_i: si - mi * mi, cross: x }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrfReport {
    /// Variance of `n_s − n_i`.
    pub v_diff: f64,
    /// `⟨n_s⟩ + ⟨n_i⟩`.
    pub n_tot: f64,
    pub nrf: f64,
    pub nrf_db: f64,
}

/// Noise reduction factor `Var(n_s − n_i) / ⟨n_s + n_i⟩`.
pub fn nrf(p: &JointPnd) -> Result<NrfReport> {
    let d = p.dim() as isize;
    // Distribution of the difference, indexed by n_s − n_i + N.
    let mut diff = alloc::vec![0.0; (2 * d - 1) as usize];
    let mut n_tot = 0.0;
    for (n, k, q) in p.iter() {
        diff[(n as isize - k as isize + d - 1) as usize] += q;
        n_tot += (n + k) as f64 * q;
    }
    if n_tot <= 0.0 {
        return Err(Error::invalid("noise reduction factor undefined for the vacuum"));
    }
    let at = |j: usize| (j as isize - (d - 1)) as f64;
    let mean: f64 = diff.iter().enumerate().map(|(j, q)| at(j) * q).sum();
    let v_diff: f64 = diff.iter().enumerate().map(|(j, q)| (at(j) - mean) * (at(j) - mean) * q).sum();
    let nrf = v_diff / n_tot;
    Ok(NrfReport { v_diff, n_tot, nrf, nrf_db: 10.0 * libm::log10(nrf) })
}

/// `(Var n − ⟨n⟩)/⟨n⟩`.
pub fn mandel_q(p: &Pnd) -> Result<f64> {
    let m = p.mean();
    if m <= 0.0 {
        return Err(Error::invalid("Mandel Q undefined for the vacuum"));
    }
    Ok((p.variance() - m) / m)
}

/// Closed-form moments of the untruncated source-model state after
/// independent loss on each arm.
pub fn source_model_moments(params: &SourceModelParams, setting: Setting) -> Result<Moments> {
    params.validate()?;
    let x = params.pair_mean();
    let (ts, ti) = (setting.eta_s, setting.eta_i);
    let thermal_var = |m: f64| m * (1.0 + m);
    let mean_s = ts * (x + params.n_th_s);
    let mean_i = ti * (x + params.n_th_i);
    let cov = ts * ti * x * (1.0 + x);
    Ok(Moments {
        mean_s,
        mean_i,
        var_s: thermal_var(ts * x) + thermal_var(ts * params.n_th_s),
        var_i: thermal_var(ti * x) + thermal_var(ti * params.n_th_i),
        cross: cov + mean_s * mean_i,
    })
}

/// NRF from moments, `(V_s + V_i − 2 cov) / (⟨n_s⟩ + ⟨n_i⟩)`.
pub fn nrf_from_moments(m: &Moments) -> Result<NrfReport> {
    let n_tot = m.mean_s + m.mean_i;
    if n_tot <= 0.0 {
        return Err(Error::invalid("noise reduction factor undefined for the vacuum"));
    }
    let v_diff = m.var_s + m.var_i - 2.0 * m.covariance();
    let nrf = v_diff / n_tot;
    Ok(NrfReport { v_diff, n_tot, nrf, nrf_db: 10.0 * libm::log10(nrf) })
}

/// Closed interval of one search axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let iv = Interval { lo, hi };
        iv.validate()?;
        Ok(iv)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::invalid(alloc::format!(
                "empty search interval [{}, {}]",
                self.lo,
                self.hi
            )));
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    fn grid_point(&self, j: usize, points: usize) -> f64 {
        if points <= 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + (self.hi - self.lo) * j as f64 / (points - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Coarse grid points per axis.
    pub grid_points: usize,
    /// Final step size of the coordinate refinement, per axis.
    pub tol: f64,
    /// Cap on refinement sweeps.
    pub max_sweeps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_points: 50, tol: 1e-4, max_sweeps: 10_000 }
    }
}

/// Minimizes `f` over a box: full grid search, then compass search with step
/// halving. Ties go to the lexicographically smallest point.
fn minimize3<F>(f: F, bounds: [Interval; 3], cfg: &SearchConfig) -> Result<([f64; 3], f64, usize)>
where
    F: Fn([f64; 3]) -> f64 + Sync + Send,
{
    for b in &bounds {
        b.validate()?;
    }
    if cfg.grid_points < 1 || !(cfg.tol > 0.0) {
        return Err(Error::invalid("search needs at least one grid point and a positive tolerance"));
    }
    let g = cfg.grid_points;
    // One task per first-axis value; each returns its best cell.
    let slabs = map_indices(g, |i| {
        let x0 = bounds[0].grid_point(i, g);
        let mut best = ([x0, 0.0, 0.0], f64::INFINITY);
        for j in 0..g {
            let x1 = bounds[1].grid_point(j, g);
            for k in 0..g {
                let x = [x0, x1, bounds[2].grid_point(k, g)];
                let v = f(x);
                if v < best.1 {
                    best = (x, v);
                }
            }
        }
        best
    });
    let mut evals = g * g * g;
    let (mut x, mut fx) = slabs
        .into_iter()
        .fold(([0.0; 3], f64::INFINITY), |acc, cand| if cand.1 < acc.1 { cand } else { acc });
    if !fx.is_finite() {
        return Err(Error::invalid("objective is not finite anywhere on the search grid"));
    }

    let mut step: [f64; 3] = core::array::from_fn(|a| {
        let w = bounds[a].hi - bounds[a].lo;
        if g > 1 { w / (g - 1) as f64 } else { w / 2.0 }
    });
    for _ in 0..cfg.max_sweeps {
        if step.iter().all(|&h| h < cfg.tol) {
            break;
        }
        let mut moved = false;
        for a in 0..3 {
            if step[a] < cfg.tol {
                continue;
            }
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[a] = bounds[a].clamp(x[a] + dir * step[a]);
                if y[a] == x[a] {
                    continue;
                }
                let fy = f(y);
                evals += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|h| *h *= 0.5);
        }
    }
    Ok((x, fx, evals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceFitBounds {
    pub r: Interval,
    pub n_th_s: Interval,
    pub n_th_i: Interval,
}

impl Default for SourceFitBounds {
    fn default() -> Self {
        SourceFitBounds {
            r: Interval { lo: 0.0, hi: 1.5 },
            n_th_s: Interval { lo: 0.0, hi: 1.0 },
            n_th_i: Interval { lo: 0.0, hi: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceFit {
    pub params: SourceModelParams,
    /// Achieved fidelity with the input.
    pub fidelity: f64,
    pub evaluations: usize,
}

/// Source-model parameters of maximum fidelity with `p`.
pub fn fit_source_model(
    p: &JointPnd,
    bounds: &SourceFitBounds,
    search: &SearchConfig,
) -> Result<SourceFit> {
    for b in [bounds.r, bounds.n_th_s, bounds.n_th_i] {
        b.validate()?;
        check_non_negative("fit lower bound", b.lo)?;
    }
    let trunc = p.truncation();
    let objective = |x: [f64; 3]| {
        let model = tms_joint_pnd(x[0], trunc)
            .and_then(|t| convolve_with_thermal(&t, x[1], x[2]))
            .map(|m| bhattacharyya(p.probs(), m.probs()));
        match model {
            Ok(f) => -f,
            Err(_) => f64::INFINITY,
        }
    };
    let (x, fx, evaluations) = minimize3(objective, [bounds.r, bounds.n_th_s, bounds.n_th_i], search)?;
    Ok(SourceFit {
        params: SourceModelParams { r: x[0], n_th_s: x[1], n_th_i: x[2] },
        fidelity: (-fx).min(1.0),
        evaluations,
    })
}

/// One measured power point. Single-arm click probabilities are optional;
/// without them the two background slopes are interchangeable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    /// Average pump power (mW).
    pub power: f64,
    pub p11: f64,
    /// Probability that the signal detector clicks.
    pub signal_click: Option<f64>,
    /// Probability that the idler detector clicks.
    pub idler_click: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFitBounds {
    pub a: Interval,
    pub b_s: Interval,
    pub b_i: Interval,
}

impl Default for PowerFitBounds {
    fn default() -> Self {
        PowerFitBounds {
            a: Interval { lo: 0.0, hi: 1.0 },
            b_s: Interval { lo: 0.0, hi: 0.5 },
            b_i: Interval { lo: 0.0, hi: 0.5 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub scaling: PowerScaling,
    /// Sum of squared residuals.
    pub residual: f64,
    pub evaluations: usize,
}

/// Least-squares fit of `r = aP`, `n_th = bP` to coincidence (and optionally
/// single) click probabilities measured at transmission `setting`.
///
/// With coincidences only the fit returns the ordering `b_s ≥ b_i`.
pub fn fit_power_scaling(
    points: &[PowerPoint],
    setting: Setting,
    bounds: &PowerFitBounds,
    search: &SearchConfig,
) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(Error::invalid("power-scaling fit needs at least three points"));
    }
    setting.validate()?;
    for b in [bounds.a, bounds.b_s, bounds.b_i] {
        b.validate()?;
        check_non_negative("fit lower bound", b.lo)?;
    }
    for pt in points {
        check_non_negative("power", pt.power)?;
    }
    let p0 = points[0].power;
    if points.iter().all(|pt| pt.power == p0) {
        return Err(Error::invalid("power-scaling fit needs at least two distinct powers"));
    }
    let residual = |x: [f64; 3]| -> f64 {
        let mut ssr = 0.0;
        for pt in points {
            let params = SourceModelParams { r: x[0] * pt.power, n_th_s: x[1] * pt.power, n_th_i: x[2] * pt.power };
            let Ok(c) = source_model_click_probs(&params, setting) else {
                return f64::INFINITY;
            };
            ssr += (c.p11 - pt.p11) * (c.p11 - pt.p11);
            if let Some(s) = pt.signal_click {
                let m = c.p10 + c.p11;
                ssr += (m - s) * (m - s);
            }
            if let Some(s) = pt.idler_click {
                let m = c.p01 + c.p11;
                ssr += (m - s) * (m - s);
            }
        }
        ssr
    };
    let (x, fx, evaluations) = minimize3(residual, [bounds.a, bounds.b_s, bounds.b_i], search)?;
    let mut scaling = PowerScaling { a: x[0], b_s: x[1], b_i: x[2] };
    let singles = points.iter().any(|p| p.signal_click.is_some() || p.idler_click.is_some());
    if !singles && setting.is_symmetric() && scaling.b_s < scaling.b_i {
        core::mem::swap(&mut scaling.b_s, &mut scaling.b_i);
    }
    Ok(PowerFit { scaling, residual: fx, evaluations })
}

/// `20 r log10 e`.
pub fn squeezing_db(r: f64) -> Result<f64> {
    check_non_negative("r", r)?;
    Ok(SQUEEZING_DB_PER_R * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for two points).
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Shape { expected: xs.len(), got: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("a line fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let (slope_err, intercept_err) = if n > 2 {
        let s2 = ssr / (nf - 2.0);
        let sum_x2: f64 = xs.iter().map(|x| x * x).sum();
        (libm::sqrt(s2 / sxx), libm::sqrt(s2 * sum_x2 / (nf * sxx)))
    } else {
        (0.0, 0.0)
    };
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, slope_err, intercept_err, r_squared })
}

/// `(Q_int − Q)/Q_int`.
pub fn escape_efficiency(q_loaded: f64, q_intrinsic: f64) -> Result<f64> {
    if !(q_loaded > 0.0 && q_loaded.is_finite()) {
        return Err(Error::Domain { what: "loaded Q", value: q_loaded });
    }
    if q_intrinsic.is_infinite() && q_intrinsic > 0.0 {
        return Ok(1.0);
    }
    if !(q_intrinsic >= q_loaded) {
        return Err(Error::invalid(alloc::format!(
            "loaded Q {q_loaded} exceeds intrinsic Q {q_intrinsic}"
        )));
    }
    Ok((q_intrinsic - q_loaded) / q_intrinsic)
}

/// Coefficient of determination of `model` against `ys`.
pub fn r_squared(ys: &[f64], model: &[f64]) -> Result<f64> {
    if ys.len() != model.len() || ys.is_empty() {
        return Err(Error::Shape { expected: ys.len(), got: model.len() });
    }
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ssr: f64 = ys.iter().zip(model).map(|(y, m)| (y - m) * (y - m)).sum();
    Ok(if syy > 0.0 { 1.0 - ssr / syy } else if ssr == 0.0 { 1.0 } else { 0.0 })
}

/// Fits `y = sinh²(a x)` by least squares over `a ∈ [0, a_max]`; returns
/// `(a, R²)`.
pub fn fit_sinh2(xs: &[f64], ys: &[f64], a_max: f64) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("sinh² fit needs matching samples, at least two"));
    }
    let model = |a: f64| -> Vec<f64> {
        xs.iter().map(|&x| {
            let s = libm::sinh(a * x);
            s * s
        }).collect()
    };
    let ssr = |a: f64| -> f64 { model(a).iter().zip(ys).map(|(m, y)| (m - y) * (m - y)).sum() };
    // Golden-section search after a coarse scan to bracket the minimum.
    let coarse = 400;
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for j in 0..=coarse {
        let v = ssr(a_max * j as f64 / coarse as f64);
        if v < best_v {
            best_v = v;
            best = j;
        }
    }
    let h = a_max / coarse as f64;
    let (mut lo, mut hi) = (((best as f64) - 1.0).max(0.0) * h, ((best as f64) + 1.0).min(coarse as f64) * h);
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    for _ in 0..200 {
        let c = hi - phi * (hi - lo);
        let d = lo + phi * (hi - lo);
        if ssr(c) < ssr(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let a = 0.5 * (lo + hi);
    Ok((a, r_squared(ys, &model(a))?))
}
