//! Photon-number distributions and loss channels.
//!
//! A [`Pnd`] holds `P(n)` for `n = 0..=N`; a [`JointPnd`] holds `P(n_s, n_i)`
//! on the square grid `0..=N × 0..=N`, stored row-major with the signal index
//! as the row. Constructors that truncate an infinite distribution renormalize
//! the kept mass.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_range, Error, Result};

const NORM_TOL: f64 = 1e-9;

/// Exact integer binomial coefficients are used up to this `n`.
const EXACT_BINOMIAL_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Signal,
    Idler,
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if let Some(&bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::Domain { what: "probability", value: bad });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::Domain { what: "total probability", value: total });
    }
    Ok(())
}

fn normalize(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(&bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Domain { what: "weight", value: bad });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Domain { what: "total weight", value: total });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Single-mode photon-number distribution over `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pnd {
    probs: Vec<f64>,
}

impl Pnd {
    /// Wraps an already normalized probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid("a PND needs at least the 0 and 1 photon bins"));
        }
        validate_probs(&probs)?;
        Ok(Pnd { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("a PND needs at least the 0 and 1 photon bins"));
        }
        Ok(Pnd { probs: normalize(weights)? })
    }

    pub fn vacuum(trunc: usize) -> Self {
        Self::fock(0, trunc.max(1))
    }

    /// Number state `|n⟩`. Panics if `n > trunc`.
    pub fn fock(n: usize, trunc: usize) -> Self {
        assert!(n <= trunc, "Fock level {n} above truncation {trunc}");
        let mut probs = vec![0.0; trunc.max(1) + 1];
        probs[n] = 1.0;
        Pnd { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Highest photon number `N` represented.
    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - m) * (n as f64 - m) * p)
            .sum()
    }

    /// Re-expresses the distribution on `0..=trunc`, zero-padding or cutting
    /// the tail and renormalizing.
    pub fn with_truncation(&self, trunc: usize) -> Result<Self> {
        let mut w = vec![0.0; trunc.max(1) + 1];
        for (dst, src) in w.iter_mut().zip(&self.probs) {
            *dst = *src;
        }
        Self::from_weights(w)
    }
}

/// Two-mode (signal, idler) photon-number distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPnd {
    trunc: usize,
    probs: Vec<f64>,
}

impl JointPnd {
    /// Wraps a normalized row-major grid of side `trunc + 1`.
    pub fn new(trunc: usize, probs: Vec<f64>) -> Result<Self> {
        Self::check_len(trunc, probs.len())?;
        validate_probs(&probs)?;
        Ok(JointPnd { trunc, probs })
    }

    pub fn from_weights(trunc: usize, weights: Vec<f64>) -> Result<Self> {
        Self::check_len(trunc, weights.len())?;
        Ok(JointPnd { trunc, probs: normalize(weights)? })
    }

    fn check_len(trunc: usize, len: usize) -> Result<()> {
        if trunc < 1 {
            return Err(Error::invalid("joint truncation must be at least 1"));
        }
        let expected = (trunc + 1) * (trunc + 1);
        if len != expected {
            return Err(Error::Shape { expected, got: len });
        }
        Ok(())
    }

    pub fn vacuum(trunc: usize) -> Self {
        Self::delta(0, 0, trunc.max(1))
    }

    /// All mass on `(n_s, n_i)`. Panics if either index exceeds `trunc`.
    pub fn delta(n_s: usize, n_i: usize, trunc: usize) -> Self {
        assert!(n_s <= trunc && n_i <= trunc, "grid point outside truncation {trunc}");
        let d = trunc + 1;
        let mut probs = vec![0.0; d * d];
        probs[n_s * d + n_i] = 1.0;
        JointPnd { trunc, probs }
    }

    /// Uncorrelated state `P(n, k) = p_s(n) p_i(k)`.
    pub fn product(signal: &Pnd, idler: &Pnd) -> Result<Self> {
        if signal.truncation() != idler.truncation() {
            return Err(Error::Shape { expected: signal.probs.len(), got: idler.probs.len() });
        }
        let trunc = signal.truncation();
        let mut probs = Vec::with_capacity((trunc + 1) * (trunc + 1));
        for ps in signal.probs() {
            for pi in idler.probs() {
                probs.push(ps * pi);
            }
        }
        Ok(JointPnd { trunc, probs })
    }

    /// Embeds a single-mode distribution as the signal arm with a vacuum idler.
    pub fn from_signal(signal: &Pnd) -> Self {
        let idler = Pnd::vacuum(signal.truncation());
        Self::product(signal, &idler).expect("equal truncations")
    }

    pub fn truncation(&self) -> usize {
        self.trunc
    }

    /// Side length `N + 1` of the grid.
    pub fn dim(&self) -> usize {
        self.trunc + 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    #[inline]
    pub fn get(&self, n_s: usize, n_i: usize) -> f64 {
        self.probs[n_s * (self.trunc + 1) + n_i]
    }

    /// Iterates `(n_s, n_i, P)` over the grid.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d = self.trunc + 1;
        self.probs.iter().enumerate().map(move |(idx, &p)| (idx / d, idx % d, p))
    }

    pub fn marginal(&self, arm: Arm) -> Pnd {
        marginal(self, arm)
    }

    pub fn with_truncation(&self, trunc: usize) -> Result<Self> {
        let trunc = trunc.max(1);
        let d = trunc + 1;
        let mut w = vec![0.0; d * d];
        for (n, k, p) in self.iter() {
            if n <= trunc && k <= trunc {
                w[n * d + k] = p;
            }
        }
        Self::from_weights(trunc, w)
    }
}

/// Squeezing parameter and thermal backgrounds of the source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModelParams {
    pub r: f64,
    pub n_th_s: f64,
    pub n_th_i: f64,
}

impl SourceModelParams {
    pub fn new(r: f64, n_th_s: f64, n_th_i: f64) -> Result<Self> {
        let p = SourceModelParams { r, n_th_s, n_th_i };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("r", self.r)?;
        check_non_negative("n_th_s", self.n_th_s)?;
        check_non_negative("n_th_i", self.n_th_i)?;
        Ok(())
    }

    /// Mean pair number `sinh²r`.
    pub fn pair_mean(&self) -> f64 {
        let s = libm::sinh(self.r);
        s * s
    }
}

/// Linear dependence of the source model on average pump power:
/// `r = a P`, `n_th,s = b_s P`, `n_th,i = b_i P` with `P` in mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerScaling {
    pub a: f64,
    pub b_s: f64,
    pub b_i: f64,
}

impl PowerScaling {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("a", self.a)?;
        check_non_negative("b_s", self.b_s)?;
        check_non_negative("b_i", self.b_i)?;
        Ok(())
    }

    pub fn at_power(&self, power_mw: f64) -> Result<SourceModelParams> {
        self.validate()?;
        check_non_negative("power", power_mw)?;
        SourceModelParams::new(self.a * power_mw, self.b_s * power_mw, self.b_i * power_mw)
    }
}

/// Geometric weights `m^n/(1+m)^{n+1}` for `n = 0..=trunc`, not renormalized.
fn thermal_weights(mean: f64, trunc: usize) -> Vec<f64> {
    let p0 = 1.0 / (1.0 + mean);
    let ratio = mean / (1.0 + mean);
    let mut w = Vec::with_capacity(trunc + 1);
    let mut cur = p0;
    for _ in 0..=trunc {
        w.push(cur);
        cur *= ratio;
    }
    w
}

pub fn thermal_pnd(mean: f64, trunc: usize) -> Result<Pnd> {
    check_non_negative("thermal mean", mean)?;
    if trunc < 1 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    Pnd::from_weights(thermal_weights(mean, trunc))
}

pub fn coherent_pnd(mean: f64, trunc: usize) -> Result<Pnd> {
    check_non_negative("coherent mean", mean)?;
    if trunc < 1 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    if mean == 0.0 {
        return Ok(Pnd::vacuum(trunc));
    }
    let ln_mean = libm::log(mean);
    let w = (0..=trunc)
        .map(|n| libm::exp(-mean + n as f64 * ln_mean - libm::lgamma(n as f64 + 1.0)))
        .collect();
    Pnd::from_weights(w)
}

/// Two-mode squeezed vacuum, `P(n, k) = δ_{nk} tanh^{2n} r / cosh² r`.
pub fn tms_joint_pnd(r: f64, trunc: usize) -> Result<JointPnd> {
    check_non_negative("r", r)?;
    if trunc < 1 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    let t2 = libm::tanh(r) * libm::tanh(r);
    let c2 = libm::cosh(r) * libm::cosh(r);
    let d = trunc + 1;
    let mut w = vec![0.0; d * d];
    let mut cur = 1.0 / c2;
    for n in 0..d {
        w[n * d + n] = cur;
        cur *= t2;
    }
    JointPnd::from_weights(trunc, w)
}

/// Adds independent thermal noise of means `n_th_s`, `n_th_i` to the two arms
/// (two-dimensional convolution), renormalized on the grid.
pub fn convolve_with_thermal(p: &JointPnd, n_th_s: f64, n_th_i: f64) -> Result<JointPnd> {
    check_non_negative("n_th_s", n_th_s)?;
    check_non_negative("n_th_i", n_th_i)?;
    if n_th_s == 0.0 && n_th_i == 0.0 {
        return Ok(p.clone());
    }
    let trunc = p.truncation();
    let d = trunc + 1;
    let th_s = thermal_weights(n_th_s, trunc);
    let th_i = thermal_weights(n_th_i, trunc);

    // Signal axis first, then idler axis.
    let mut tmp = vec![0.0; d * d];
    for n in 0..d {
        for a in 0..=n {
            let w = th_s[n - a];
            for k in 0..d {
                tmp[n * d + k] += w * p.probs[a * d + k];
            }
        }
    }
    let mut out = vec![0.0; d * d];
    for n in 0..d {
        let row_in = &tmp[n * d..(n + 1) * d];
        let row_out = &mut out[n * d..(n + 1) * d];
        for k in 0..d {
            row_out[k] = (0..=k).map(|b| th_i[k - b] * row_in[b]).sum();
        }
    }
    JointPnd::from_weights(trunc, out)
}

/// Source model state: squeezed vacuum with thermal backgrounds on each arm.
pub fn source_model_pnd(params: &SourceModelParams, trunc: usize) -> Result<JointPnd> {
    params.validate()?;
    let tms = tms_joint_pnd(params.r, trunc)?;
    convolve_with_thermal(&tms, params.n_th_s, params.n_th_i)
}

fn binomial_coefficient(n: usize, m: usize) -> f64 {
    debug_assert!(m <= n);
    if n <= EXACT_BINOMIAL_MAX {
        let m = m.min(n - m);
        let mut c: u64 = 1;
        for j in 0..m as u64 {
            c = c * (n as u64 - j) / (j + 1);
        }
        c as f64
    } else {
        let (nf, mf) = (n as f64, m as f64);
        libm::exp(libm::lgamma(nf + 1.0) - libm::lgamma(mf + 1.0) - libm::lgamma(nf - mf + 1.0))
    }
}

/// Matrix `T[m][n] = C(n, m) ηᵐ (1−η)^{n−m}` of the binomial thinning channel.
fn loss_kernel(eta: f64, trunc: usize) -> Vec<Vec<f64>> {
    let mut pow_eta = vec![1.0; trunc + 1];
    let mut pow_loss = vec![1.0; trunc + 1];
    for j in 1..=trunc {
        pow_eta[j] = pow_eta[j - 1] * eta;
        pow_loss[j] = pow_loss[j - 1] * (1.0 - eta);
    }
    (0..=trunc)
        .map(|m| {
            (0..=trunc)
                .map(|n| {
                    if n < m {
                        0.0
                    } else {
                        binomial_coefficient(n, m) * pow_eta[m] * pow_loss[n - m]
                    }
                })
                .collect()
        })
        .collect()
}

/// Binomial loss with transmission `eta`.
pub fn apply_loss(p: &Pnd, eta: f64) -> Result<Pnd> {
    check_range("transmission", eta, 0.0, 1.0)?;
    if eta == 1.0 {
        return Ok(p.clone());
    }
    let kernel = loss_kernel(eta, p.truncation());
    let out = kernel
        .iter()
        .map(|row| row.iter().zip(p.probs()).map(|(t, q)| t * q).sum())
        .collect();
    Pnd::from_weights(out)
}

/// Independent binomial loss on each arm.
pub fn apply_loss_joint(p: &JointPnd, eta_s: f64, eta_i: f64) -> Result<JointPnd> {
    check_range("signal transmission", eta_s, 0.0, 1.0)?;
    check_range("idler transmission", eta_i, 0.0, 1.0)?;
    if eta_s == 1.0 && eta_i == 1.0 {
        return Ok(p.clone());
    }
    let trunc = p.truncation();
    let d = trunc + 1;
    let ks = loss_kernel(eta_s, trunc);
    let ki = loss_kernel(eta_i, trunc);
    let mut tmp = vec![0.0; d * d];
    for m in 0..d {
        for n in m..d {
            let w = ks[m][n];
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                tmp[m * d + k] += w * p.probs[n * d + k];
            }
        }
    }
    let mut out = vec![0.0; d * d];
    for m in 0..d {
        for j in 0..d {
            out[m * d + j] = (j..d).map(|k| ki[j][k] * tmp[m * d + k]).sum();
        }
    }
    JointPnd::from_weights(trunc, out)
}

pub fn marginal(p: &JointPnd, arm: Arm) -> Pnd {
    let d = p.dim();
    let mut out = vec![0.0; d];
    for (n, k, q) in p.iter() {
        match arm {
            Arm::Signal => out[n] += q,
            Arm::Idler => out[k] += q,
        }
    }
    Pnd::from_weights(out).expect("marginal of a valid joint distribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thermal_edge_cases() {
        assert_eq!(thermal_pnd(0.0, 4).unwrap().probs(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(thermal_weights(1.0, 2), vec![0.5, 0.25, 0.125]);
        let t = thermal_pnd(1.2, 10).unwrap();
        // The geometric tail beyond N=10 carries (1.2/2.2)^11 ≈ 1.3e-3 of the mass.
        let exact_mean_trunc: f64 = (0..=10)
            .map(|n| n as f64 * 1.2f64.powi(n) / 2.2f64.powi(n + 1))
            .sum::<f64>()
            / (1.0 - (1.2f64 / 2.2).powi(11));
        assert_abs_diff_eq!(t.mean(), exact_mean_trunc, epsilon = 1e-12);
        assert!((t.mean() - 1.2).abs() < 0.03);
        assert!(thermal_pnd(-0.1, 4).is_err());
    }

    #[test]
    fn coherent_edge_cases() {
        assert_eq!(coherent_pnd(0.0, 4).unwrap().probs()[0], 1.0);
        let c = coherent_pnd(1.2, 10).unwrap();
        assert_abs_diff_eq!(c.probs()[0], (-1.2f64).exp(), epsilon = 1e-5);
        let c = coherent_pnd(1.2, 40).unwrap();
        let q = (c.variance() - c.mean()) / c.mean();
        assert!(q.abs() < 1e-6);
        assert!(coherent_pnd(-1.0, 4).is_err());
    }

    #[test]
    fn tms_structure() {
        let v = tms_joint_pnd(0.0, 5).unwrap();
        assert_eq!(v, JointPnd::vacuum(5));
        let r = 0.63;
        let t = tms_joint_pnd(r, 10).unwrap();
        for (n, k, p) in t.iter() {
            if n != k {
                assert_eq!(p, 0.0);
            }
        }
        assert_abs_diff_eq!(t.get(1, 1) / t.get(0, 0), r.tanh().powi(2), epsilon = 1e-14);
        let m = t.marginal(Arm::Signal).mean();
        assert!((m - r.sinh().powi(2)).abs() < 1e-3);
    }

    #[test]
    fn convolution_matches_triple_sum() {
        let (r, ns, ni, trunc) = (0.63, 0.11, 0.10, 10usize);
        let got = source_model_pnd(&SourceModelParams::new(r, ns, ni).unwrap(), trunc).unwrap();
        let th = |m: f64, j: usize| m.powi(j as i32) / (1.0 + m).powi(j as i32 + 1);
        let mut brute = vec![0.0; (trunc + 1) * (trunc + 1)];
        for k in 0..=trunc {
            let pk = r.tanh().powi(2 * k as i32) / r.cosh().powi(2);
            for p in 0..=trunc - k {
                for q in 0..=trunc - k {
                    brute[(k + p) * (trunc + 1) + k + q] += pk * th(ns, p) * th(ni, q);
                }
            }
        }
        let total: f64 = brute.iter().sum();
        for (a, b) in got.probs().iter().zip(&brute) {
            assert_abs_diff_eq!(*a, b / total, epsilon = 1e-14);
        }
    }

    #[test]
    fn convolving_vacuum_gives_thermal_product() {
        let out = convolve_with_thermal(&JointPnd::vacuum(8), 0.3, 0.2).unwrap();
        let want =
            JointPnd::product(&thermal_pnd(0.3, 8).unwrap(), &thermal_pnd(0.2, 8).unwrap()).unwrap();
        for (a, b) in out.probs().iter().zip(want.probs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        let t = tms_joint_pnd(0.4, 6).unwrap();
        assert_eq!(convolve_with_thermal(&t, 0.0, 0.0).unwrap(), t);
    }

    #[test]
    fn loss_basics() {
        let p = thermal_pnd(0.7, 8).unwrap();
        assert_eq!(apply_loss(&p, 1.0).unwrap(), p);
        let one = apply_loss(&Pnd::fock(1, 1), 0.3).unwrap();
        assert_abs_diff_eq!(one.probs()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(one.probs()[1], 0.3, epsilon = 1e-15);
        assert!(apply_loss(&p, 1.1).is_err());
        let twice = apply_loss(&apply_loss(&p, 0.6).unwrap(), 0.5).unwrap();
        let once = apply_loss(&p, 0.3).unwrap();
        for (a, b) in twice.probs().iter().zip(once.probs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn joint_loss_matches_double_binomial_sum() {
        let t = tms_joint_pnd(0.63, 10).unwrap();
        let eta = 0.45;
        let got = apply_loss_joint(&t, eta, eta).unwrap();
        let c = |n: usize, m: usize| {
            (0..m).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
        };
        let b = |n: usize, m: usize| c(n, m) * eta.powi(m as i32) * (1.0 - eta).powi((n - m) as i32);
        for m in 0..=10 {
            for j in 0..=10 {
                let mut want = 0.0;
                for n in m.max(j)..=10 {
                    want += b(n, m) * b(n, j) * t.get(n, n);
                }
                assert_abs_diff_eq!(got.get(m, j), want, epsilon = 1e-14);
            }
        }
        assert_eq!(apply_loss_joint(&t, 1.0, 1.0).unwrap(), t);
    }

    #[test]
    fn large_n_binomials_use_log_path() {
        assert_abs_diff_eq!(binomial_coefficient(20, 10), 184_756.0, epsilon = 0.0);
        let c = binomial_coefficient(40, 20);
        assert!((c - 137_846_528_820.0).abs() / c < 1e-12);
    }

    #[test]
    fn marginals() {
        let a = thermal_pnd(0.4, 6).unwrap();
        let b = coherent_pnd(0.9, 6).unwrap();
        let j = JointPnd::product(&a, &b).unwrap();
        for (x, y) in j.marginal(Arm::Signal).probs().iter().zip(a.probs()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-15);
        }
        for (x, y) in j.marginal(Arm::Idler).probs().iter().zip(b.probs()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-15);
        }
    }

    #[test]
    fn truncation_change() {
        let t = thermal_pnd(0.5, 20).unwrap();
        let cut = t.with_truncation(5).unwrap();
        assert_eq!(cut.truncation(), 5);
        let pad = cut.with_truncation(9).unwrap();
        assert_eq!(&pad.probs()[6..], &[0.0; 4]);
        let j = tms_joint_pnd(0.5, 12).unwrap().with_truncation(4).unwrap();
        assert_eq!(j.dim(), 5);
        assert!((j.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
