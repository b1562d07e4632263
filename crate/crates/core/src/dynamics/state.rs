//! Two-mode density operator in block form.
//!
//! Pair creation and single-photon loss both preserve `d − d′`, where
//! `d = n_s − n_i` of the ket and `d′` of the bra. Starting from vacuum only
//! the `d = d′` blocks are ever populated, so the state is stored as one dense
//! Hermitian block per photon-number difference `d ∈ [−N, N]`. Inside block
//! `d` the basis runs over `n_s = max(0, d) ..= min(N, N + d)`, `n_i = n_s − d`.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::fock::JointPnd;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub d: isize,
    /// Signal photon number of the first basis state.
    pub s0: usize,
    pub len: usize,
    pub offset: usize,
}

/// Block geometry for truncation `nf` per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    nf: usize,
    blocks: Vec<Block>,
    size: usize,
}

impl Layout {
    pub fn new(nf: usize) -> Self {
        let n = nf as isize;
        let mut blocks = Vec::with_capacity(2 * nf + 1);
        let mut offset = 0;
        for d in -n..=n {
            let s0 = d.max(0) as usize;
            let len = nf + 1 - d.unsigned_abs();
            blocks.push(Block { d, s0, len, offset });
            offset += len * len;
        }
        Layout { nf, blocks, size: offset }
    }

    pub fn truncation(&self) -> usize {
        self.nf
    }

    /// Number of stored complex entries.
    pub fn size(&self) -> usize {
        self.size
    }

    fn block(&self, d: isize) -> Option<&Block> {
        let idx = d + self.nf as isize;
        if idx < 0 {
            return None;
        }
        self.blocks.get(idx as usize)
    }
}

/// Block-diagonal two-mode density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    layout: Layout,
    data: Vec<Complex64>,
    /// Time (ps).
    pub time: f64,
}

impl QuantumState {
    pub fn vacuum(nf: usize) -> Self {
        let layout = Layout::new(nf);
        let mut data = vec![ZERO; layout.size()];
        let b0 = layout.block(0).expect("d = 0 block");
        data[b0.offset] = Complex64::new(1.0, 0.0);
        QuantumState { layout, data, time: 0.0 }
    }

    pub fn zeros_like(other: &QuantumState) -> Self {
        QuantumState { layout: other.layout.clone(), data: vec![ZERO; other.data.len()], time: other.time }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn truncation(&self) -> usize {
        self.layout.nf
    }

    pub(crate) fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Diagonal entries as `(n_s, n_i, population)`.
    fn diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.layout.blocks.iter().flat_map(move |b| {
            (0..b.len).map(move |j| {
                let ns = b.s0 + j;
                let ni = (ns as isize - b.d) as usize;
                (ns, ni, self.data[b.offset + j * b.len + j].re)
            })
        })
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().map(|(_, _, p)| p).sum()
    }

    /// `(Tr ρ n_s, Tr ρ n_i)`.
    pub fn mean_numbers(&self) -> (f64, f64) {
        self.diagonal().fold((0.0, 0.0), |(a, b), (ns, ni, p)| (a + ns as f64 * p, b + ni as f64 * p))
    }

    /// `Tr(ρ a_s† a_i†)`.
    pub fn pair_coherence(&self) -> Complex64 {
        let mut acc = ZERO;
        for b in &self.layout.blocks {
            for j in 0..b.len.saturating_sub(1) {
                let ns = b.s0 + j;
                let ni = (ns as isize - b.d) as usize;
                let c = libm::sqrt(((ns + 1) * (ni + 1)) as f64);
                acc += self.data[b.offset + j * b.len + j + 1] * c;
            }
        }
        acc
    }

    /// Population with either mode in its highest represented level.
    pub fn top_population(&self) -> f64 {
        let nf = self.layout.nf;
        self.diagonal().filter(|(ns, ni, _)| *ns == nf || *ni == nf).map(|(_, _, p)| p).sum()
    }

    /// Photon-number distribution of the (possibly unnormalized) state.
    pub fn photon_numbers(&self) -> Vec<f64> {
        let d = self.layout.nf + 1;
        let mut out = vec![0.0; d * d];
        for (ns, ni, p) in self.diagonal() {
            out[ns * d + ni] = p.max(0.0);
        }
        out
    }

    pub fn pnd(&self) -> crate::Result<JointPnd> {
        JointPnd::from_weights(self.layout.nf, self.photon_numbers())
    }

    /// Dense Hermitian blocks as `(n_s − n_i, dimension, row-major entries)`.
    pub fn blocks(&self) -> impl Iterator<Item = (isize, usize, &[Complex64])> + '_ {
        self.layout.blocks.iter().map(move |b| (b.d, b.len, &self.data[b.offset..b.offset + b.len * b.len]))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Largest violation of `|ρ_jk|² ≤ ρ_jj ρ_kk` over all blocks, a necessary
    /// condition for positivity.
    pub fn positivity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.layout.blocks {
            let at = |j: usize, k: usize| self.data[b.offset + j * b.len + k];
            for j in 0..b.len {
                worst = worst.max(-at(j, j).re);
                for k in j + 1..b.len {
                    let excess = at(j, k).norm_sqr() - at(j, j).re.max(0.0) * at(k, k).re.max(0.0);
                    worst = worst.max(excess);
                }
            }
        }
        worst
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Arm {
    Signal,
    Idler,
}

/// `out += rate · a ρ a†` on the signal (`signal = true`) or idler mode.
pub(crate) fn jump_add(layout: &Layout, src: &[Complex64], out: &mut [Complex64], rate: f64, signal: bool) {
    let arm = if signal { Arm::Signal } else { Arm::Idler };
    jump_into(layout, src, out, rate, arm, true);
}

/// `out += rate · a ρ a†` (or `out =` when `accumulate` is false).
fn jump_into(layout: &Layout, src: &[Complex64], out: &mut [Complex64], rate: f64, arm: Arm, accumulate: bool) {
    if !accumulate {
        out.iter_mut().for_each(|v| *v = ZERO);
    }
    let nf = layout.nf;
    let roots: Vec<f64> = (0..nf + 2).map(|n| libm::sqrt(n as f64)).collect();
    for b in &layout.blocks {
        // Losing a signal photon lowers d by one, losing an idler photon raises it.
        let from_d = match arm {
            Arm::Signal => b.d + 1,
            Arm::Idler => b.d - 1,
        };
        let Some(src_b) = layout.block(from_d) else { continue };
        for j in 0..b.len {
            let ns_j = b.s0 + j;
            let ni_j = (ns_j as isize - b.d) as usize;
            let (src_j, cj) = match arm {
                Arm::Signal => {
                    if ns_j + 1 > nf {
                        continue;
                    }
                    (ns_j + 1 - src_b.s0, roots[ns_j + 1])
                }
                Arm::Idler => {
                    if ni_j + 1 > nf {
                        continue;
                    }
                    (ns_j - src_b.s0, roots[ni_j + 1])
                }
            };
            for k in 0..b.len {
                let ns_k = b.s0 + k;
                let ni_k = (ns_k as isize - b.d) as usize;
                let (src_k, ck) = match arm {
                    Arm::Signal => {
                        if ns_k + 1 > nf {
                            continue;
                        }
                        (ns_k + 1 - src_b.s0, roots[ns_k + 1])
                    }
                    Arm::Idler => {
                        if ni_k + 1 > nf {
                            continue;
                        }
                        (ns_k - src_b.s0, roots[ni_k + 1])
                    }
                };
                let w = rate * cj * ck;
                out[b.offset + j * b.len + k] += src[src_b.offset + src_j * src_b.len + src_k] * w;
            }
        }
    }
}

/// Coefficients of the generator at one instant.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Generator {
    /// Pair amplitude `g` in `H = −(g a_s†a_i† + g* a_s a_i) − x (n_s + n_i)`.
    pub g: Complex64,
    pub x: f64,
    pub gamma_s: f64,
    pub gamma_i: f64,
    /// Weights of the recycling terms `a ρ a†`.
    pub recycle_s: f64,
    pub recycle_i: f64,
}

/// Precomputed per-block photon numbers and ladder coefficients.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    ns: Vec<f64>,
    ni: Vec<f64>,
    /// `√((n_s+1)(n_i+1))` for each basis state, zero at the block edge.
    c: Vec<f64>,
}

impl Workspace {
    pub fn new(layout: &Layout) -> Self {
        let mut ns = Vec::new();
        let mut ni = Vec::new();
        let mut c = Vec::new();
        for b in &layout.blocks {
            for j in 0..b.len {
                let s = b.s0 + j;
                let i = (s as isize - b.d) as usize;
                ns.push(s as f64);
                ni.push(i as f64);
                c.push(if j + 1 < b.len { libm::sqrt(((s + 1) * (i + 1)) as f64) } else { 0.0 });
            }
        }
        Workspace { ns, ni, c }
    }
}

/// `out = L ρ` for the generator `gen`.
pub(crate) fn apply_generator(
    layout: &Layout,
    ws: &Workspace,
    gen: &Generator,
    rho: &[Complex64],
    out: &mut [Complex64],
) {
    let i = Complex64::new(0.0, 1.0);
    // −i H has diagonal i x (n_s + n_i) and couplings i g c, i g* c.
    let up = i * gen.g; // −i · (−g)
    let down = i * gen.g.conj();
    let mut basis = 0;
    for b in &layout.blocks {
        let n = b.len;
        let blk = &rho[b.offset..b.offset + n * n];
        let ns = &ws.ns[basis..basis + n];
        let ni = &ws.ni[basis..basis + n];
        let c = &ws.c[basis..basis + n];
        let dst = &mut out[b.offset..b.offset + n * n];
        for j in 0..n {
            let hj = gen.x * (ns[j] + ni[j]);
            let loss_j = gen.gamma_s * ns[j] + gen.gamma_i * ni[j];
            for k in 0..n {
                let hk = gen.x * (ns[k] + ni[k]);
                let loss_k = gen.gamma_s * ns[k] + gen.gamma_i * ni[k];
                let r = blk[j * n + k];
                // −i[H, ρ] with H_jj = −x(n_s+n_i), H_{j+1,j} = −g c_j, H_{j,j+1} = −g* c_j.
                let mut v = r * Complex64::new(-(loss_j + loss_k), hj - hk);
                if j > 0 {
                    v += up * c[j - 1] * blk[(j - 1) * n + k];
                }
                if j + 1 < n {
                    v += down * c[j] * blk[(j + 1) * n + k];
                }
                if k > 0 {
                    v -= down * c[k - 1] * blk[j * n + k - 1];
                }
                if k + 1 < n {
                    v -= up * c[k] * blk[j * n + k + 1];
                }
                dst[j * n + k] = v;
            }
        }
        basis += n;
    }
    if gen.recycle_s != 0.0 {
        jump_into(layout, rho, out, gen.recycle_s, Arm::Signal, true);
    }
    if gen.recycle_i != 0.0 {
        jump_into(layout, rho, out, gen.recycle_i, Arm::Idler, true);
    }
}
