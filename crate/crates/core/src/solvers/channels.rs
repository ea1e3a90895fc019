//! Channel form of the master equation for the full `e^{ikx}` coupling.
//!
//! ```text
//! dρ/dt = −i[H, ρ] − Σ_j ( [S_j, [I_j(t), ρ]] − i[S_j, {I′_j(t), ρ}] )
//! I_j(t)  = ∫₀ᵗ c_j(t₁)  S_j†(−t₁) dt₁,    S_j = e^{i k_j x}
//! I′_j(t) = ∫₀ᵗ c′_j(t₁) S_j†(−t₁) dt₁
//! ```
//!
//! The quadrature nodes sit on `k > 0`; each node stands for the pair
//! `±k_j`, and the `−k_j` member (for which `S → S†`, `I → I†`) is added
//! with half weight alongside the `+k_j` one.
//!
//! # Evaluation strategy
//!
//! Writing `J = I + iI′` and `K = I − iI′`, the bracket for one channel is
//!
//! ```text
//! X_j(ρ) = S K ρ + ρ J S − S ρ J − K ρ S
//! ```
//!
//! Every `S_j` is diagonal in the eigenbasis `x = V ξ V†`, so all channel
//! sums collapse onto the two tensors `T^I_{acb} = Σ_j e^{ik_jξ_a} (I_j)_{cb}`
//! and its primed twin. These are advanced directly, which keeps a
//! right-hand-side evaluation at `O(d³)` independent of the channel count.

use super::{evolve, EvolveOptions, Generator, Node, Trajectory};
use crate::bath::{BathModel, KernelNodes};
use crate::hilbert::{unitarity_error, DensityMatrix, OperatorSet};
use crate::linalg::{hermitian_eigen, matmul_acc, matmul_into};
use crate::{CMat, Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Channel operators and kernels of a one-dimensional continuum bath.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    nodes: KernelNodes,
    coupling_sq: f64,
    frozen: bool,
    dim: usize,
    energies: Vec<f64>,
    /// `S_j` in the energy basis.
    operators: Vec<CMat>,
    /// Eigenvectors of `x` (columns) and their eigenvalues.
    v: CMat,
    v_adj: CMat,
    xi: Vec<f64>,
    /// `e^{i k_j ξ_a}`, laid out `a + d·j`.
    phases: Vec<C64>,
    /// `(S_j†)_{cb}`, laid out `j + n·(c + d·b)`.
    adjoints: Vec<C64>,
}

impl ChannelSet {
    pub fn new(model: &BathModel, ops: &OperatorSet) -> Result<Self> {
        model.validate()?;
        if model.spatial_dim != 1 {
            return Err(Error::InvalidParameter(format!(
                "channel form is one-dimensional, bath has spatial_dim = {}",
                model.spatial_dim
            )));
        }
        let nodes = model.nodes();
        let d = ops.dim();
        let n = nodes.len();
        let (xi, v) = hermitian_eigen(&ops.x)?;
        let v_adj = v.adjoint();
        let mut phases = vec![ZERO; d * n];
        for j in 0..n {
            for a in 0..d {
                phases[a + d * j] = C64::from_polar(1.0, nodes.k[j] * xi[a]);
            }
        }
        let mut operators = Vec::with_capacity(n);
        let mut adjoints = vec![ZERO; n * d * d];
        for j in 0..n {
            let mut scaled = v.clone();
            for c in 0..d {
                let ph = phases[c + d * j];
                for r in 0..d {
                    scaled[(r, c)] *= ph;
                }
            }
            let s = &scaled * &v_adj;
            let err = unitarity_error(&s);
            if err > 1e-12 {
                return Err(Error::InvalidState(format!(
                    "channel operator {j} deviates from unitarity by {err:.3e}"
                )));
            }
            for b in 0..d {
                for c in 0..d {
                    adjoints[j + n * (c + d * b)] = s[(b, c)].conj();
                }
            }
            operators.push(s);
        }
        Ok(Self {
            nodes,
            coupling_sq: model.coupling_sq,
            frozen: false,
            dim: d,
            energies: ops.energies.clone(),
            operators,
            v,
            v_adj,
            xi,
            phases,
            adjoints,
        })
    }

    /// Replace `c_j(t)` by `c_j(0)` and drop `c′_j`.
    pub fn with_frozen_kernels(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &KernelNodes {
        &self.nodes
    }

    pub fn coupling_sq(&self) -> f64 {
        self.coupling_sq
    }

    pub fn operator(&self, j: usize) -> &CMat {
        &self.operators[j]
    }

    pub fn position_eigenvalues(&self) -> &[f64] {
        &self.xi
    }

    /// `c_j(t) = e² w_j G_H(k_j, t)`.
    pub fn c(&self, j: usize, t: f64) -> f64 {
        let t = if self.frozen { 0.0 } else { t };
        self.coupling_sq * self.nodes.weights[j] * self.nodes.g_h(j, t)
    }

    /// `c′_j(t) = e² w_j G_R(k_j, t)`.
    pub fn c_prime(&self, j: usize, t: f64) -> f64 {
        if self.frozen {
            return 0.0;
        }
        self.coupling_sq * self.nodes.weights[j] * self.nodes.g_r(j, t)
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.operators
            .iter()
            .map(unitarity_error)
            .fold(0.0, f64::max)
    }

    /// `Σ_j c_j(t) S_j†(−t)` and `Σ_j c′_j(t) S_j†(−t)`, each weighted by the
    /// row phase `e^{ik_jξ_a}`, as `d³` tensors laid out `a + d·c + d²·b`.
    fn integrand(&self, t: f64, coef: &mut Vec<C64>, out_c: &mut [C64], out_p: &mut [C64]) {
        let d = self.dim;
        let n = self.len();
        coef.clear();
        coef.resize(2 * d * n, ZERO);
        for j in 0..n {
            let (cj, pj) = (self.c(j, t), self.c_prime(j, t));
            for a in 0..d {
                let ph = self.phases[a + d * j];
                coef[a + 2 * d * j] = ph * cj;
                coef[d + a + 2 * d * j] = ph * pj;
            }
        }
        let rows = 2 * d;
        let mut col = vec![ZERO; rows];
        for b in 0..d {
            for c in 0..d {
                col.fill(ZERO);
                let cb = c + d * b;
                let sd = &self.adjoints[n * cb..n * (cb + 1)];
                for (j, &s) in sd.iter().enumerate() {
                    if s == ZERO {
                        continue;
                    }
                    let e = &coef[rows * j..rows * (j + 1)];
                    for (o, &x) in col.iter_mut().zip(e) {
                        *o += x * s;
                    }
                }
                // Heisenberg phase of (S†)_{cb} at −t.
                let rot = C64::from_polar(1.0, -(self.energies[c] - self.energies[b]) * t);
                let base = d * cb;
                for a in 0..d {
                    out_c[base + a] = col[a] * rot;
                    out_p[base + a] = col[d + a] * rot;
                }
            }
        }
    }
}

/// `out_{ab} = Σ_c A_{ac} T_{acb}`.
fn contract_left(a: &CMat, t: &[C64], out: &mut CMat) {
    let d = a.nrows();
    let a = a.as_slice();
    let o = out.as_mut_slice();
    o.fill(ZERO);
    for b in 0..d {
        let col = &mut o[d * b..d * (b + 1)];
        for c in 0..d {
            let tc = &t[d * c + d * d * b..d * c + d * d * b + d];
            let ac = &a[d * c..d * (c + 1)];
            for ((x, &y), &z) in col.iter_mut().zip(ac).zip(tc) {
                *x += y * z;
            }
        }
    }
}

/// `out_{ab} = Σ_c U_{acb} B_{cb}`.
fn contract_right(u: &[C64], bm: &CMat, out: &mut CMat) {
    let d = bm.nrows();
    let bs = bm.as_slice();
    let o = out.as_mut_slice();
    o.fill(ZERO);
    for b in 0..d {
        let col = &mut o[d * b..d * (b + 1)];
        for c in 0..d {
            let s = bs[c + d * b];
            let uc = &u[d * c + d * d * b..d * c + d * d * b + d];
            for (x, &y) in col.iter_mut().zip(uc) {
                *x += y * s;
            }
        }
    }
}

/// `U_{acb} = T_{bac}`, both laid out `a + d·c + d²·b`.
fn swap_outer(t: &[C64], d: usize, u: &mut [C64]) {
    for b in 0..d {
        for c in 0..d {
            for a in 0..d {
                u[a + d * c + d * d * b] = t[b + d * a + d * d * c];
            }
        }
    }
}

/// Everything the bracket needs at one time node.
#[derive(Clone)]
struct NodeData {
    tj: Vec<C64>,
    uk: Vec<C64>,
    l: CMat,
    r: CMat,
}

impl NodeData {
    fn zeros(d: usize) -> Self {
        Self {
            tj: vec![ZERO; d * d * d],
            uk: vec![ZERO; d * d * d],
            l: CMat::zeros(d, d),
            r: CMat::zeros(d, d),
        }
    }
}

struct Samples {
    c: Vec<C64>,
    p: Vec<C64>,
}

impl Samples {
    fn zeros(d: usize) -> Self {
        Self {
            c: vec![ZERO; d * d * d],
            p: vec![ZERO; d * d * d],
        }
    }
}

/// Right-hand side of the channel equation with its memory integrals.
pub struct ChannelGenerator<'a> {
    set: &'a ChannelSet,
    /// Memory tensors at the start of the current step.
    ti: Vec<C64>,
    tp: Vec<C64>,
    /// Memory tensors at the end of the current step.
    ti_end: Vec<C64>,
    tp_end: Vec<C64>,
    samples: [Samples; 3],
    cached_start: Option<f64>,
    nodes: [NodeData; 3],
    coef: Vec<C64>,
    work_t: Vec<C64>,
    work_p: Vec<C64>,
    work_k: Vec<C64>,
    work_u: Vec<C64>,
    m1: CMat,
    m2: CMat,
    x_buf: CMat,
    adj: CMat,
}

impl<'a> ChannelGenerator<'a> {
    pub fn new(set: &'a ChannelSet) -> Self {
        let d = set.dim;
        let z = || CMat::zeros(d, d);
        let t = || vec![ZERO; d * d * d];
        Self {
            set,
            ti: t(),
            tp: t(),
            ti_end: t(),
            tp_end: t(),
            samples: [Samples::zeros(d), Samples::zeros(d), Samples::zeros(d)],
            cached_start: None,
            nodes: [NodeData::zeros(d), NodeData::zeros(d), NodeData::zeros(d)],
            coef: Vec::new(),
            work_t: t(),
            work_p: t(),
            work_k: t(),
            work_u: t(),
            m1: z(),
            m2: z(),
            x_buf: z(),
            adj: z(),
        }
    }

    fn build_node(&mut self, which: usize, ti: &[C64], tp: &[C64]) {
        let set = self.set;
        let d = set.dim;
        let i = C64::new(0.0, 1.0);
        let node = &mut self.nodes[which];
        for k in 0..d * d * d {
            node.tj[k] = ti[k] + i * tp[k];
            self.work_k[k] = ti[k] - i * tp[k];
        }
        swap_outer(&self.work_k, d, &mut node.uk);
        swap_outer(&node.tj, d, &mut self.work_u);
        // L = V · Σ_c V†_{ac} T^K_{acb}
        contract_left(&set.v_adj, &self.work_k, &mut self.m1);
        matmul_into(&set.v, &self.m1, &mut node.l);
        // R = (Σ_c T^J_{bac} V_{cb}) · V†
        contract_right(&self.work_u, &set.v, &mut self.m1);
        matmul_into(&self.m1, &set.v_adj, &mut node.r);
    }

    /// `out += −½ X(x)` with `X(ρ) = Lρ + ρR − S ρ J − K ρ S` summed over channels.
    fn add_bracket(&mut self, which: usize, x: &CMat, out: &mut CMat) {
        let set = self.set;
        let node = &self.nodes[which];
        let h = C64::new(-0.5, 0.0);
        matmul_acc(h, &node.l, x, out);
        matmul_acc(h, x, &node.r, out);
        // Σ_j S_j x J_j = V · Σ_c (V†x)_{ac} T^J_{acb}
        matmul_into(&set.v_adj, x, &mut self.m1);
        contract_left(&self.m1, &node.tj, &mut self.m2);
        matmul_acc(-h, &set.v, &self.m2, out);
        // Σ_j K_j x S_j = (Σ_c T^K_{bac} (xV)_{cb}) · V†
        matmul_into(x, &set.v, &mut self.m1);
        contract_right(&node.uk, &self.m1, &mut self.m2);
        matmul_acc(-h, &self.m2, &set.v_adj, out);
    }
}

impl Generator for ChannelGenerator<'_> {
    fn dim(&self) -> usize {
        self.set.dim
    }

    fn reset(&mut self) {
        self.ti.fill(ZERO);
        self.tp.fill(ZERO);
        self.cached_start = None;
    }

    fn prepare(&mut self, t: f64, dt: f64) {
        let set = self.set;
        if self.cached_start != Some(t) {
            let s = &mut self.samples[0];
            set.integrand(t, &mut self.coef, &mut s.c, &mut s.p);
        }
        {
            let s = &mut self.samples[1];
            set.integrand(t + 0.5 * dt, &mut self.coef, &mut s.c, &mut s.p);
        }
        {
            let s = &mut self.samples[2];
            set.integrand(t + dt, &mut self.coef, &mut s.c, &mut s.p);
        }
        let n3 = self.ti.len();
        let (w0, w1, w2) = (5.0 * dt / 24.0, 8.0 * dt / 24.0, -dt / 24.0);
        let (s0, s1) = (dt / 6.0, 4.0 * dt / 6.0);
        let [a, b, c] = &self.samples;
        let mut mid_i = std::mem::take(&mut self.work_t);
        let mut mid_p = std::mem::take(&mut self.work_p);
        for k in 0..n3 {
            mid_i[k] = self.ti[k] + a.c[k] * w0 + b.c[k] * w1 + c.c[k] * w2;
            mid_p[k] = self.tp[k] + a.p[k] * w0 + b.p[k] * w1 + c.p[k] * w2;
            self.ti_end[k] = self.ti[k] + (a.c[k] + c.c[k]) * s0 + b.c[k] * s1;
            self.tp_end[k] = self.tp[k] + (a.p[k] + c.p[k]) * s0 + b.p[k] * s1;
        }
        let ti = std::mem::take(&mut self.ti);
        let tp = std::mem::take(&mut self.tp);
        self.build_node(0, &ti, &tp);
        self.build_node(1, &mid_i, &mid_p);
        let (te, pe) = (
            std::mem::take(&mut self.ti_end),
            std::mem::take(&mut self.tp_end),
        );
        self.build_node(2, &te, &pe);
        self.ti = ti;
        self.tp = tp;
        self.ti_end = te;
        self.tp_end = pe;
        self.work_t = mid_i;
        self.work_p = mid_p;
        self.cached_start = Some(t + dt);
    }

    fn apply(&mut self, node: Node, x: &CMat, out: &mut CMat) {
        let which = node as usize;
        super::unitary_part(&self.set.energies, x, out);
        self.add_bracket(which, x, out);
        // The −k half of each pair: X(x†)†.
        self.adj.copy_from(&x.adjoint());
        self.x_buf.fill(ZERO);
        let adj = std::mem::replace(&mut self.adj, CMat::zeros(0, 0));
        let mut buf = std::mem::replace(&mut self.x_buf, CMat::zeros(0, 0));
        self.add_bracket(which, &adj, &mut buf);
        for r in 0..x.nrows() {
            for c in 0..x.ncols() {
                out[(r, c)] += buf[(c, r)].conj();
            }
        }
        self.adj = adj;
        self.x_buf = buf;
    }

    fn finish_step(&mut self) {
        std::mem::swap(&mut self.ti, &mut self.ti_end);
        std::mem::swap(&mut self.tp, &mut self.tp_end);
        let [a, _, c] = &mut self.samples;
        std::mem::swap(a, c);
    }
}

pub fn evolve_channels(
    rho0: &DensityMatrix,
    channels: &ChannelSet,
    ops: &OperatorSet,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if rho0.dim() != ops.dim() {
        return Err(Error::DimensionMismatch(rho0.dim(), ops.dim()));
    }
    if channels.dim() != ops.dim() {
        return Err(Error::DimensionMismatch(channels.dim(), ops.dim()));
    }
    opts.check_step_size(&ops.params)?;
    let mut gen = ChannelGenerator::new(channels);
    evolve(&mut gen, rho0, opts)
}
