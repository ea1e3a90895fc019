//! Master-equation integrators.
//!
//! Three equations share one fixed-step RK4 driver:
//!
//! * [`qbm`]: the dipole-limit Brownian-motion equation with tabulated
//!   time-dependent coefficients;
//! * [`channels`]: the full `e^{ikx}` coupling with per-mode memory integrals;
//! * [`secular`]: the energy-basis equation left after secular averaging,
//!   solved in closed form unless the cross terms are switched on.
//!
//! Every run owns its state and is single-threaded. Concurrency belongs to
//! callers that evolve many states over shared, immutable inputs.

pub mod channels;
pub mod qbm;
pub mod secular;

pub use channels::{evolve_channels, ChannelGenerator, ChannelSet};
pub use qbm::{evolve_qbm, evolve_qbm_with, FSign, QbmGenerator};
pub use secular::{evolve_secular, secular_rates, BReading, CrossTerms, SecularRates};

use crate::error::AbortKind;
use crate::hilbert::{DensityMatrix, SystemParams, ENTROPY_FLOOR};
use crate::linalg;
use crate::output::{fmt_f64, CsvTable};
use crate::{CMat, Error, Result, C64};

/// Largest tolerated `|Tr ρ − 1|` before a run is aborted.
pub const TRACE_ABORT: f64 = 1e-6;
/// Largest tolerated population in the top two Fock levels.
pub const TOP_ABORT: f64 = 1e-6;
/// Coarsest allowed step, in oscillator periods.
pub const MAX_DT_PERIODS: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_max: f64,
    pub dt: f64,
    /// Keep every `record_every`-th step. The final step is always kept.
    pub record_every: usize,
}

impl EvolveOptions {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self {
            t_max,
            dt,
            record_every: 1,
        }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    /// Number of steps; `t_max` must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_max = {} must be non-negative",
                self.t_max
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        let n = (self.t_max / self.dt).round();
        if (n * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(self.dt) {
            return Err(Error::InvalidParameter(format!(
                "t_max = {} is not a multiple of dt = {}",
                self.t_max, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub(crate) fn check_step_size(&self, sys: &SystemParams) -> Result<()> {
        let limit = sys.period() * MAX_DT_PERIODS;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds (2π/Ω)/200 = {limit}",
                self.dt
            )));
        }
        Ok(())
    }

    fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    fn records(&self, step: usize, total: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == total
    }
}

/// Invariant measurements of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub trace_error: f64,
    pub top_occupation: f64,
    /// Von Neumann entropy with eigenvalues below the floor dropped.
    pub entropy: f64,
    pub linear_entropy: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Diagnostics {
    pub fn measure(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let vals = linalg::hermitian_eigenvalues(&linalg::hermitian_part(m)).unwrap_or_default();
        let entropy = vals
            .iter()
            .filter(|&&l| l > ENTROPY_FLOOR)
            .map(|&l| -l * l.ln())
            .sum::<f64>()
            .max(0.0);
        Self {
            trace_error: (rho.trace() - C64::new(1.0, 0.0)).norm(),
            top_occupation: rho.top_occupation(),
            entropy,
            linear_entropy: 1.0 - rho.purity(),
            hermiticity_error: rho.hermiticity_error(),
            min_eigenvalue: vals.first().copied().unwrap_or(0.0),
        }
    }
}

/// Snapshots of an evolution with their diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            diagnostics: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, t: f64, rho: DensityMatrix) {
        self.diagnostics.push(Diagnostics::measure(&rho));
        self.times.push(t);
        self.states.push(rho);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// `ρ_nm` at every snapshot.
    pub fn element(&self, n: usize, m: usize) -> Vec<C64> {
        self.states.iter().map(|s| s.get(n, m)).collect()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.entropy).collect()
    }

    pub fn linear_entropies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.linear_entropy).collect()
    }

    /// Largest `|Tr ρ(t) − 1| / t` over the snapshots with `t > 0`.
    pub fn trace_drift_rate(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.diagnostics)
            .filter(|(&t, _)| t > 0.0)
            .map(|(&t, d)| d.trace_error / t)
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.hermiticity_error)
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest change of any population relative to the first snapshot.
    pub fn max_population_change(&self) -> f64 {
        let p0 = self.states[0].populations();
        self.states
            .iter()
            .flat_map(|s| {
                s.populations()
                    .into_iter()
                    .zip(p0.clone())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self, elements: &[(usize, usize)]) -> CsvTable {
        let mut header = vec!["t".to_string()];
        for (n, m) in elements {
            header.push(format!("re_rho_{n}_{m}"));
            header.push(format!("im_rho_{n}_{m}"));
        }
        for h in ["entropy", "linear_entropy", "trace_error", "top_occupation"] {
            header.push(h.to_string());
        }
        let mut table = CsvTable::with_header(header);
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row = vec![fmt_f64(*t)];
            for &(n, m) in elements {
                let z = s.get(n, m);
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            }
            row.push(fmt_f64(d.entropy));
            row.push(fmt_f64(d.linear_entropy));
            row.push(fmt_f64(d.trace_error));
            row.push(fmt_f64(d.top_occupation));
            table.push(row);
        }
        table
    }
}

/// Where inside a step the right-hand side is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Start,
    Mid,
    End,
}

/// A linear, time-dependent right-hand side `dX/dt = L(t)[X]`.
///
/// The driver calls [`Generator::prepare`] once per step before evaluating
/// at the three RK4 nodes, and [`Generator::finish_step`] after it. State
/// carried between steps (memory integrals) must be cleared by `reset`.
pub trait Generator {
    fn dim(&self) -> usize;
    fn reset(&mut self);
    fn prepare(&mut self, t: f64, dt: f64);
    fn apply(&mut self, node: Node, x: &CMat, out: &mut CMat);
    fn finish_step(&mut self);
}

struct Rk4Scratch {
    k1: CMat,
    k2: CMat,
    k3: CMat,
    k4: CMat,
    tmp: CMat,
}

impl Rk4Scratch {
    fn new(d: usize) -> Self {
        let z = || CMat::zeros(d, d);
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
        }
    }
}

fn stage(tmp: &mut CMat, x: &CMat, h: f64, k: &CMat) {
    for ((t, &a), &b) in tmp.iter_mut().zip(x.iter()).zip(k.iter()) {
        *t = a + b * h;
    }
}

fn rk4_step<G: Generator>(gen: &mut G, t: f64, dt: f64, x: &mut CMat, s: &mut Rk4Scratch) {
    gen.prepare(t, dt);
    gen.apply(Node::Start, x, &mut s.k1);
    stage(&mut s.tmp, x, 0.5 * dt, &s.k1);
    gen.apply(Node::Mid, &s.tmp, &mut s.k2);
    stage(&mut s.tmp, x, 0.5 * dt, &s.k2);
    gen.apply(Node::Mid, &s.tmp, &mut s.k3);
    stage(&mut s.tmp, x, dt, &s.k3);
    gen.apply(Node::End, &s.tmp, &mut s.k4);
    let w = dt / 6.0;
    for i in 0..x.len() {
        x[i] += (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]) * w;
    }
    gen.finish_step();
}

/// Integrate a density matrix: Hermitian symmetrization after every step,
/// no trace renormalization, abort on trace drift or Fock-space leakage.
pub fn evolve<G: Generator>(
    gen: &mut G,
    rho0: &DensityMatrix,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch(rho0.dim(), gen.dim()));
    }
    let steps = opts.steps()?;
    gen.reset();
    let mut traj = Trajectory::with_capacity(steps / opts.record_every + 2);
    let mut x = rho0.matrix().clone();
    let mut scratch = Rk4Scratch::new(gen.dim());
    traj.push(0.0, rho0.clone());
    for step in 0..steps {
        let t = opts.time(step);
        rk4_step(gen, t, opts.dt, &mut x, &mut scratch);
        x = linalg::hermitian_part(&x);
        let t_next = opts.time(step + 1);
        check_abort(&x, t_next)?;
        if opts.records(step + 1, steps) {
            traj.push(t_next, DensityMatrix::from_evolved(x.clone()));
        }
    }
    Ok(traj)
}

fn check_abort(x: &CMat, t: f64) -> Result<()> {
    let drift = (linalg::trace(x) - C64::new(1.0, 0.0)).norm();
    if !(drift <= TRACE_ABORT) {
        return Err(Error::Aborted {
            kind: AbortKind::TraceDrift,
            time: t,
            reason: format!("trace drift {drift:.3e} exceeds {TRACE_ABORT:e}; reduce dt"),
        });
    }
    let d = x.nrows();
    let top: f64 = (d.saturating_sub(2)..d).map(|i| x[(i, i)].re).sum();
    if !(top <= TOP_ABORT) {
        return Err(Error::Aborted {
            kind: AbortKind::Truncation,
            time: t,
            reason: format!(
                "population {top:.3e} in the top two Fock levels exceeds {TOP_ABORT:e}; increase fock_dim"
            ),
        });
    }
    Ok(())
}

/// Integrate an arbitrary operator with no symmetrization and no checks.
/// Returns the recorded snapshots, starting with `x0`.
pub fn propagate<G: Generator>(gen: &mut G, x0: &CMat, opts: &EvolveOptions) -> Result<Vec<CMat>> {
    if x0.nrows() != gen.dim() || x0.ncols() != gen.dim() {
        return Err(Error::DimensionMismatch(x0.nrows(), gen.dim()));
    }
    let steps = opts.steps()?;
    gen.reset();
    let mut out = vec![x0.clone()];
    let mut x = x0.clone();
    let mut scratch = Rk4Scratch::new(gen.dim());
    for step in 0..steps {
        rk4_step(gen, opts.time(step), opts.dt, &mut x, &mut scratch);
        if opts.records(step + 1, steps) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// `out = −i[H, x]` for diagonal `H` given by its energies.
pub(crate) fn unitary_part(energies: &[f64], x: &CMat, out: &mut CMat) {
    let d = energies.len();
    for c in 0..d {
        for r in 0..d {
            out[(r, c)] = C64::new(0.0, -(energies[r] - energies[c])) * x[(r, c)];
        }
    }
}
