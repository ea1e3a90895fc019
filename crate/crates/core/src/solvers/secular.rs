//! Energy-basis equation after secular averaging.
//!
//! ```text
//! dρ_nm/dt = −iω_nm ρ_nm − γ²_nm t ρ_nm − t Σ_{l≠n,m} (A_lnm ρ_lm + B_lnm ρ_··)
//! ```
//!
//! With frozen kernels the memory integral grows as `I_j(t) ≈ c̄_j t·diag(S_j†)`
//! plus bounded oscillating parts. Keeping only the growing part gives
//! `γ²_nm = Σ_j c̄_j |S_j^{(nn)} − S_j^{(mm)}|²`, so off-diagonal elements
//! decay as `exp(−γ²_nm t²/2)`. The same growing part, taken before
//! averaging, yields the cross tensors `A` and `B`.

use super::{evolve, EvolveOptions, Generator, Node, Trajectory};
use crate::hilbert::{DensityMatrix, OperatorSet};
use crate::output::{fmt_f64, CsvTable};
use crate::solvers::ChannelSet;
use crate::{CMat, Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smallest level spacing accepted as nondegenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Which density-matrix element the `B` cross term multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BReading {
    /// `ρ_nl`, the placement produced by expanding the channel bracket.
    #[default]
    Nl,
    Ln,
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTerms {
    #[default]
    Off,
    On(BReading),
}

#[derive(Debug, Clone)]
pub struct SecularRates {
    /// `γ²_nm`, symmetric with zero diagonal.
    pub gamma_sq: DMatrix<f64>,
    /// `A_lnm` laid out `l + d·n + d²·m`.
    pub cross_a: Vec<C64>,
    /// `B_lnm` laid out `l + d·n + d²·m`.
    pub cross_b: Vec<C64>,
    /// `2π / min |ω_nm|`.
    pub averaging_period: f64,
    pub energies: Vec<f64>,
}

/// Reject spectra with two levels closer than [`DEGENERACY_TOL`].
pub fn check_nondegenerate(energies: &[f64]) -> Result<()> {
    let mut pairs = Vec::new();
    for n in 0..energies.len() {
        for m in n + 1..energies.len() {
            if (energies[n] - energies[m]).abs() <= DEGENERACY_TOL {
                pairs.push(format!("({n},{m})"));
            }
        }
    }
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "coincident levels {}",
            pairs.join(" ")
        )))
    }
}

/// `γ²_nm = Σ_j c̄_j |s_j[n] − s_j[m]|²` from channel diagonals `s_j`.
pub fn rates_from_diagonals(cbar: &[f64], diagonals: &[Vec<C64>]) -> DMatrix<f64> {
    let d = diagonals.first().map_or(0, Vec::len);
    DMatrix::from_fn(d, d, |n, m| {
        cbar.iter()
            .zip(diagonals)
            .map(|(c, s)| c * (s[n] - s[m]).norm_sqr())
            .sum()
    })
}

pub fn secular_rates(channels: &ChannelSet, ops: &OperatorSet) -> Result<SecularRates> {
    if channels.dim() != ops.dim() {
        return Err(Error::DimensionMismatch(channels.dim(), ops.dim()));
    }
    check_nondegenerate(&ops.energies)?;
    let d = ops.dim();
    let cbar: Vec<f64> = (0..channels.len()).map(|j| channels.c(j, 0.0)).collect();
    let diagonals: Vec<Vec<C64>> = (0..channels.len())
        .map(|j| (0..d).map(|n| channels.operator(j)[(n, n)]).collect())
        .collect();
    let gamma_sq = rates_from_diagonals(&cbar, &diagonals);

    let mut cross_a = vec![C64::new(0.0, 0.0); d * d * d];
    let mut cross_b = vec![C64::new(0.0, 0.0); d * d * d];
    for (j, &c) in cbar.iter().enumerate() {
        let s = channels.operator(j);
        let diag = &diagonals[j];
        let half = 0.5 * c;
        for m in 0..d {
            for n in 0..d {
                for l in 0..d {
                    let idx = l + d * n + d * d * m;
                    cross_a[idx] += (s[(n, l)] * (diag[l] - diag[m]).conj()
                        + s[(l, n)].conj() * (diag[l] - diag[m]))
                        * half;
                    cross_b[idx] -= ((diag[n] - diag[l]).conj() * s[(l, m)]
                        + (diag[n] - diag[l]) * s[(m, l)].conj())
                        * half;
                }
            }
        }
    }

    let min_gap = (0..d)
        .flat_map(|n| (0..d).filter(move |&m| m != n).map(move |m| (n, m)))
        .map(|(n, m)| ops.bohr(n, m).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(SecularRates {
        gamma_sq,
        cross_a,
        cross_b,
        averaging_period: 2.0 * PI / min_gap,
        energies: ops.energies.clone(),
    })
}

impl SecularRates {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn a(&self, l: usize, n: usize, m: usize) -> C64 {
        let d = self.dim();
        self.cross_a[l + d * n + d * d * m]
    }

    pub fn b(&self, l: usize, n: usize, m: usize) -> C64 {
        let d = self.dim();
        self.cross_b[l + d * n + d * d * m]
    }

    pub fn to_csv(&self) -> CsvTable {
        let d = self.dim();
        let mut header = vec!["n".to_string()];
        header.extend((0..d).map(|m| m.to_string()));
        let mut t = CsvTable::with_header(header);
        for n in 0..d {
            let mut row = vec![n.to_string()];
            row.extend((0..d).map(|m| fmt_f64(self.gamma_sq[(n, m)])));
            t.push(row);
        }
        t
    }
}

struct CrossGenerator<'a> {
    rates: &'a SecularRates,
    reading: BReading,
    times: [f64; 3],
}

impl Generator for CrossGenerator<'_> {
    fn dim(&self) -> usize {
        self.rates.dim()
    }

    fn reset(&mut self) {}

    fn prepare(&mut self, t: f64, dt: f64) {
        self.times = [t, t + 0.5 * dt, t + dt];
    }

    fn apply(&mut self, node: Node, x: &CMat, out: &mut CMat) {
        let t = self.times[node as usize];
        let r = self.rates;
        let d = r.dim();
        for m in 0..d {
            for n in 0..d {
                let w = r.energies[n] - r.energies[m];
                let mut v = x[(n, m)] * C64::new(-t * r.gamma_sq[(n, m)], -w);
                for l in (0..d).filter(|&l| l != n && l != m) {
                    let other = match self.reading {
                        BReading::Nl => x[(n, l)],
                        BReading::Ln => x[(l, n)],
                        BReading::Ml => x[(m, l)],
                    };
                    v -= (r.a(l, n, m) * x[(l, m)] + r.b(l, n, m) * other) * t;
                }
                out[(n, m)] = v;
            }
        }
    }

    fn finish_step(&mut self) {}
}

pub fn evolve_secular(
    rho0: &DensityMatrix,
    rates: &SecularRates,
    ops: &OperatorSet,
    opts: &EvolveOptions,
    cross: CrossTerms,
) -> Result<Trajectory> {
    if rho0.dim() != rates.dim() {
        return Err(Error::DimensionMismatch(rho0.dim(), rates.dim()));
    }
    if ops.dim() != rates.dim() {
        return Err(Error::DimensionMismatch(ops.dim(), rates.dim()));
    }
    match cross {
        CrossTerms::On(reading) => {
            opts.check_step_size(&ops.params)?;
            let mut gen = CrossGenerator {
                rates,
                reading,
                times: [0.0; 3],
            };
            evolve(&mut gen, rho0, opts)
        }
        CrossTerms::Off => {
            let steps = opts.steps()?;
            let d = rates.dim();
            let mut traj = Trajectory::with_capacity(steps / opts.record_every + 2);
            traj.push(0.0, rho0.clone());
            let x0 = rho0.matrix();
            for step in 1..=steps {
                if !opts.records(step, steps) {
                    continue;
                }
                let t = opts.time(step);
                let x = CMat::from_fn(d, d, |n, m| {
                    if n == m {
                        return x0[(n, n)];
                    }
                    let w = rates.energies[n] - rates.energies[m];
                    let decay = (-0.5 * rates.gamma_sq[(n, m)] * t * t).exp();
                    x0[(n, m)] * C64::from_polar(decay, -w * t)
                });
                traj.push(t, DensityMatrix::from_evolved(x));
            }
            Ok(traj)
        }
    }
}
