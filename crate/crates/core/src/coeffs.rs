//! Time-dependent coefficients of the Brownian-motion master equation.
//!
//! ```text
//! Ω̃²(t) = −(2ħ/m) ∫₀ᵗ cos(Ωt′) F_R(t′) dt′
//! γ(t)  = −(ħ/2mΩ) ∫₀ᵗ sin(Ωt′) F_R(t′) dt′
//! D(t)  =          ∫₀ᵗ cos(Ωt′) F_H(t′) dt′
//! f(t)  =  (1/mΩ)  ∫₀ᵗ sin(Ωt′) F_H(t′) dt′
//! ```
//!
//! each multiplied by `e²/ħ²`. The running integrals use cumulative Simpson
//! quadrature on the (uniform) kernel grid.

use crate::bath::{KernelSource, KernelTable, ADIABATIC_FLATNESS};
use crate::hilbert::{SystemParams, HBAR};
use crate::output::{fmt_f64, CsvTable};
use crate::quadrature::cumulative_simpson;
use crate::{Error, Result};

/// Coarsest allowed grid spacing, in oscillator periods.
pub const MAX_SPACING_PERIODS: f64 = 1.0 / 64.0;

/// Coefficients at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coefficients {
    pub omega_ren_sq: f64,
    pub gamma: f64,
    pub diffusion: f64,
    pub anomalous: f64,
}

#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub times: Vec<f64>,
    pub omega_ren_sq: Vec<f64>,
    pub gamma: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub anomalous: Vec<f64>,
    /// Hash of the bath source and system parameters the table came from.
    pub provenance: u64,
    spacing: f64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn provenance(source: &KernelSource, sys: &SystemParams, e2: f64) -> u64 {
    fnv1a(format!("{source:?}|{sys:?}|{e2:e}").as_bytes())
}

/// Uniform spacing of `times`, or an error naming the offending interval.
pub(crate) fn uniform_spacing(times: &[f64]) -> Result<f64> {
    let h = times[1] - times[0];
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1e-300) * (i as f64 + 1.0).max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel grid must be uniform (interval {i} has width {}, first has {h})",
                w[1] - w[0]
            )));
        }
    }
    Ok(h)
}

fn check_grid(kernels: &KernelTable, sys: &SystemParams) -> Result<f64> {
    sys.validate()?;
    let h = uniform_spacing(&kernels.times)?;
    let limit = sys.period() * MAX_SPACING_PERIODS;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "kernel grid spacing {h} exceeds (2π/Ω)/64 = {limit}"
        )));
    }
    Ok(h)
}

pub fn build_coefficients(
    kernels: &KernelTable,
    sys: &SystemParams,
    e2: f64,
) -> Result<CoefficientTable> {
    let h = check_grid(kernels, sys)?;
    let SystemParams {
        mass, frequency, ..
    } = *sys;
    let pref = e2 / (HBAR * HBAR);
    let n = kernels.times.len();
    let mut cos_r = Vec::with_capacity(n);
    let mut sin_r = Vec::with_capacity(n);
    let mut cos_h = Vec::with_capacity(n);
    let mut sin_h = Vec::with_capacity(n);
    for i in 0..n {
        let (s, c) = (frequency * kernels.times[i]).sin_cos();
        cos_r.push(c * kernels.f_r[i]);
        sin_r.push(s * kernels.f_r[i]);
        cos_h.push(c * kernels.f_h[i]);
        sin_h.push(s * kernels.f_h[i]);
    }
    let scale = |v: Vec<f64>, k: f64| -> Vec<f64> { v.into_iter().map(|x| k * x).collect() };
    let table = CoefficientTable {
        times: kernels.times.clone(),
        omega_ren_sq: scale(cumulative_simpson(&cos_r, h), -2.0 * HBAR / mass * pref),
        gamma: scale(
            cumulative_simpson(&sin_r, h),
            -HBAR / (2.0 * mass * frequency) * pref,
        ),
        diffusion: scale(cumulative_simpson(&cos_h, h), pref),
        anomalous: scale(cumulative_simpson(&sin_h, h), pref / (mass * frequency)),
        provenance: provenance(&kernels.source, sys, e2),
        spacing: h,
    };
    if !table.is_finite() {
        return Err(Error::InvalidParameter("non-finite coefficient".into()));
    }
    Ok(table)
}

/// The frozen-kernel limit: `F_R ≈ 0` and `F_H ≈ F_H(0)` pulled out of the
/// integrals. Rejects kernels that vary by more than 1% over one period.
pub fn adiabatic_closed_form(
    kernels: &KernelTable,
    sys: &SystemParams,
    e2: f64,
) -> Result<CoefficientTable> {
    let h = check_grid(kernels, sys)?;
    let horizon = sys.period().min(kernels.t_max());
    let flat = kernels.flatness(horizon);
    if !(flat < ADIABATIC_FLATNESS) {
        return Err(Error::InvalidParameter(format!(
            "kernels are not adiabatic: F_H varies by {flat:.3e} over one period"
        )));
    }
    let SystemParams {
        mass, frequency, ..
    } = *sys;
    let f0 = kernels.f_h[0] * e2 / (HBAR * HBAR);
    let n = kernels.times.len();
    Ok(CoefficientTable {
        times: kernels.times.clone(),
        omega_ren_sq: vec![0.0; n],
        gamma: vec![0.0; n],
        diffusion: kernels
            .times
            .iter()
            .map(|&t| f0 * (frequency * t).sin() / frequency)
            .collect(),
        anomalous: kernels
            .times
            .iter()
            .map(|&t| f0 * (1.0 - (frequency * t).cos()) / (mass * frequency * frequency))
            .collect(),
        provenance: provenance(&kernels.source, sys, e2),
        spacing: h,
    })
}

impl CoefficientTable {
    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn is_finite(&self) -> bool {
        [
            &self.omega_ren_sq,
            &self.gamma,
            &self.diffusion,
            &self.anomalous,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn sample(&self, i: usize) -> Coefficients {
        Coefficients {
            omega_ren_sq: self.omega_ren_sq[i],
            gamma: self.gamma[i],
            diffusion: self.diffusion[i],
            anomalous: self.anomalous[i],
        }
    }

    /// Linear interpolation; `t` is clamped to the table.
    pub fn at(&self, t: f64) -> Coefficients {
        let n = self.times.len();
        if t <= 0.0 {
            return self.sample(0);
        }
        let pos = t / self.spacing;
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.sample(n - 1);
        }
        let frac = pos - i as f64;
        if frac == 0.0 {
            return self.sample(i);
        }
        let lerp = |v: &[f64]| v[i] + frac * (v[i + 1] - v[i]);
        Coefficients {
            omega_ren_sq: lerp(&self.omega_ren_sq),
            gamma: lerp(&self.gamma),
            diffusion: lerp(&self.diffusion),
            anomalous: lerp(&self.anomalous),
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "omega_ren_sq", "gamma", "D", "f"]);
        for i in 0..self.times.len() {
            t.push(vec![
                fmt_f64(self.times[i]),
                fmt_f64(self.omega_ren_sq[i]),
                fmt_f64(self.gamma[i]),
                fmt_f64(self.diffusion[i]),
                fmt_f64(self.anomalous[i]),
            ]);
        }
        t
    }
}
