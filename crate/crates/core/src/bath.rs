//! Spectral models of a free scalar field environment.
//!
//! For a field mode `k` with dispersion `ω_k`, thermal occupation `N_k` and
//! window weight `|Ŵ(k)|²`,
//!
//! ```text
//! G_R(k, t) = |Ŵ(k)|² sin(ω_k t) / 2ω_k
//! G_H(k, t) = |Ŵ(k)|² cos(ω_k t) (1 + 2N_k) / 2ω_k
//! F_{R,H}(t) = ∫ d^N k  k² G_{R,H}(k, t) / (N (2π)^{N/2})
//! ```
//!
//! The radial integral runs over `(0, k_max]` with Gauss–Legendre nodes; the
//! angular measure and the `1/(N (2π)^{N/2})` normalisation are folded into
//! the node weights, so `F(t) = Σ_j w_j k_j² G(k_j, t)`. The coupling `e²` is
//! not part of any kernel: it is applied by the coefficient and channel layers.

use crate::output::{fmt_f64, CsvTable};
use crate::quadrature::gauss_legendre_on;
use crate::{par, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative change in `F_H(0)` tolerated when the node count is doubled.
pub const QUADRATURE_SELF_CHECK: f64 = 1e-6;

/// Largest relative excursion of `F_H` over one period for a bath to count
/// as adiabatic.
pub const ADIABATIC_FLATNESS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Exponential,
    Gaussian,
    Sharp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathModel {
    pub spatial_dim: usize,
    /// `e²`.
    pub coupling_sq: f64,
    pub temperature: f64,
    pub field_mass: f64,
    pub window: WindowKind,
    /// Window scale `Λ = 1/R`.
    pub cutoff: f64,
    pub k_max: f64,
    pub n_k: usize,
}

impl BathModel {
    /// Massless, zero-temperature, exponential-window bath in one dimension
    /// with `e² = 1`, `k_max = 8Λ` and 64 nodes.
    pub fn new(cutoff: f64) -> Self {
        Self {
            spatial_dim: 1,
            coupling_sq: 1.0,
            temperature: 0.0,
            field_mass: 0.0,
            window: WindowKind::Exponential,
            cutoff,
            k_max: 8.0 * cutoff,
            n_k: 64,
        }
    }

    pub fn with_coupling_sq(mut self, e2: f64) -> Self {
        self.coupling_sq = e2;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_nodes(mut self, n_k: usize) -> Self {
        self.n_k = n_k;
        self
    }

    pub fn with_k_max(mut self, k_max: f64) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn with_field_mass(mut self, m: f64) -> Self {
        self.field_mass = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(1..=3).contains(&self.spatial_dim) {
            return bad(format!(
                "spatial_dim must be 1, 2 or 3, got {}",
                self.spatial_dim
            ));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return bad(format!("cutoff must be > 0, got {}", self.cutoff));
        }
        if !(self.k_max >= 4.0 * self.cutoff) || !self.k_max.is_finite() {
            return bad(format!(
                "k_max must be >= 4 * cutoff ({}), got {}",
                4.0 * self.cutoff,
                self.k_max
            ));
        }
        if self.n_k < 64 {
            return bad(format!("n_k must be >= 64, got {}", self.n_k));
        }
        if !(self.coupling_sq >= 0.0) || !self.coupling_sq.is_finite() {
            return bad(format!(
                "coupling_sq must be >= 0, got {}",
                self.coupling_sq
            ));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return bad(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.field_mass >= 0.0) || !self.field_mass.is_finite() {
            return bad(format!("field_mass must be >= 0, got {}", self.field_mass));
        }
        Ok(())
    }

    /// `ω_k = sqrt(k² + m_φ²)`.
    pub fn dispersion(&self, k: f64) -> f64 {
        (k * k + self.field_mass * self.field_mass).sqrt()
    }

    /// Bose–Einstein occupation of mode `k`.
    pub fn occupation(&self, k: f64) -> f64 {
        occupation(self.dispersion(k), self.temperature)
    }

    /// Window amplitude `Ŵ(k)`, normalised to 1 at `k = 0`.
    pub fn window(&self, k: f64) -> f64 {
        let k = k.abs();
        match self.window {
            WindowKind::Exponential => (-k / self.cutoff).exp(),
            WindowKind::Gaussian => (-k * k / (2.0 * self.cutoff * self.cutoff)).exp(),
            WindowKind::Sharp => {
                if k <= self.cutoff {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Weight entering the kernels, `|Ŵ(k)|²`.
    pub fn window_weight(&self, k: f64) -> f64 {
        let w = self.window(k);
        w * w
    }

    /// Retarded kernel `G_R(k, t)`.
    pub fn g_r(&self, k: f64, t: f64) -> f64 {
        let w = self.dispersion(k);
        self.window_weight(k) * (w * t).sin() / (2.0 * w)
    }

    /// Symmetric kernel `G_H(k, t)`.
    pub fn g_h(&self, k: f64, t: f64) -> f64 {
        let w = self.dispersion(k);
        self.window_weight(k) * (w * t).cos() * (1.0 + 2.0 * self.occupation(k)) / (2.0 * w)
    }

    /// Upper end of the radial integration. A sharp window vanishes beyond
    /// the cutoff, so the rule stops there to keep it spectrally accurate.
    fn radial_extent(&self) -> f64 {
        match self.window {
            WindowKind::Sharp => self.k_max.min(self.cutoff),
            _ => self.k_max,
        }
    }

    /// Radial nodes and measure-folded weights for `n` nodes.
    pub fn nodes_with(&self, n: usize) -> KernelNodes {
        let (k, w) = gauss_legendre_on(n, 0.0, self.radial_extent());
        let dim = self.spatial_dim as f64;
        let norm = 1.0 / (dim * (2.0 * PI).powf(dim / 2.0));
        let weights = k
            .iter()
            .zip(&w)
            .map(|(&k, &w)| w * surface_factor(self.spatial_dim, k) * norm)
            .collect();
        let omega = k.iter().map(|&k| self.dispersion(k)).collect();
        let window_weight = k.iter().map(|&k| self.window_weight(k)).collect();
        let occupation = k.iter().map(|&k| self.occupation(k)).collect();
        KernelNodes {
            k,
            weights,
            omega,
            window_weight,
            occupation,
        }
    }

    pub fn nodes(&self) -> KernelNodes {
        self.nodes_with(self.n_k)
    }
}

/// Surface measure of the `N`-dimensional shell at radius `k`.
pub fn surface_factor(dim: usize, k: f64) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI * k,
        3 => 4.0 * PI * k * k,
        _ => panic!("unsupported spatial dimension {dim}"),
    }
}

/// Bose–Einstein occupation `1/(e^{ω/T} − 1)`, zero at `T = 0`.
pub fn occupation(omega: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        return 0.0;
    }
    let x = omega / temperature;
    if x < 1e-8 {
        1.0 / x - 0.5
    } else {
        1.0 / x.exp_m1()
    }
}

/// Quadrature nodes of a bath with the per-node quantities the kernels need.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNodes {
    pub k: Vec<f64>,
    /// Quadrature weight × surface factor × `1/(N (2π)^{N/2})`.
    pub weights: Vec<f64>,
    pub omega: Vec<f64>,
    pub window_weight: Vec<f64>,
    pub occupation: Vec<f64>,
}

impl KernelNodes {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn g_r(&self, j: usize, t: f64) -> f64 {
        let w = self.omega[j];
        self.window_weight[j] * (w * t).sin() / (2.0 * w)
    }

    pub fn g_h(&self, j: usize, t: f64) -> f64 {
        let w = self.omega[j];
        self.window_weight[j] * (w * t).cos() * (1.0 + 2.0 * self.occupation[j]) / (2.0 * w)
    }

    /// `F_R(t)` for any real `t`.
    pub fn f_r(&self, t: f64) -> f64 {
        (0..self.len())
            .map(|j| self.weights[j] * self.k[j] * self.k[j] * self.g_r(j, t))
            .sum()
    }

    /// `F_H(t)` for any real `t`.
    pub fn f_h(&self, t: f64) -> f64 {
        (0..self.len())
            .map(|j| self.weights[j] * self.k[j] * self.k[j] * self.g_h(j, t))
            .sum()
    }
}

/// A single bath oscillator bilinearly coupled to the system position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMode {
    pub omega: f64,
    /// Squared coupling per unit `e²`.
    pub coupling_sq: f64,
    pub occupation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSource {
    Continuum(BathModel),
    Discrete(Vec<DiscreteMode>),
}

/// `F_R`, `F_H` sampled on a caller-supplied time grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub source: KernelSource,
    pub times: Vec<f64>,
    pub f_r: Vec<f64>,
    pub f_h: Vec<f64>,
    /// Node set for continuum baths; empty for discrete modes.
    pub nodes: Option<KernelNodes>,
}

pub(crate) fn validate_time_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter(
            "time grid needs at least two points".into(),
        ));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time grid must start at 0, starts at {}",
            times[0]
        )));
    }
    if let Some(w) = times
        .windows(2)
        .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "time grid must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Uniform grid `0, h, 2h, …` up to and including `t_max` (rounded to the
/// nearest whole number of steps).
pub fn uniform_grid(t_max: f64, h: f64) -> Vec<f64> {
    let n = (t_max / h).round() as usize;
    (0..=n).map(|i| i as f64 * h).collect()
}

pub fn build_kernel_table(model: &BathModel, times: &[f64]) -> Result<KernelTable> {
    model.validate()?;
    validate_time_grid(times)?;

    let nodes = model.nodes();
    let doubled = model.nodes_with(2 * model.n_k);
    let f0 = nodes.f_h(0.0);
    let f0_fine = doubled.f_h(0.0);
    let rel = (f0 - f0_fine).abs() / f0_fine.abs().max(f64::MIN_POSITIVE);
    if !(rel < QUADRATURE_SELF_CHECK) {
        return Err(Error::Quadrature(format!(
            "F_H(0) changes by {rel:.3e} (relative) when n_k doubles from {}",
            model.n_k
        )));
    }

    let pairs = par::map(times, |&t| (nodes.f_r(t), nodes.f_h(t)));
    let (f_r, f_h) = pairs.into_iter().unzip();
    Ok(KernelTable {
        source: KernelSource::Continuum(model.clone()),
        times: times.to_vec(),
        f_r,
        f_h,
        nodes: Some(nodes),
    })
}

impl KernelTable {
    /// Kernels of a finite set of oscillators: the integral over `k` becomes
    /// a sum over the given modes.
    pub fn from_discrete_modes(modes: &[DiscreteMode], times: &[f64]) -> Result<Self> {
        validate_time_grid(times)?;
        if modes.iter().any(|m| !(m.omega > 0.0)) {
            return Err(Error::InvalidParameter(
                "mode frequencies must be > 0".into(),
            ));
        }
        let f_r = times
            .iter()
            .map(|&t| {
                modes
                    .iter()
                    .map(|m| m.coupling_sq * (m.omega * t).sin())
                    .sum()
            })
            .collect();
        let f_h = times
            .iter()
            .map(|&t| {
                modes
                    .iter()
                    .map(|m| m.coupling_sq * (1.0 + 2.0 * m.occupation) * (m.omega * t).cos())
                    .sum()
            })
            .collect();
        Ok(Self {
            source: KernelSource::Discrete(modes.to_vec()),
            times: times.to_vec(),
            f_r,
            f_h,
            nodes: None,
        })
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Largest `|F_H(t) − F_H(0)| / F_H(0)` for `t <= horizon`.
    pub fn flatness(&self, horizon: f64) -> f64 {
        let f0 = self.f_h[0];
        self.times
            .iter()
            .zip(&self.f_h)
            .filter(|(&t, _)| t <= horizon * (1.0 + 1e-12))
            .map(|(_, &f)| (f - f0).abs() / f0.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut table = CsvTable::new(&["t", "F_R", "F_H"]);
        for i in 0..self.times.len() {
            table.push(vec![
                fmt_f64(self.times[i]),
                fmt_f64(self.f_r[i]),
                fmt_f64(self.f_h[i]),
            ]);
        }
        table
    }
}
