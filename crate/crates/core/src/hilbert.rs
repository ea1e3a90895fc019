//! Truncated Fock space of a single harmonic oscillator.
//!
//! Operators are represented in the number basis, which is also the energy
//! eigenbasis of the oscillator. Truncation at `fock_dim` levels corrupts the
//! canonical commutator in the last row and column; every evolution therefore
//! monitors the population of the top two levels.

use crate::linalg::{self, hermitian_eigen, hermiticity_error, max_abs};
use crate::{CMat, CVec, Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Reduced Planck constant; fixed.
pub const HBAR: f64 = 1.0;

/// Eigenvalues at or below this are treated as exact zeros in `λ log λ`.
pub const ENTROPY_FLOOR: f64 = 1e-14;

/// Smallest eigenvalue tolerated before a state is declared corrupted.
pub const POSITIVITY_TOL: f64 = -1e-9;

/// Tolerance on trace and Hermiticity for freshly constructed states.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// Largest Poisson/Fock tail weight allowed beyond the truncation.
pub const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub mass: f64,
    pub frequency: f64,
    pub fock_dim: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            frequency: 1.0,
            fock_dim: 16,
        }
    }
}

impl SystemParams {
    pub fn with_dim(fock_dim: usize) -> Self {
        Self {
            fock_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mass must be > 0, got {}",
                self.mass
            )));
        }
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "frequency must be > 0, got {}",
                self.frequency
            )));
        }
        if self.fock_dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "fock_dim must be >= 2, got {}",
                self.fock_dim
            )));
        }
        Ok(())
    }

    /// Oscillator period `2π/Ω`, the largest Bohr period.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.frequency
    }

    /// Zero-point position spread `sqrt(ħ / 2mΩ)`.
    pub fn x_char(&self) -> f64 {
        (HBAR / (2.0 * self.mass * self.frequency)).sqrt()
    }
}

/// Ladder, position, momentum and Hamiltonian matrices in the number basis.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub params: SystemParams,
    pub a: CMat,
    pub a_dag: CMat,
    pub x: CMat,
    pub p: CMat,
    pub h: CMat,
    /// `E_n = ħΩ(n + 1/2)`.
    pub energies: Vec<f64>,
}

impl OperatorSet {
    pub fn dim(&self) -> usize {
        self.params.fock_dim
    }

    /// Bohr frequency `ω_nm = (E_n − E_m)/ħ`.
    pub fn bohr(&self, n: usize, m: usize) -> f64 {
        (self.energies[n] - self.energies[m]) / HBAR
    }

    pub fn number_operator(&self) -> CMat {
        linalg::mul(&self.a_dag, &self.a)
    }
}

/// Truncated annihilation operator.
pub(crate) fn lowering(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn build_operators(params: SystemParams) -> Result<OperatorSet> {
    params.validate()?;
    let d = params.fock_dim;
    let SystemParams {
        mass, frequency, ..
    } = params;
    let a = lowering(d);
    let a_dag = a.adjoint();
    let xs = (HBAR / (2.0 * mass * frequency)).sqrt();
    let ps = (HBAR * mass * frequency / 2.0).sqrt();
    let x = (&a + &a_dag) * C64::new(xs, 0.0);
    let p = (&a_dag - &a) * C64::new(0.0, ps);
    let energies: Vec<f64> = (0..d)
        .map(|n| HBAR * frequency * (n as f64 + 0.5))
        .collect();
    let h = CMat::from_fn(d, d, |i, j| {
        if i == j {
            C64::new(energies[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(OperatorSet {
        params,
        a,
        a_dag,
        x,
        p,
        h,
        energies,
    })
}

/// A density matrix on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: CMat,
}

impl DensityMatrix {
    /// Validating constructor: unit trace and Hermiticity within `1e-12`,
    /// smallest eigenvalue above `-1e-9`.
    pub fn new(elements: CMat) -> Result<Self> {
        if elements.nrows() != elements.ncols() {
            return Err(Error::DimensionMismatch(elements.nrows(), elements.ncols()));
        }
        if elements.nrows() < 1 {
            return Err(Error::InvalidState("empty matrix".into()));
        }
        let tr = linalg::trace(&elements);
        if (tr - C64::new(1.0, 0.0)).norm() > CONSTRUCTION_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let herr = hermiticity_error(&elements);
        if herr > CONSTRUCTION_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herr:.3e})"
            )));
        }
        let rho = Self { elements };
        let min = rho.min_eigenvalue()?;
        if min < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Wrap a matrix produced by an integrator. No checks are made; the
    /// trajectory diagnostics carry the invariant measurements instead.
    pub(crate) fn from_evolved(elements: CMat) -> Self {
        Self { elements }
    }

    /// `|ψ⟩⟨ψ|` after normalising `ψ`.
    pub fn from_pure(psi: &CVec) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState(
                "zero or non-finite state vector".into(),
            ));
        }
        let psi = psi / C64::new(norm, 0.0);
        let m = &psi * psi.adjoint();
        let m = linalg::hermitian_part(&m);
        Ok(Self { elements: m })
    }

    pub fn number_state(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidParameter(format!(
                "level {n} outside Fock dimension {dim}"
            )));
        }
        let mut psi = CVec::zeros(dim);
        psi[n] = C64::new(1.0, 0.0);
        Self::from_pure(&psi)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let w = 1.0 / dim as f64;
        Self {
            elements: CMat::from_diagonal_element(dim, dim, C64::new(w, 0.0)),
        }
    }

    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let d = populations.len();
        let m = CMat::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(populations[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::new(m)
    }

    pub fn matrix(&self) -> &CMat {
        &self.elements
    }

    pub fn into_matrix(self) -> CMat {
        self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn get(&self, n: usize, m: usize) -> C64 {
        self.elements[(n, m)]
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.elements)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ ρ) = Σ_ij ρ_ij ρ_ji
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.elements[(i, j)] * self.elements[(j, i)];
            }
        }
        acc.re
    }

    pub fn expectation(&self, op: &CMat) -> C64 {
        linalg::trace(&linalg::mul(&self.elements, op))
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.elements[(i, i)].re).collect()
    }

    /// Combined population of the top two Fock levels.
    pub fn top_occupation(&self) -> f64 {
        let d = self.dim();
        let lo = d.saturating_sub(2);
        (lo..d).map(|i| self.elements[(i, i)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.elements)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&linalg::hermitian_part(&self.elements))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }
}

fn poisson_tail(mean: f64, from: usize) -> f64 {
    // Σ_{n >= from} e^{-μ} μ^n / n!, summed directly to avoid cancellation.
    if mean == 0.0 {
        return if from == 0 { 1.0 } else { 0.0 };
    }
    let ln_mu = mean.ln();
    let mut ln_term = -mean;
    for n in 1..=from {
        ln_term += ln_mu - (n as f64).ln();
    }
    let mut tail = 0.0;
    let mut n = from;
    loop {
        let term = ln_term.exp();
        tail += term;
        n += 1;
        ln_term += ln_mu - (n as f64).ln();
        if (n as f64) > mean && ln_term.exp() < 1e-300_f64.max(tail * 1e-17) {
            break;
        }
        if n > from + 100_000 {
            break;
        }
    }
    tail
}

/// Truncated coherent-state amplitudes `e^{-|α|²/2} αⁿ/√n!`, renormalised.
pub fn coherent_vector(alpha: C64, dim: usize) -> Result<CVec> {
    if dim < 1 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let mean = alpha.norm_sqr();
    let tail = poisson_tail(mean, dim);
    if tail > TAIL_TOL {
        return Err(Error::TruncationUnsafe(format!(
            "coherent state alpha = {alpha} loses weight {tail:.3e} beyond level {dim}"
        )));
    }
    let mut psi = CVec::zeros(dim);
    let mut amp = C64::new((-mean / 2.0).exp(), 0.0);
    for n in 0..dim {
        psi[n] = amp;
        amp = amp * alpha / ((n + 1) as f64).sqrt();
    }
    let norm = psi.norm();
    Ok(psi / C64::new(norm, 0.0))
}

pub fn coherent_state(alpha: C64, dim: usize) -> Result<DensityMatrix> {
    DensityMatrix::from_pure(&coherent_vector(alpha, dim)?)
}

/// Displaced squeezed vacuum `D(α) S(ξ)|0⟩`, `ξ = r e^{iθ}`, with
/// `S(ξ) = exp(½(ξ* a² − ξ a†²))`. For `θ = 0` the position variance is
/// `e^{−2r}/2`.
///
/// The exponentials are taken in a larger space so that truncation of the
/// ladder operators does not distort the retained amplitudes.
pub fn squeezed_vector(alpha: C64, r: f64, theta: f64, dim: usize) -> Result<CVec> {
    if dim < 1 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(r >= 0.0) || !r.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "squeezing r = {r}, theta = {theta} must be finite with r >= 0"
        )));
    }
    let big = 2 * dim + 40;
    let a = lowering(big);
    let ad = a.adjoint();
    let xi = C64::from_polar(r, theta);
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    // exp(A) for anti-Hermitian A equals exp(i·G) with Hermitian G = −iA.
    let g_squeeze = (a2 * xi.conj() - ad2 * xi) * C64::new(0.0, -0.5);
    let g_shift = (&ad * alpha - &a * alpha.conj()) * C64::new(0.0, -1.0);
    let u = matrix_exp_unitary(&g_shift, 1.0)? * matrix_exp_unitary(&g_squeeze, 1.0)?;
    let full: Vec<C64> = u.column(0).iter().copied().collect();
    let edge: f64 = full[big - 10..].iter().map(|z| z.norm_sqr()).sum();
    let tail: f64 = full[dim..].iter().map(|z| z.norm_sqr()).sum();
    if tail > TAIL_TOL || edge > 1e-14 {
        return Err(Error::TruncationUnsafe(format!(
            "squeezed state (alpha = {alpha}, r = {r}, theta = {theta}) loses weight {tail:.3e} beyond level {dim}"
        )));
    }
    let psi = CVec::from_iterator(dim, full.into_iter().take(dim));
    let norm = psi.norm();
    Ok(psi / C64::new(norm, 0.0))
}

/// `−Σ λ log λ` in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let vals = rho.eigenvalues()?;
    let mut s = 0.0;
    for &l in &vals {
        if l < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {l:.3e}; state is corrupted"
            )));
        }
        if l > ENTROPY_FLOOR {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// `1 − Tr ρ²`.
pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    1.0 - rho.purity()
}

/// `½ Σ |μ_i|` over the eigenvalues of `a − b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    trace_distance_matrices(a.matrix(), b.matrix())
}

pub(crate) fn trace_distance_matrices(a: &CMat, b: &CMat) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(a.nrows(), b.nrows()));
    }
    let diff = linalg::hermitian_part(&(a - b));
    let vals = linalg::hermitian_eigenvalues(&diff)?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// `exp(i · scale · G)` for Hermitian `G`, via its eigen-decomposition.
pub fn matrix_exp_unitary(generator: &CMat, scale: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(generator)?;
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (c, &l) in vals.iter().enumerate() {
        let ph = C64::from_polar(1.0, scale * l);
        for r in 0..n {
            scaled[(r, c)] *= ph;
        }
    }
    Ok(scaled * vecs.adjoint())
}

/// Largest deviation of `U†U` from the identity.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    max_abs(&(prod - CMat::identity(n, n)))
}
