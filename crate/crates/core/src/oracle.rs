//! Exact reference dynamics: the oscillator plus a handful of bath modes,
//! evolved unitarily and traced down to the system.
//!
//! The joint Hamiltonian is time independent, so it is diagonalized once and
//! every grid time costs a matrix–vector product. Thermal baths are handled
//! as Boltzmann-weighted ensembles of bath Fock states, each evolved as a
//! pure joint vector. This validates the second-order expansion behind the
//! master equations; it says nothing about how well three modes stand in for
//! a continuum.

use crate::bath::{uniform_grid, DiscreteMode, KernelTable};
use crate::coeffs::build_coefficients;
use crate::hilbert::{
    build_operators, lowering, matrix_exp_unitary, trace_distance, DensityMatrix, SystemParams,
};
use crate::linalg::{hermitian_eigen, symmetric_eigen_real};
use crate::output::{fmt_f64, CsvTable};
use crate::solvers::{evolve_qbm_with, EvolveOptions, FSign, Trajectory};
use crate::{par, CMat, CVec, Error, Result, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Largest joint Hilbert-space dimension accepted.
pub const MAX_JOINT_DIM: usize = 4096;
/// Largest Gibbs weight that may fall outside the truncated bath levels.
pub const ENSEMBLE_TAIL_TOL: f64 = 1e-4;
/// Ensemble members lighter than this are skipped.
const MEMBER_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// `e Σ λ_j x (b_j + b_j†)`.
    #[default]
    Linear,
    /// `e Σ g_j (e^{i k_j x} b_j + h.c.)`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleMode {
    pub omega: f64,
    /// Wavenumber, used by the exponential coupling only.
    pub k: f64,
    /// Coupling strength per unit `e`.
    pub strength: f64,
    /// Highest retained occupation `n_j`; the mode keeps `n_j + 1` levels.
    pub max_quanta: usize,
}

impl OracleMode {
    pub fn new(omega: f64, strength: f64, max_quanta: usize) -> Self {
        Self {
            omega,
            k: omega,
            strength,
            max_quanta,
        }
    }

    pub fn levels(&self) -> usize {
        self.max_quanta + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointModel {
    pub system: SystemParams,
    pub modes: Vec<OracleMode>,
    #[serde(default)]
    pub form: CouplingForm,
    /// Overall coupling `e`.
    pub coupling: f64,
}

impl Default for JointModel {
    /// Three off-resonant modes with four quanta each and an 8-level system.
    fn default() -> Self {
        Self {
            system: SystemParams::with_dim(8),
            modes: vec![
                OracleMode::new(0.7, 1.0, 4),
                OracleMode::new(1.3, 1.0, 4),
                OracleMode::new(2.2, 1.0, 4),
            ],
            form: CouplingForm::Linear,
            coupling: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathState {
    #[default]
    Vacuum,
    FockEnsemble {
        temperature: f64,
    },
}

impl JointModel {
    pub fn with_coupling(&self, e: f64) -> Self {
        Self {
            coupling: e,
            ..self.clone()
        }
    }

    pub fn bath_dim(&self) -> usize {
        self.modes.iter().map(OracleMode::levels).product()
    }

    pub fn dim(&self) -> usize {
        self.system.fock_dim * self.bath_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter(
                "joint model needs at least one bath mode".into(),
            ));
        }
        for (j, m) in self.modes.iter().enumerate() {
            if !(m.omega > 0.0) || !m.omega.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "mode {j}: omega = {} must be > 0",
                    m.omega
                )));
            }
            if !m.strength.is_finite() || !m.k.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "mode {j}: strength and k must be finite"
                )));
            }
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        let levels = self
            .modes
            .iter()
            .try_fold(self.system.fock_dim, |acc, m| acc.checked_mul(m.levels()));
        match levels {
            Some(d) if d <= MAX_JOINT_DIM => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "joint dimension {} exceeds the cap of {MAX_JOINT_DIM}",
                levels.map_or("overflow".to_string(), |d| d.to_string())
            ))),
        }
    }

    /// `b_j` embedded in the joint space (system factor first).
    fn bath_operator(&self, j: usize, op: &CMat) -> CMat {
        let ds = self.system.fock_dim;
        let before: usize = self.modes[..j].iter().map(OracleMode::levels).product();
        let after: usize = self.modes[j + 1..].iter().map(OracleMode::levels).product();
        let left = CMat::identity(ds * before, ds * before);
        left.kronecker(op).kronecker(&CMat::identity(after, after))
    }

    pub fn hamiltonian(&self) -> Result<CMat> {
        self.validate()?;
        let ops = build_operators(self.system)?;
        let bd = self.bath_dim();
        let ds = self.system.fock_dim;
        let hs = CMat::from_diagonal(&CVec::from_iterator(
            ds,
            ops.energies.iter().map(|&e| C64::new(e, 0.0)),
        ));
        let mut h = hs.kronecker(&CMat::identity(bd, bd));
        for (j, m) in self.modes.iter().enumerate() {
            let b = lowering(m.levels());
            let number = b.adjoint() * &b;
            h += self.bath_operator(j, &number) * C64::new(m.omega, 0.0);
            let g = C64::new(self.coupling * m.strength, 0.0);
            if g == C64::new(0.0, 0.0) {
                continue;
            }
            let term = match self.form {
                CouplingForm::Linear => {
                    let xb = ops.x.kronecker(&CMat::identity(bd, bd));
                    xb * self.bath_operator(j, &(&b + b.adjoint()))
                }
                CouplingForm::Exponential => {
                    let phase = matrix_exp_unitary(&ops.x, m.k)?.kronecker(&CMat::identity(bd, bd));
                    let t = phase * self.bath_operator(j, &b);
                    let t_dag = t.adjoint();
                    t + t_dag
                }
            };
            h += term * g;
        }
        Ok(h)
    }

    /// The modes as seen by the master equations: `λ_j²` per unit `e²` and
    /// the given occupations.
    pub fn discrete_modes(&self, occupations: &[f64]) -> Vec<DiscreteMode> {
        self.modes
            .iter()
            .zip(occupations)
            .map(|(m, &n)| DiscreteMode {
                omega: m.omega,
                coupling_sq: m.strength * m.strength,
                occupation: n,
            })
            .collect()
    }
}

/// Per-mode level weights of the bath state, the Gibbs weight lost to
/// truncation, and the mean occupations of the truncated distribution.
struct BathWeights {
    per_mode: Vec<Vec<f64>>,
    tail: f64,
    occupations: Vec<f64>,
}

fn bath_weights(model: &JointModel, bath: BathState) -> Result<BathWeights> {
    match bath {
        BathState::Vacuum => Ok(BathWeights {
            per_mode: model
                .modes
                .iter()
                .map(|m| {
                    let mut w = vec![0.0; m.levels()];
                    w[0] = 1.0;
                    w
                })
                .collect(),
            tail: 0.0,
            occupations: vec![0.0; model.modes.len()],
        }),
        BathState::FockEnsemble { temperature } => {
            if !(temperature > 0.0) || !temperature.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "ensemble temperature {temperature} must be > 0; use the vacuum for T = 0"
                )));
            }
            let mut kept = 1.0;
            let mut per_mode = Vec::new();
            let mut occupations = Vec::new();
            for m in &model.modes {
                let q = (-m.omega / temperature).exp();
                kept *= 1.0 - q.powi(m.levels() as i32);
                let raw: Vec<f64> = (0..m.levels()).map(|n| q.powi(n as i32)).collect();
                let z: f64 = raw.iter().sum();
                let w: Vec<f64> = raw.iter().map(|x| x / z).collect();
                occupations.push(w.iter().enumerate().map(|(n, p)| n as f64 * p).sum());
                per_mode.push(w);
            }
            let tail = 1.0 - kept;
            if tail > ENSEMBLE_TAIL_TOL {
                return Err(Error::TruncationUnsafe(format!(
                    "bath truncation drops Gibbs weight {tail:.3e} > {ENSEMBLE_TAIL_TOL:e} at T = {temperature}"
                )));
            }
            Ok(BathWeights {
                per_mode,
                tail,
                occupations,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExactRun {
    /// Reduced system states on the requested grid.
    pub trajectory: Trajectory,
    /// Largest `|⟨H⟩(t) − ⟨H⟩(0)|` over members and times.
    pub energy_drift: f64,
    /// Largest `|‖ψ(t)‖ − 1|` over members and times.
    pub norm_drift: f64,
    /// Gibbs weight discarded by the bath truncation.
    pub ensemble_tail: f64,
    /// Mean occupation of each truncated bath mode.
    pub occupations: Vec<f64>,
    pub members: usize,
}

struct Spectrum {
    energies: Vec<f64>,
    vectors: CMat,
}

fn diagonalize(h: &CMat) -> Result<Spectrum> {
    let real = h.iter().all(|z| z.im == 0.0);
    if real {
        let (energies, v) =
            symmetric_eigen_real(DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)].re));
        Ok(Spectrum {
            energies,
            vectors: v.map(|x| C64::new(x, 0.0)),
        })
    } else {
        let (energies, vectors) = hermitian_eigen(h)?;
        Ok(Spectrum { energies, vectors })
    }
}

/// Evolve `system ⊗ bath` exactly and return the reduced system states at
/// the times of `t_grid`.
pub fn evolve_exact(
    model: &JointModel,
    rho0: &DensityMatrix,
    bath: BathState,
    t_grid: &[f64],
) -> Result<ExactRun> {
    model.validate()?;
    let ds = model.system.fock_dim;
    if rho0.dim() != ds {
        return Err(Error::DimensionMismatch(rho0.dim(), ds));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "grid times must be finite and >= 0".into(),
        ));
    }
    let weights = bath_weights(model, bath)?;
    let h = model.hamiltonian()?;
    let spec = diagonalize(&h)?;
    let v_dag = spec.vectors.adjoint();
    let bd = model.bath_dim();

    // Ensemble = eigen-decomposition of ρ0 × product Fock configurations.
    let (p_sys, u_sys) = hermitian_eigen(rho0.matrix())?;
    let mut members: Vec<(f64, CVec)> = Vec::new();
    for b in 0..bd {
        let mut w_bath = 1.0;
        let mut rest = b;
        for (j, m) in model.modes.iter().enumerate().rev() {
            w_bath *= weights.per_mode[j][rest % m.levels()];
            rest /= m.levels();
        }
        for (i, &p) in p_sys.iter().enumerate() {
            let w = p * w_bath;
            if w <= MEMBER_FLOOR {
                continue;
            }
            let mut psi = CVec::zeros(ds * bd);
            for s in 0..ds {
                psi[s * bd + b] = u_sys[(s, i)];
            }
            members.push((w, psi));
        }
    }

    let results: Vec<(Vec<CMat>, f64, f64)> = par::map(&members, |(w, psi0)| {
        let c0 = &v_dag * psi0;
        let e0 = (psi0.adjoint() * (&h * psi0))[(0, 0)].re;
        let mut states = Vec::with_capacity(t_grid.len());
        let mut e_drift: f64 = 0.0;
        let mut n_drift: f64 = 0.0;
        for &t in t_grid {
            let ct = CVec::from_fn(c0.len(), |k, _| {
                c0[k] * C64::from_polar(1.0, -spec.energies[k] * t)
            });
            let psi = &spec.vectors * ct;
            let e = (psi.adjoint() * (&h * &psi))[(0, 0)].re;
            e_drift = e_drift.max((e - e0).abs());
            n_drift = n_drift.max((psi.norm() - 1.0).abs());
            // ψ is laid out system-major, so its reshape is the d_s × d_b amplitude matrix.
            let amp = CMat::from_fn(ds, bd, |s, b| psi[s * bd + b]);
            states.push(amp.clone() * amp.adjoint() * C64::new(*w, 0.0));
        }
        (states, e_drift, n_drift)
    });

    let norm: f64 = members.iter().map(|(w, _)| w).sum();
    let mut traj = Trajectory::with_capacity(t_grid.len());
    let mut energy_drift: f64 = 0.0;
    let mut norm_drift: f64 = 0.0;
    for (k, &t) in t_grid.iter().enumerate() {
        let mut rho = CMat::zeros(ds, ds);
        for (states, _, _) in &results {
            rho += &states[k];
        }
        traj.push(t, DensityMatrix::from_evolved(rho / C64::new(norm, 0.0)));
    }
    for (_, e, n) in &results {
        energy_drift = energy_drift.max(*e);
        norm_drift = norm_drift.max(*n);
    }
    Ok(ExactRun {
        trajectory: traj,
        energy_drift,
        norm_drift,
        ensemble_tail: weights.tail,
        occupations: weights.occupations,
        members: members.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub coupling: f64,
    /// Trace distance between exact and master-equation states at `t_star`.
    pub delta: f64,
    /// `δ(e) / δ(e_next)` for the next smaller coupling, if any.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub t_star: f64,
    /// Sorted by decreasing coupling.
    pub rows: Vec<ScalingRow>,
    /// False when `δ` fails to decrease with the coupling.
    pub monotone: bool,
}

impl ScalingReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["e", "delta", "ratio"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.coupling),
                fmt_f64(r.delta),
                r.ratio.map(fmt_f64).unwrap_or_default(),
            ]);
        }
        t
    }
}

/// Distance between the exact reduced state and the dipole master equation
/// at `t_star`, for one coupling. The master equation sees exactly the
/// oracle's modes, with their truncated occupations.
pub fn master_equation_error(
    model: &JointModel,
    rho0: &DensityMatrix,
    bath: BathState,
    t_star: f64,
    dt: f64,
    sign: FSign,
) -> Result<f64> {
    if model.form != CouplingForm::Linear {
        return Err(Error::InvalidParameter(
            "the master-equation comparison needs the linear coupling".into(),
        ));
    }
    let exact = evolve_exact(model, rho0, bath, &[t_star])?;
    let modes = model.discrete_modes(&exact.occupations);
    let opts = EvolveOptions::new(t_star, dt).record_every(usize::MAX);
    opts.steps()?;
    let kernels = KernelTable::from_discrete_modes(&modes, &uniform_grid(t_star, 0.5 * dt))?;
    let coeffs = build_coefficients(&kernels, &model.system, model.coupling * model.coupling)?;
    let ops = build_operators(model.system)?;
    let me = evolve_qbm_with(rho0, &coeffs, &ops, &opts, sign)?;
    trace_distance(exact.trajectory.final_state(), me.final_state())
}

/// Master-equation error for each coupling. A second-order equation should
/// leave an `O(e⁴)` error, so halving `e` divides `δ` by about 16.
pub fn perturbative_scaling_check(
    model: &JointModel,
    rho0: &DensityMatrix,
    bath: BathState,
    couplings: &[f64],
    t_star: f64,
    dt: f64,
    sign: FSign,
) -> Result<ScalingReport> {
    if couplings.is_empty() {
        return Err(Error::InvalidParameter("no couplings given".into()));
    }
    let mut es = couplings.to_vec();
    es.sort_by(|a, b| b.total_cmp(a));
    let deltas = par::map(&es, |&e| {
        master_equation_error(&model.with_coupling(e), rho0, bath, t_star, dt, sign)
    });
    let deltas = deltas.into_iter().collect::<Result<Vec<f64>>>()?;
    let rows: Vec<ScalingRow> = (0..es.len())
        .map(|i| ScalingRow {
            coupling: es[i],
            delta: deltas[i],
            ratio: deltas.get(i + 1).map(|next| deltas[i] / next),
        })
        .collect();
    let monotone = deltas.windows(2).all(|w| w[0] > w[1]);
    Ok(ScalingReport {
        t_star,
        rows,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::coherent_state;
    use std::f64::consts::PI;

    fn small(coupling: f64) -> JointModel {
        JointModel {
            system: SystemParams::with_dim(8),
            modes: vec![OracleMode::new(0.8, 1.0, 3), OracleMode::new(1.7, 0.6, 2)],
            form: CouplingForm::Linear,
            coupling,
        }
    }

    fn plus() -> DensityMatrix {
        let mut psi = CVec::zeros(8);
        psi[0] = C64::new(1.0, 0.0);
        psi[1] = C64::new(1.0, 0.0);
        DensityMatrix::from_pure(&psi).unwrap()
    }

    #[test]
    fn default_model_fits_cap() {
        let m = JointModel::default();
        assert_eq!(m.dim(), 1000);
        m.validate().unwrap();
        let mut big = m.clone();
        big.modes[0].max_quanta = 40;
        assert!(big.validate().is_err());
    }

    #[test]
    fn zero_coupling_is_closed_evolution() {
        let m = small(0.0);
        let rho0 = coherent_state(C64::new(0.2, 0.1), 8).unwrap();
        let t = 1.234;
        let run = evolve_exact(&m, &rho0, BathState::Vacuum, &[0.0, t]).unwrap();
        let ops = build_operators(m.system).unwrap();
        let u = CMat::from_fn(8, 8, |i, j| {
            if i == j {
                C64::from_polar(1.0, -ops.energies[i] * t)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let want = DensityMatrix::from_evolved(&u * rho0.matrix() * u.adjoint());
        assert!(trace_distance(run.trajectory.final_state(), &want).unwrap() < 1e-12);
    }

    #[test]
    fn resonant_exchange_conserves_energy() {
        let m = JointModel {
            system: SystemParams::with_dim(4),
            modes: vec![OracleMode::new(1.0, 1.0, 3)],
            form: CouplingForm::Linear,
            coupling: 0.05,
        };
        let rho0 = DensityMatrix::number_state(1, 4).unwrap();
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 2.0).collect();
        let run = evolve_exact(&m, &rho0, BathState::Vacuum, &grid).unwrap();
        assert!(run.energy_drift < 1e-10);
        assert!(run.norm_drift < 1e-10);
        // Half a Rabi period at g = 0.05/√2 is ≈ 44.4: the excitation leaves.
        let p1: Vec<f64> = run
            .trajectory
            .states
            .iter()
            .map(|s| s.get(1, 1).re)
            .collect();
        assert!(p1.iter().cloned().fold(1.0, f64::min) < 0.1);
    }

    #[test]
    fn reduced_purity_drops_while_joint_stays_pure() {
        let m = small(0.2);
        let grid = [0.0, 1.0, 3.0];
        let run = evolve_exact(&m, &plus(), BathState::Vacuum, &grid).unwrap();
        assert!((run.trajectory.states[0].purity() - 1.0).abs() < 1e-12);
        assert!(run.trajectory.states[2].purity() < 1.0 - 1e-4);
        assert!(run.norm_drift < 1e-10);
    }

    #[test]
    fn mode_order_is_irrelevant() {
        let a = small(0.2);
        let mut b = a.clone();
        b.modes.reverse();
        let t = [2.5];
        let ra = evolve_exact(&a, &plus(), BathState::Vacuum, &t).unwrap();
        let rb = evolve_exact(&b, &plus(), BathState::Vacuum, &t).unwrap();
        let d = trace_distance(ra.trajectory.final_state(), rb.trajectory.final_state()).unwrap();
        assert!(d < 1e-12, "{d:e}");
    }

    #[test]
    fn vacuum_purity_loss_is_bounded() {
        let m = small(0.1);
        let rho0 = DensityMatrix::number_state(0, 8).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let run = evolve_exact(&m, &rho0, BathState::Vacuum, &grid).unwrap();
        // Counter-rotating admixture of |1⟩|1_j⟩ has amplitude ≤ √2 e λ_j / (Ω + ω_j).
        let bound: f64 = m
            .modes
            .iter()
            .map(|md| 4.0 * (m.coupling * md.strength / (1.0 + md.omega)).powi(2))
            .sum();
        let worst = run
            .trajectory
            .states
            .iter()
            .map(|s| 1.0 - s.purity())
            .fold(0.0, f64::max);
        assert!(worst > 0.0 && worst < bound, "{worst:e} vs {bound:e}");
    }

    #[test]
    fn thermal_ensemble_checks_truncation() {
        let m = small(0.1);
        assert!(matches!(
            evolve_exact(
                &m,
                &plus(),
                BathState::FockEnsemble { temperature: 2.0 },
                &[1.0]
            ),
            Err(Error::TruncationUnsafe(_))
        ));
        let run = evolve_exact(
            &m,
            &plus(),
            BathState::FockEnsemble { temperature: 0.12 },
            &[0.0, 1.0],
        )
        .unwrap();
        assert!(run.ensemble_tail < ENSEMBLE_TAIL_TOL && run.ensemble_tail > 0.0);
        assert!(run.members > 2);
        assert!((run.trajectory.final_state().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_coupling_is_unitary() {
        let mut m = small(0.2);
        m.form = CouplingForm::Exponential;
        let h = m.hamiltonian().unwrap();
        assert!(crate::linalg::hermiticity_error(&h) < 1e-13);
        let run = evolve_exact(&m, &plus(), BathState::Vacuum, &[0.0, 2.0]).unwrap();
        assert!(run.energy_drift < 1e-10);
        assert!(
            master_equation_error(&m, &plus(), BathState::Vacuum, 1.0, 0.01, FSign::Derived)
                .is_err()
        );
    }

    #[test]
    fn error_vanishes_without_coupling() {
        let d = master_equation_error(
            &small(0.0),
            &plus(),
            BathState::Vacuum,
            2.0 * PI,
            2.0 * PI / 800.0,
            FSign::Derived,
        )
        .unwrap();
        assert!(d < 1e-9, "{d:e}");
    }

    #[test]
    fn small_model_shows_fourth_order_error() {
        let r = perturbative_scaling_check(
            &small(0.0),
            &plus(),
            BathState::Vacuum,
            &[0.025, 0.1, 0.05],
            2.0 * PI,
            2.0 * PI / 400.0,
            FSign::Derived,
        )
        .unwrap();
        assert!(r.monotone);
        assert_eq!(r.rows[0].coupling, 0.1);
        for q in r.ratios() {
            assert!((8.0..=32.0).contains(&q), "{:?}", r.rows);
        }
        assert_eq!(r.to_csv().rows.len(), 3);
        assert!(r.to_csv().rows[2][2].is_empty());
    }
}
