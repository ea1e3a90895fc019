//! Scenario documents.
//!
//! A scenario is a TOML file with dotted sections. Every key except
//! `bath.cutoff` has a default; unknown keys are errors. After parsing, the
//! scenario is resolved (derived defaults filled in) and checked for
//! consistency, and the resolved form round-trips through [`Scenario::to_toml`].
//!
//! Times are given in oscillator periods so that step counts are integers.
//!
//! ```toml
//! [bath]
//! cutoff = 0.01
//! coupling_sq = 100.0
//!
//! [solver]
//! engine = "secular"
//! periods = 10
//! ```

use crate::bath::{uniform_grid, BathModel, WindowKind};
use crate::hilbert::{coherent_vector, squeezed_vector, DensityMatrix, SystemParams};
use crate::oracle::{BathState, CouplingForm, JointModel, OracleMode};
use crate::sieve::{ContinuousFamily, FamilyKind, Measure, StateFamily};
use crate::solvers::{BReading, CrossTerms, EvolveOptions, FSign, MAX_DT_PERIODS};
use crate::{CVec, Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Coarsest kernel/coefficient grid, in steps per period.
pub const MIN_KERNEL_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    Qbm,
    Channels,
    Secular,
}

/// How the QBM coefficients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// Cumulative quadrature of the tabulated kernels.
    #[default]
    Quadrature,
    /// Closed form for a flat kernel; rejected if the bath is not adiabatic.
    Adiabatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSetting {
    #[default]
    Off,
    Nl,
    Ln,
    Ml,
}

impl From<CrossSetting> for CrossTerms {
    fn from(c: CrossSetting) -> Self {
        match c {
            CrossSetting::Off => CrossTerms::Off,
            CrossSetting::Nl => CrossTerms::On(BReading::Nl),
            CrossSetting::Ln => CrossTerms::On(BReading::Ln),
            CrossSetting::Ml => CrossTerms::On(BReading::Ml),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn nodes() -> usize {
    64
}
fn exponential() -> WindowKind {
    WindowKind::Exponential
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub cutoff: f64,
    #[serde(default = "one")]
    pub coupling_sq: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub field_mass: f64,
    #[serde(default = "exponential")]
    pub window: WindowKind,
    #[serde(default = "one_dim")]
    pub spatial_dim: usize,
    /// Defaults to `8 · cutoff`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default = "nodes")]
    pub n_k: usize,
}

fn one_dim() -> usize {
    1
}

impl BathSection {
    pub fn model(&self) -> BathModel {
        BathModel {
            spatial_dim: self.spatial_dim,
            coupling_sq: self.coupling_sq,
            temperature: self.temperature,
            field_mass: self.field_mass,
            window: self.window,
            cutoff: self.cutoff,
            k_max: self.k_max.unwrap_or(8.0 * self.cutoff),
            n_k: self.n_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// Grid points per period for kernels and coefficients.
    pub steps_per_period: usize,
    /// Grid horizon; defaults to `solver.periods`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            steps_per_period: 400,
            periods: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub engine: EngineKind,
    pub periods: f64,
    pub steps_per_period: usize,
    pub record_every: usize,
    pub coefficients: CoefficientMode,
    pub f_sign: FSign,
    pub frozen_kernels: bool,
    pub cross_terms: CrossSetting,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            engine: EngineKind::Qbm,
            periods: 10.0,
            steps_per_period: 200,
            record_every: 1,
            coefficients: CoefficientMode::Quadrature,
            f_sign: FSign::Derived,
            frozen_kernels: false,
            cross_terms: CrossSetting::Off,
        }
    }
}

/// Initial state for `evolve`, and for the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Number {
        n: usize,
    },
    Coherent {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `(|n⟩ + e^{iφ}|m⟩)/√2`.
    Superposition {
        n: usize,
        m: usize,
        #[serde(default)]
        phi: f64,
    },
    Squeezed {
        r: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
    },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Superposition {
            n: 0,
            m: 1,
            phi: 0.0,
        }
    }
}

impl InitialState {
    pub fn state(&self, dim: usize) -> Result<DensityMatrix> {
        let level = |n: usize| -> Result<CVec> {
            if n >= dim {
                return Err(Error::TruncationUnsafe(format!(
                    "level {n} outside dimension {dim}"
                )));
            }
            let mut v = CVec::zeros(dim);
            v[n] = C64::new(1.0, 0.0);
            Ok(v)
        };
        let psi = match *self {
            InitialState::Number { n } => level(n)?,
            InitialState::Coherent { re, im } => coherent_vector(C64::new(re, im), dim)?,
            InitialState::Superposition { n, m, phi } => {
                if n == m {
                    return Err(Error::InvalidParameter(
                        "superposition needs two distinct levels".into(),
                    ));
                }
                level(n)? + level(m)? * C64::from_polar(1.0, phi)
            }
            InitialState::Squeezed { r, theta, re, im } => {
                squeezed_vector(C64::new(re, im), r, theta, dim)?
            }
        };
        DensityMatrix::from_pure(&psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeSection {
    pub family: ContinuousFamily,
    pub t_star_periods: f64,
    #[serde(default = "max_evals")]
    pub max_evals: usize,
}

fn max_evals() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveSection {
    #[serde(default)]
    pub measure: Measure,
    pub checkpoint_periods: Vec<f64>,
    pub members: Vec<FamilyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimize: Option<MinimizeSection>,
}

fn oracle_dim() -> usize {
    8
}
fn oracle_modes() -> Vec<OracleMode> {
    JointModel::default().modes
}
fn oracle_couplings() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn oracle_steps() -> usize {
    800
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "oracle_dim")]
    pub fock_dim: usize,
    #[serde(default = "oracle_modes")]
    pub modes: Vec<OracleMode>,
    #[serde(default)]
    pub form: CouplingForm,
    #[serde(default)]
    pub bath: BathState,
    #[serde(default = "oracle_couplings")]
    pub couplings: Vec<f64>,
    #[serde(default = "one")]
    pub t_star_periods: f64,
    #[serde(default = "oracle_steps")]
    pub steps_per_period: usize,
    #[serde(default)]
    pub f_sign: FSign,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            fock_dim: oracle_dim(),
            modes: oracle_modes(),
            form: CouplingForm::Linear,
            bath: BathState::Vacuum,
            couplings: oracle_couplings(),
            t_star_periods: 1.0,
            steps_per_period: oracle_steps(),
            f_sign: FSign::Derived,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Density-matrix elements written to the trajectory CSV.
    pub elements: Vec<[usize; 2]>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            elements: vec![[0, 1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Must be `true`: nothing in the pipeline draws random numbers, and any
    /// future stochastic feature has to add an explicit seed instead.
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default)]
    pub system: SystemParams,
    pub bath: BathSection,
    #[serde(default)]
    pub kernels: KernelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sieve: Option<SieveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn cfg(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

fn is_whole(x: f64) -> bool {
    x.is_finite() && (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
}

/// Parse, resolve and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| cfg("<document>", e.to_string().trim().to_string()))?;
    let raw: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." {
            "<document>".to_string()
        } else {
            path
        };
        cfg(&key, e.into_inner().message().to_string())
    })?;
    raw.resolve()
}

impl Scenario {
    /// A scenario with every default and the given bath cutoff.
    pub fn with_cutoff(cutoff: f64) -> Result<Self> {
        parse_scenario(&format!("[bath]\ncutoff = {cutoff:?}\n"))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg("<file>", format!("cannot read {}: {e}", path.display())))?;
        parse_scenario(&text)
    }

    /// Fill derived defaults and check cross-section consistency.
    pub fn resolve(mut self) -> Result<Self> {
        if !self.deterministic {
            return Err(cfg(
                "deterministic",
                "must be true; no component accepts a random seed",
            ));
        }
        self.system
            .validate()
            .map_err(|e| cfg("system", e.to_string()))?;
        self.bath.k_max.get_or_insert(8.0 * self.bath.cutoff);
        self.bath
            .model()
            .validate()
            .map_err(|e| cfg("bath", e.to_string()))?;

        let s = &self.solver;
        if !(s.periods > 0.0) || !s.periods.is_finite() {
            return Err(cfg("solver.periods", "must be > 0"));
        }
        let min_steps = (1.0 / MAX_DT_PERIODS).round() as usize;
        if s.steps_per_period < min_steps {
            return Err(cfg(
                "solver.steps_per_period",
                format!("must be >= {min_steps}, got {}", s.steps_per_period),
            ));
        }
        if !is_whole(s.periods * s.steps_per_period as f64) {
            return Err(cfg(
                "solver.periods",
                "periods * solver.steps_per_period must be a whole number of steps",
            ));
        }
        if s.record_every == 0 {
            return Err(cfg("solver.record_every", "must be >= 1"));
        }
        if self.kernels.steps_per_period < MIN_KERNEL_STEPS {
            return Err(cfg(
                "kernels.steps_per_period",
                format!(
                    "must be >= {MIN_KERNEL_STEPS}, got {}",
                    self.kernels.steps_per_period
                ),
            ));
        }
        let kp = *self.kernels.periods.get_or_insert(self.solver.periods);
        if !(kp > 0.0) || !is_whole(kp * self.kernels.steps_per_period as f64) {
            return Err(cfg(
                "kernels.periods",
                "must be > 0 and a whole number of kernel steps",
            ));
        }
        if self.solver.periods > kp * (1.0 + 1e-12) {
            return Err(cfg(
                "solver.periods",
                format!(
                    "solver horizon {} periods exceeds the kernel grid `kernels.periods` = {kp}",
                    self.solver.periods
                ),
            ));
        }
        for (i, [n, m]) in self.output.elements.iter().enumerate() {
            if *n >= self.system.fock_dim || *m >= self.system.fock_dim {
                return Err(cfg(
                    &format!("output.elements[{i}]"),
                    format!("({n} {m}) outside fock_dim = {}", self.system.fock_dim),
                ));
            }
        }

        if let Some(sv) = &self.sieve {
            if sv.checkpoint_periods.is_empty() {
                return Err(cfg(
                    "sieve.checkpoint_periods",
                    "needs at least one checkpoint",
                ));
            }
            for (i, &c) in sv.checkpoint_periods.iter().enumerate() {
                let key = format!("sieve.checkpoint_periods[{i}]");
                if !(c > 0.0) || c > self.solver.periods * (1.0 + 1e-12) {
                    return Err(cfg(
                        &key,
                        format!(
                            "{c} must lie in (0, solver.periods = {}]",
                            self.solver.periods
                        ),
                    ));
                }
                if !is_whole(c * self.solver.steps_per_period as f64) {
                    return Err(cfg(
                        &key,
                        "must be a whole number of solver.steps_per_period steps",
                    ));
                }
            }
            if sv.members.is_empty() {
                return Err(cfg("sieve.members", "the family is empty"));
            }
            if let Some(mz) = &sv.minimize {
                let t = mz.t_star_periods;
                if !(t > 0.0) || t > self.solver.periods * (1.0 + 1e-12) {
                    return Err(cfg(
                        "sieve.minimize.t_star_periods",
                        format!(
                            "{t} must lie in (0, solver.periods = {}]",
                            self.solver.periods
                        ),
                    ));
                }
                if !is_whole(t * self.solver.steps_per_period as f64) {
                    return Err(cfg(
                        "sieve.minimize.t_star_periods",
                        "must be a whole number of solver steps",
                    ));
                }
            }
        }

        if let Some(o) = &self.oracle {
            self.joint_model(o, 0.0)
                .validate()
                .map_err(|e| cfg("oracle", e.to_string()))?;
            if o.couplings.is_empty() || o.couplings.iter().any(|e| !(*e >= 0.0)) {
                return Err(cfg(
                    "oracle.couplings",
                    "needs a non-empty list of couplings >= 0",
                ));
            }
            if o.steps_per_period < min_steps {
                return Err(cfg(
                    "oracle.steps_per_period",
                    format!("must be >= {min_steps}"),
                ));
            }
            if !(o.t_star_periods > 0.0) || !is_whole(o.t_star_periods * o.steps_per_period as f64)
            {
                return Err(cfg(
                    "oracle.t_star_periods",
                    "must be > 0 and a whole number of oracle.steps_per_period steps",
                ));
            }
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario types serialize to TOML")
    }

    pub fn period(&self) -> f64 {
        self.system.period()
    }

    pub fn bath_model(&self) -> BathModel {
        self.bath.model()
    }

    pub fn dt(&self) -> f64 {
        self.period() / self.solver.steps_per_period as f64
    }

    pub fn t_max(&self) -> f64 {
        self.steps() as f64 * self.dt()
    }

    pub fn steps(&self) -> usize {
        (self.solver.periods * self.solver.steps_per_period as f64).round() as usize
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions::new(self.t_max(), self.dt()).record_every(self.solver.record_every)
    }

    pub fn kernel_spacing(&self) -> f64 {
        self.period() / self.kernels.steps_per_period as f64
    }

    pub fn kernel_grid(&self) -> Vec<f64> {
        let periods = self.kernels.periods.unwrap_or(self.solver.periods);
        uniform_grid(periods * self.period(), self.kernel_spacing())
    }

    /// Checkpoint times snapped to whole solver steps.
    pub fn checkpoints(&self) -> Vec<f64> {
        let dt = self.dt();
        self.sieve
            .iter()
            .flat_map(|s| &s.checkpoint_periods)
            .map(|c| (c * self.solver.steps_per_period as f64).round() * dt)
            .collect()
    }

    pub fn family(&self) -> Option<StateFamily> {
        self.sieve
            .as_ref()
            .map(|s| StateFamily::new(self.system.fock_dim, s.members.clone()))
    }

    pub fn cross_terms(&self) -> CrossTerms {
        self.solver.cross_terms.into()
    }

    pub fn joint_model(&self, o: &OracleSection, coupling: f64) -> JointModel {
        JointModel {
            system: SystemParams {
                fock_dim: o.fock_dim,
                ..self.system
            },
            modes: o.modes.clone(),
            form: o.form,
            coupling,
        }
    }

    pub fn oracle_dt(&self, o: &OracleSection) -> f64 {
        self.period() / o.steps_per_period as f64
    }

    pub fn oracle_t_star(&self, o: &OracleSection) -> f64 {
        (o.t_star_periods * o.steps_per_period as f64).round() * self.oracle_dt(o)
    }
}
