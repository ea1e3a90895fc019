//! Predictability sieve.
//!
//! Every candidate pure state is evolved with one of the master equations and
//! scored by the entropy it produces. Candidates are ranked by the mean
//! entropy over a list of checkpoint times; the per-checkpoint winners tell
//! whether that ranking is robust when the observation time changes.

use crate::coeffs::CoefficientTable;
use crate::hilbert::{squeezed_vector, DensityMatrix, OperatorSet};
use crate::optimize::{nelder_mead, Minimum, NelderMeadOptions};
use crate::output::{fmt_f64, CsvTable};
use crate::solvers::{
    evolve_channels, evolve_qbm_with, evolve_secular, ChannelSet, CrossTerms, EvolveOptions, FSign,
    SecularRates, Trajectory,
};
use crate::{par, CVec, Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Scores closer than this are ties.
pub const TIE_TOL: f64 = 1e-10;

/// `count` evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn fixed(v: f64) -> Self {
        Self::new(v, v, 1)
    }

    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min
        {
            return Err(Error::InvalidParameter(format!(
                "axis `{name}` needs finite min <= max and count >= 1"
            )));
        }
        Ok(())
    }
}

/// One block of candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyKind {
    /// Coherent states on a rectangular grid in the α plane.
    CoherentGrid { re: Axis, im: Axis },
    /// Coherent states at listed `[Re α, Im α]` points.
    CoherentList { alphas: Vec<[f64; 2]> },
    /// `|0⟩ … |n_max⟩`.
    NumberStates { n_max: usize },
    /// `(|n⟩ + e^{iφ}|m⟩)/√2` for every pair and phase.
    TwoStateSuperpositions {
        pairs: Vec<[usize; 2]>,
        phases: Vec<f64>,
    },
    /// Displaced squeezed states with fixed displacement.
    SqueezedGrid {
        r: Axis,
        theta: Axis,
        #[serde(default)]
        alpha: [f64; 2],
    },
    /// For each `n`, the number state `|n⟩` and the coherent state `|√n⟩`,
    /// which share the mean excitation `n`.
    EnergyMatched { n: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFamily {
    pub members: Vec<FamilyKind>,
    pub dim: usize,
}

impl StateFamily {
    pub fn new(dim: usize, members: Vec<FamilyKind>) -> Self {
        Self { members, dim }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    /// Unique, comma-free identifier used for sorting and CSV columns.
    pub label: String,
    pub kind: &'static str,
    pub params: Vec<(String, f64)>,
    pub state: DensityMatrix,
    /// `⟨a†a⟩` of the initial state.
    pub mean_number: f64,
}

/// A parameter point that could not be represented in the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct GeneratedFamily {
    pub candidates: Vec<Candidate>,
    pub rejected: Vec<Rejected>,
}

fn num(v: f64) -> String {
    // `{}` on f64 is the shortest round-trip form and never contains commas.
    format!("{v}")
}

fn candidate(
    kind: &'static str,
    params: Vec<(&str, f64)>,
    psi: Result<CVec>,
) -> std::result::Result<Candidate, Rejected> {
    let mut label = kind.to_string();
    for (k, v) in &params {
        label.push_str(&format!(":{k}={}", num(*v)));
    }
    let state = psi
        .and_then(|p| DensityMatrix::from_pure(&p))
        .map_err(|e| Rejected {
            label: label.clone(),
            reason: e.to_string(),
        })?;
    let mean_number = state
        .populations()
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum();
    Ok(Candidate {
        label,
        kind,
        params: params
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        state,
        mean_number,
    })
}

fn basis(n: usize, dim: usize) -> Result<CVec> {
    if n >= dim {
        return Err(Error::TruncationUnsafe(format!(
            "level {n} outside dimension {dim}"
        )));
    }
    let mut v = CVec::zeros(dim);
    v[n] = C64::new(1.0, 0.0);
    Ok(v)
}

fn coherent(re: f64, im: f64, dim: usize) -> Result<CVec> {
    crate::hilbert::coherent_vector(C64::new(re, im), dim)
}

/// Enumerate a family in a fixed order. Unrepresentable points are returned
/// in `rejected` instead of failing the whole family.
pub fn generate_family(spec: &StateFamily) -> Result<GeneratedFamily> {
    let d = spec.dim;
    if d < 2 {
        return Err(Error::InvalidParameter(
            "family dimension must be >= 2".into(),
        ));
    }
    let mut out = Vec::new();
    for member in &spec.members {
        match member {
            FamilyKind::CoherentGrid { re, im } => {
                re.validate("re")?;
                im.validate("im")?;
                for x in re.values() {
                    for y in im.values() {
                        out.push(candidate(
                            "coherent",
                            vec![("re", x), ("im", y)],
                            coherent(x, y, d),
                        ));
                    }
                }
            }
            FamilyKind::CoherentList { alphas } => {
                for &[x, y] in alphas {
                    out.push(candidate(
                        "coherent",
                        vec![("re", x), ("im", y)],
                        coherent(x, y, d),
                    ));
                }
            }
            FamilyKind::NumberStates { n_max } => {
                for n in 0..=*n_max {
                    out.push(candidate("number", vec![("n", n as f64)], basis(n, d)));
                }
            }
            FamilyKind::TwoStateSuperpositions { pairs, phases } => {
                for &[n, m] in pairs {
                    for &phi in phases {
                        let psi = if n == m {
                            Err(Error::InvalidParameter(format!(
                                "pair ({n} {m}) repeats a level"
                            )))
                        } else {
                            basis(n, d).and_then(|a| {
                                let b = basis(m, d)?;
                                Ok((a + b * C64::from_polar(1.0, phi))
                                    * C64::new(0.5f64.sqrt(), 0.0))
                            })
                        };
                        out.push(candidate(
                            "superposition",
                            vec![("n", n as f64), ("m", m as f64), ("phi", phi)],
                            psi,
                        ));
                    }
                }
            }
            FamilyKind::SqueezedGrid { r, theta, alpha } => {
                r.validate("r")?;
                theta.validate("theta")?;
                for rv in r.values() {
                    for th in theta.values() {
                        let a = C64::new(alpha[0], alpha[1]);
                        out.push(candidate(
                            "squeezed",
                            vec![("r", rv), ("theta", th), ("re", alpha[0]), ("im", alpha[1])],
                            squeezed_vector(a, rv, th, d),
                        ));
                    }
                }
            }
            FamilyKind::EnergyMatched { n } => {
                for &k in n {
                    out.push(candidate("number", vec![("n", k as f64)], basis(k, d)));
                    let a = (k as f64).sqrt();
                    out.push(candidate(
                        "coherent",
                        vec![("re", a), ("im", 0.0)],
                        coherent(a, 0.0, d),
                    ));
                }
            }
        }
    }

    let mut candidates = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for c in out {
        match c {
            Ok(c) if seen.insert(c.label.clone()) => candidates.push(c),
            Ok(_) => {}
            Err(r) => rejected.push(r),
        }
    }
    if candidates.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "family yields {} usable candidate(s), need at least 2",
            candidates.len()
        )));
    }
    Ok(GeneratedFamily {
        candidates,
        rejected,
    })
}

/// Which master equation drives the candidates, with its precomputed inputs.
#[derive(Clone, Copy)]
pub enum Engine<'a> {
    Qbm {
        coeffs: &'a CoefficientTable,
        ops: &'a OperatorSet,
        sign: FSign,
    },
    Channels {
        set: &'a ChannelSet,
        ops: &'a OperatorSet,
    },
    Secular {
        rates: &'a SecularRates,
        ops: &'a OperatorSet,
        cross: CrossTerms,
    },
}

impl Engine<'_> {
    pub fn ops(&self) -> &OperatorSet {
        match self {
            Engine::Qbm { ops, .. }
            | Engine::Channels { ops, .. }
            | Engine::Secular { ops, .. } => ops,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Qbm { .. } => "qbm",
            Engine::Channels { .. } => "channels",
            Engine::Secular { .. } => "secular",
        }
    }

    pub fn evolve(&self, rho0: &DensityMatrix, opts: &EvolveOptions) -> Result<Trajectory> {
        match *self {
            Engine::Qbm { coeffs, ops, sign } => evolve_qbm_with(rho0, coeffs, ops, opts, sign),
            Engine::Channels { set, ops } => evolve_channels(rho0, set, ops, opts),
            Engine::Secular { rates, ops, cross } => evolve_secular(rho0, rates, ops, opts, cross),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `1 − Tr ρ²`.
    #[default]
    Linear,
    VonNeumann,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Linear => "linear",
            Measure::VonNeumann => "von_neumann",
        }
    }

    /// Entropies along a trajectory, with rounding below zero clipped.
    fn curve(self, traj: &Trajectory) -> Vec<f64> {
        let raw = match self {
            Measure::Linear => traj.linear_entropies(),
            Measure::VonNeumann => traj.entropies(),
        };
        raw.into_iter().map(|h| h.max(0.0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SieveRecord {
    pub label: String,
    pub kind: &'static str,
    pub params: Vec<(String, f64)>,
    pub mean_number: f64,
    /// Entropy at every recorded time.
    pub curve: Vec<f64>,
    /// Entropy at each checkpoint.
    pub checkpoint_entropies: Vec<f64>,
    /// Mean of the checkpoint entropies.
    pub score: f64,
    /// 1-based; tied records share the smallest rank of their group.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excluded {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SieveReport {
    pub measure: Measure,
    pub checkpoints: Vec<f64>,
    /// Times at which every curve is sampled.
    pub times: Vec<f64>,
    /// Ranked, best first.
    pub records: Vec<SieveRecord>,
    /// Candidates whose evolution was aborted.
    pub excluded: Vec<Excluded>,
    /// Parameter points rejected before evolution.
    pub rejected: Vec<Rejected>,
    /// Labels attaining the smallest entropy at each checkpoint.
    pub checkpoint_winners: Vec<Vec<String>>,
    /// True when some candidate wins at every checkpoint.
    pub robust: bool,
    /// True when every candidate ties with the best one.
    pub degenerate: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Steps of each checkpoint and the resulting evolve options.
fn checkpoint_steps(checkpoints: &[f64], dt: f64) -> Result<(Vec<usize>, EvolveOptions)> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one checkpoint is required".into(),
        ));
    }
    let mut steps = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let s = EvolveOptions::new(t, dt).steps()?;
        if s == 0 {
            return Err(Error::InvalidParameter(format!(
                "checkpoint t = {t} must be positive"
            )));
        }
        steps.push(s);
    }
    let every = steps.iter().copied().fold(0, gcd);
    let last = *steps.iter().max().expect("non-empty");
    let opts = EvolveOptions::new(last as f64 * dt, dt).record_every(every);
    Ok((steps.iter().map(|s| s / every).collect(), opts))
}

fn ranked(mut records: Vec<SieveRecord>) -> Vec<SieveRecord> {
    records.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then_with(|| a.label.cmp(&b.label))
    });
    let mut rank = 1;
    for i in 0..records.len() {
        if i > 0 && records[i].score - records[i - 1].score > TIE_TOL {
            rank = i + 1;
        }
        records[i].rank = rank;
    }
    records
}

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::Aborted { .. } | Error::TruncationUnsafe(_))
}

/// Evolve every candidate of `family`, score and rank them.
///
/// Candidates run in parallel over the shared engine inputs. The result does
/// not depend on scheduling: each record is computed independently and the
/// final order is a total sort by `(score, label)`.
pub fn run_sieve(
    family: &StateFamily,
    engine: &Engine<'_>,
    checkpoints: &[f64],
    dt: f64,
    measure: Measure,
) -> Result<SieveReport> {
    if family.dim != engine.ops().dim() {
        return Err(Error::DimensionMismatch(family.dim, engine.ops().dim()));
    }
    let generated = generate_family(family)?;
    let (indices, opts) = checkpoint_steps(checkpoints, dt)?;

    let results = par::map(&generated.candidates, |c| engine.evolve(&c.state, &opts));
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    let mut times = Vec::new();
    let mut first_abort = None;
    for (c, res) in generated.candidates.iter().zip(results) {
        match res {
            Ok(traj) => {
                let curve = measure.curve(&traj);
                let checkpoint_entropies: Vec<f64> = indices.iter().map(|&i| curve[i]).collect();
                let score =
                    checkpoint_entropies.iter().sum::<f64>() / checkpoint_entropies.len() as f64;
                if times.is_empty() {
                    times = traj.times.clone();
                }
                records.push(SieveRecord {
                    label: c.label.clone(),
                    kind: c.kind,
                    params: c.params.clone(),
                    mean_number: c.mean_number,
                    curve,
                    checkpoint_entropies,
                    score,
                    rank: 0,
                });
            }
            Err(e) if is_abort(&e) => {
                excluded.push(Excluded {
                    label: c.label.clone(),
                    reason: e.to_string(),
                });
                first_abort.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(first_abort
            .unwrap_or_else(|| Error::InvalidParameter("every candidate was excluded".into())));
    }
    let records = ranked(records);

    let checkpoint_winners: Vec<Vec<String>> = (0..indices.len())
        .map(|k| {
            let best = records
                .iter()
                .map(|r| r.checkpoint_entropies[k])
                .fold(f64::INFINITY, f64::min);
            let mut w: Vec<String> = records
                .iter()
                .filter(|r| r.checkpoint_entropies[k] - best <= TIE_TOL)
                .map(|r| r.label.clone())
                .collect();
            w.sort();
            w
        })
        .collect();
    let robust = checkpoint_winners[0]
        .iter()
        .any(|l| checkpoint_winners.iter().all(|w| w.contains(l)));
    let degenerate = records.iter().all(|r| r.rank == 1);

    Ok(SieveReport {
        measure,
        checkpoints: indices.iter().map(|&i| times[i]).collect(),
        times,
        records,
        excluded,
        rejected: generated.rejected,
        checkpoint_winners,
        robust,
        degenerate,
    })
}

impl SieveReport {
    pub fn record(&self, label: &str) -> Option<&SieveRecord> {
        self.records.iter().find(|r| r.label == label)
    }

    pub fn winner(&self) -> &SieveRecord {
        &self.records[0]
    }

    /// One row per record: rank, identity, score, entropy at each checkpoint
    /// and the sweep-wide robustness flag.
    pub fn ranking_csv(&self) -> CsvTable {
        let mut header: Vec<String> = ["rank", "label", "kind", "params", "mean_number", "score"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(
            self.checkpoints
                .iter()
                .map(|t| format!("h_t{}", fmt_f64(*t))),
        );
        header.push("robust".into());
        let mut t = CsvTable::with_header(header);
        for r in &self.records {
            let params: Vec<String> = r
                .params
                .iter()
                .map(|(k, v)| format!("{k}={}", num(*v)))
                .collect();
            let mut row = vec![
                r.rank.to_string(),
                r.label.clone(),
                r.kind.to_string(),
                params.join(";"),
                fmt_f64(r.mean_number),
                fmt_f64(r.score),
            ];
            row.extend(r.checkpoint_entropies.iter().map(|h| fmt_f64(*h)));
            row.push(self.robust.to_string());
            t.push(row);
        }
        t
    }

    /// Entropy against time, one column per record in rank order.
    pub fn curves_csv(&self) -> CsvTable {
        let mut header = vec!["t".to_string()];
        header.extend(self.records.iter().map(|r| r.label.clone()));
        let mut t = CsvTable::with_header(header);
        for (i, time) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*time)];
            row.extend(self.records.iter().map(|r| fmt_f64(r.curve[i])));
            t.push(row);
        }
        t
    }

    /// Checkpoint winners, one row per checkpoint.
    pub fn winners_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "winners"]);
        for (time, w) in self.checkpoints.iter().zip(&self.checkpoint_winners) {
            t.push(vec![fmt_f64(*time), w.join(";")]);
        }
        t
    }
}

/// Continuous state manifolds searched by [`minimize_entropy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContinuousFamily {
    /// Parameters `(Re α, Im α)`.
    Coherent { re: Axis, im: Axis },
    /// Parameters `(r, θ)` at fixed displacement.
    Squeezed {
        r: Axis,
        theta: Axis,
        #[serde(default)]
        alpha: [f64; 2],
    },
}

impl ContinuousFamily {
    fn axes(&self) -> [Axis; 2] {
        match *self {
            ContinuousFamily::Coherent { re, im } => [re, im],
            ContinuousFamily::Squeezed { r, theta, .. } => [r, theta],
        }
    }

    pub fn names(&self) -> [&'static str; 2] {
        match self {
            ContinuousFamily::Coherent { .. } => ["re", "im"],
            ContinuousFamily::Squeezed { .. } => ["r", "theta"],
        }
    }

    pub fn state(&self, p: &[f64], dim: usize) -> Result<DensityMatrix> {
        let psi = match *self {
            ContinuousFamily::Coherent { .. } => coherent(p[0], p[1], dim)?,
            ContinuousFamily::Squeezed { alpha, .. } => {
                squeezed_vector(C64::new(alpha[0], alpha[1]), p[0], p[1], dim)?
            }
        };
        DensityMatrix::from_pure(&psi)
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub score: f64,
    /// Grid points plus simplex evaluations.
    pub evaluations: usize,
    pub converged: bool,
    /// Every grid point scored within [`TIE_TOL`] of the best.
    pub degenerate: bool,
}

/// Grid scan over the family's axes, then Nelder–Mead from the best grid
/// point. Points outside the axis box, or that the objective rejects with
/// `None`, count as `+∞`.
///
/// The objective is arbitrary, which also makes this the test hook for the
/// optimizer itself.
pub fn minimize_functional<F>(
    objective: F,
    family: &ContinuousFamily,
    nm: &NelderMeadOptions,
) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Option<f64> + Sync + Send,
{
    let axes = family.axes();
    for (a, n) in axes.iter().zip(family.names()) {
        a.validate(n)?;
    }
    let grid: Vec<[f64; 2]> = axes[0]
        .values()
        .into_iter()
        .flat_map(|x| axes[1].values().into_iter().map(move |y| [x, y]))
        .collect();
    let scores = par::map(&grid, |p| {
        objective(p)
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    });
    let (best_i, best) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, v)| (i, *v))
        .expect("axes have count >= 1");
    if !best.is_finite() {
        return Err(Error::InvalidParameter(
            "objective rejected every grid point".into(),
        ));
    }
    let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    let degenerate = finite.len() > 1 && finite.iter().all(|s| (s - best).abs() <= TIE_TOL);

    let inside = |p: &[f64]| {
        axes.iter()
            .zip(p)
            .all(|(a, v)| *v >= a.min - 1e-15 && *v <= a.max + 1e-15)
    };
    let steps: Vec<f64> = axes
        .iter()
        .map(|a| if a.count > 1 { a.step() } else { 0.0 })
        .collect();
    let free = steps.iter().any(|&s| s > 0.0);
    let mut opts = nm.clone();
    opts.initial_step = steps
        .iter()
        .map(|&s| if s > 0.0 { 0.5 * s } else { 0.0 })
        .collect();

    let m = if degenerate || !free {
        Minimum {
            x: grid[best_i].to_vec(),
            value: best,
            evaluations: 0,
            converged: true,
        }
    } else {
        let m = nelder_mead(
            |p| {
                if inside(p) {
                    objective(p).unwrap_or(f64::INFINITY)
                } else {
                    f64::INFINITY
                }
            },
            &grid[best_i],
            &opts,
        );
        if m.value <= best {
            m
        } else {
            Minimum {
                x: grid[best_i].to_vec(),
                value: best,
                ..m
            }
        }
    };
    Ok(Optimum {
        params: m.x,
        score: m.value,
        evaluations: grid.len() + m.evaluations,
        converged: m.converged,
        degenerate,
    })
}

/// Find the member of a continuous family producing the least entropy at
/// `t_star`.
pub fn minimize_entropy(
    engine: &Engine<'_>,
    measure: Measure,
    family: &ContinuousFamily,
    t_star: f64,
    dt: f64,
    nm: &NelderMeadOptions,
) -> Result<Optimum> {
    let opts = EvolveOptions::new(t_star, dt).record_every(usize::MAX);
    opts.steps()?;
    let dim = engine.ops().dim();
    minimize_functional(
        |p| {
            let rho = family.state(p, dim).ok()?;
            let traj = engine.evolve(&rho, &opts).ok()?;
            measure.curve(&traj).last().copied()
        },
        family,
        nm,
    )
}
