//! Subcommand pipelines.
//!
//! Each command builds what it needs from a resolved [`Scenario`], writes its
//! CSV artifacts, echoes the resolved configuration to `resolved.toml` and
//! finishes with `manifest.toml` (wall time and a diagnostics summary). If a
//! command fails, every file it wrote is removed again.

use crate::bath::{build_kernel_table, KernelTable};
use crate::coeffs::{adiabatic_closed_form, build_coefficients, CoefficientTable};
use crate::hilbert::{build_operators, OperatorSet};
use crate::optimize::NelderMeadOptions;
use crate::oracle::perturbative_scaling_check;
use crate::output::{fmt_f64, CsvTable};
use crate::scenario::{CoefficientMode, EngineKind, OracleSection, Scenario};
use crate::sieve::{minimize_entropy, run_sieve, Engine};
use crate::solvers::{secular_rates, ChannelSet, SecularRates};
use crate::{par, Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Kernels,
    Coeffs,
    Evolve,
    Rates,
    Sieve,
    Oracle,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Kernels,
        Command::Coeffs,
        Command::Evolve,
        Command::Rates,
        Command::Sieve,
        Command::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Kernels => "kernels",
            Command::Coeffs => "coeffs",
            Command::Evolve => "evolve",
            Command::Rates => "rates",
            Command::Sieve => "sieve",
            Command::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown command `{s}`")))
    }
}

/// Files written so far; removed again unless the run completes.
struct Sink {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    done: bool,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            done: false,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.write(name, &table.render())
    }
}

impl Drop for Sink {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary(pub BTreeMap<String, Value>);

impl Summary {
    fn num(&mut self, key: &str, v: f64) {
        self.0.insert(key.into(), Value::Float(v));
    }

    fn int(&mut self, key: &str, v: usize) {
        self.0.insert(key.into(), Value::Integer(v as i64));
    }

    fn text(&mut self, key: &str, v: impl Into<String>) {
        self.0.insert(key.into(), Value::String(v.into()));
    }

    fn flag(&mut self, key: &str, v: bool) {
        self.0.insert(key.into(), Value::Boolean(v));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Summary,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    parallel: bool,
    wall_time_seconds: f64,
    artifacts: Vec<String>,
    derived: BTreeMap<&'a str, f64>,
    summary: &'a Summary,
}

fn kernels(s: &Scenario) -> Result<KernelTable> {
    build_kernel_table(&s.bath_model(), &s.kernel_grid())
}

fn coefficients(s: &Scenario, k: &KernelTable) -> Result<CoefficientTable> {
    let e2 = s.bath.coupling_sq;
    match s.solver.coefficients {
        CoefficientMode::Quadrature => build_coefficients(k, &s.system, e2),
        CoefficientMode::Adiabatic => adiabatic_closed_form(k, &s.system, e2),
    }
}

fn channel_set(s: &Scenario, ops: &OperatorSet) -> Result<ChannelSet> {
    Ok(ChannelSet::new(&s.bath_model(), ops)?.with_frozen_kernels(s.solver.frozen_kernels))
}

/// Owned inputs for whichever engine the scenario selects.
pub struct Prepared {
    pub ops: OperatorSet,
    pub coeffs: Option<CoefficientTable>,
    pub channels: Option<ChannelSet>,
    pub rates: Option<SecularRates>,
}

impl Prepared {
    pub fn new(s: &Scenario) -> Result<Self> {
        let ops = build_operators(s.system)?;
        let mut p = Prepared {
            ops,
            coeffs: None,
            channels: None,
            rates: None,
        };
        match s.solver.engine {
            EngineKind::Qbm => p.coeffs = Some(coefficients(s, &kernels(s)?)?),
            EngineKind::Channels => p.channels = Some(channel_set(s, &p.ops)?),
            EngineKind::Secular => {
                let set = channel_set(s, &p.ops)?;
                p.rates = Some(secular_rates(&set, &p.ops)?);
            }
        }
        Ok(p)
    }

    pub fn engine(&self, s: &Scenario) -> Engine<'_> {
        match s.solver.engine {
            EngineKind::Qbm => Engine::Qbm {
                coeffs: self.coeffs.as_ref().expect("prepared for qbm"),
                ops: &self.ops,
                sign: s.solver.f_sign,
            },
            EngineKind::Channels => Engine::Channels {
                set: self.channels.as_ref().expect("prepared for channels"),
                ops: &self.ops,
            },
            EngineKind::Secular => Engine::Secular {
                rates: self.rates.as_ref().expect("prepared for secular"),
                ops: &self.ops,
                cross: s.cross_terms(),
            },
        }
    }
}

fn run_kernels(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let k = kernels(s)?;
    sink.csv("kernels.csv", &k.to_csv())?;
    sum.num("F_H_0", k.f_h[0]);
    sum.num("F_R_0", k.f_r[0]);
    sum.num("flatness_one_period", k.flatness(s.period()));
    sum.int("grid_points", k.times.len());
    Ok(())
}

fn run_coeffs(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let k = kernels(s)?;
    let c = coefficients(s, &k)?;
    sink.csv("coefficients.csv", &c.to_csv())?;
    let max = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    sum.num("max_abs_omega_ren_sq", max(&c.omega_ren_sq));
    sum.num("max_abs_gamma", max(&c.gamma));
    sum.num("max_abs_D", max(&c.diffusion));
    sum.num("max_abs_f", max(&c.anomalous));
    sum.text("provenance", format!("{:016x}", c.provenance));
    Ok(())
}

fn run_evolve(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let prepared = Prepared::new(s)?;
    let engine = prepared.engine(s);
    let rho0 = s.initial.state(s.system.fock_dim)?;
    let traj = engine.evolve(&rho0, &s.evolve_options())?;
    let elements: Vec<(usize, usize)> = s.output.elements.iter().map(|[n, m]| (*n, *m)).collect();
    sink.csv("trajectory.csv", &traj.to_csv(&elements))?;
    sum.text("engine", engine.name());
    sum.int("steps", s.steps());
    sum.num("trace_drift_rate", traj.trace_drift_rate());
    sum.num("max_hermiticity_error", traj.max_hermiticity_error());
    sum.num("min_eigenvalue", traj.min_eigenvalue());
    sum.num("max_population_change", traj.max_population_change());
    let last = traj
        .diagnostics
        .last()
        .expect("trajectory has the initial state");
    sum.num("final_entropy", last.entropy);
    sum.num("final_linear_entropy", last.linear_entropy);
    Ok(())
}

fn run_rates(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let ops = build_operators(s.system)?;
    let set = channel_set(s, &ops)?;
    let rates = secular_rates(&set, &ops)?;
    sink.csv("rates.csv", &rates.to_csv())?;
    sum.num("averaging_period", rates.averaging_period);
    sum.num(
        "max_gamma_sq",
        rates.gamma_sq.iter().fold(0.0, |a: f64, x| a.max(*x)),
    );
    sum.int("channels", set.len());
    Ok(())
}

fn run_sieve_cmd(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let section = s
        .sieve
        .as_ref()
        .ok_or_else(|| Error::config("sieve", "the sieve command needs a [sieve] section"))?;
    let family = s.family().expect("section present");
    let prepared = Prepared::new(s)?;
    let engine = prepared.engine(s);
    let report = run_sieve(&family, &engine, &s.checkpoints(), s.dt(), section.measure)?;
    sink.csv("sieve_ranking.csv", &report.ranking_csv())?;
    sink.csv("sieve_curves.csv", &report.curves_csv())?;
    sink.csv("sieve_winners.csv", &report.winners_csv())?;
    let mut dropped = CsvTable::new(&["label", "stage", "reason"]);
    for r in &report.rejected {
        dropped.push(vec![r.label.clone(), "generation".into(), r.reason.clone()]);
    }
    for r in &report.excluded {
        dropped.push(vec![r.label.clone(), "evolution".into(), r.reason.clone()]);
    }
    sink.csv("sieve_excluded.csv", &dropped)?;
    sum.text("engine", engine.name());
    sum.text("measure", section.measure.name());
    sum.text("winner", report.winner().label.clone());
    sum.num("winner_score", report.winner().score);
    sum.flag("robust", report.robust);
    sum.flag("degenerate", report.degenerate);
    sum.int("candidates", report.records.len());
    sum.int("excluded", report.excluded.len() + report.rejected.len());

    if let Some(mz) = &section.minimize {
        let mut nm = NelderMeadOptions::new(vec![0.0, 0.0]);
        nm.max_evals = mz.max_evals;
        let t_star = (mz.t_star_periods * s.solver.steps_per_period as f64).round() * s.dt();
        let opt = minimize_entropy(&engine, section.measure, &mz.family, t_star, s.dt(), &nm)?;
        let names = mz.family.names();
        let mut t = CsvTable::new(&[
            names[0],
            names[1],
            "score",
            "evaluations",
            "converged",
            "degenerate",
        ]);
        t.push(vec![
            fmt_f64(opt.params[0]),
            fmt_f64(opt.params[1]),
            fmt_f64(opt.score),
            opt.evaluations.to_string(),
            opt.converged.to_string(),
            opt.degenerate.to_string(),
        ]);
        sink.csv("sieve_minimum.csv", &t)?;
        sum.num("minimum_score", opt.score);
        sum.flag("minimum_converged", opt.converged);
    }
    Ok(())
}

fn run_oracle(s: &Scenario, sink: &mut Sink, sum: &mut Summary) -> Result<()> {
    let default = OracleSection::default();
    let o = s.oracle.as_ref().unwrap_or(&default);
    let joint = s.joint_model(o, 0.0);
    let rho0 = s.initial.state(o.fock_dim)?;
    let report = perturbative_scaling_check(
        &joint,
        &rho0,
        o.bath,
        &o.couplings,
        s.oracle_t_star(o),
        s.oracle_dt(o),
        o.f_sign,
    )?;
    sink.csv("oracle_scaling.csv", &report.to_csv())?;
    sum.int("joint_dim", joint.dim());
    sum.flag("monotone", report.monotone);
    for (i, r) in report.ratios().iter().enumerate() {
        sum.num(&format!("ratio_{i}"), *r);
    }
    Ok(())
}

/// Run one subcommand, writing artifacts into `out_dir`.
pub fn run_command(cmd: Command, s: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut sink = Sink::open(out_dir)?;
    let mut summary = Summary::default();
    sink.write("resolved.toml", &s.to_toml())?;
    match cmd {
        Command::Kernels => run_kernels(s, &mut sink, &mut summary)?,
        Command::Coeffs => run_coeffs(s, &mut sink, &mut summary)?,
        Command::Evolve => run_evolve(s, &mut sink, &mut summary)?,
        Command::Rates => run_rates(s, &mut sink, &mut summary)?,
        Command::Sieve => run_sieve_cmd(s, &mut sink, &mut summary)?,
        Command::Oracle => run_oracle(s, &mut sink, &mut summary)?,
    }

    let derived = BTreeMap::from([
        ("period", s.period()),
        ("dt", s.dt()),
        ("t_max", s.t_max()),
        ("kernel_spacing", s.kernel_spacing()),
        ("kernel_t_max", *s.kernel_grid().last().unwrap_or(&0.0)),
        ("k_max", s.bath_model().k_max),
    ]);
    let mut artifacts: Vec<String> = sink
        .written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    artifacts.push("manifest.toml".into());
    let manifest = Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        parallel: par::is_parallel(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts,
        derived,
        summary: &summary,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    sink.write("manifest.toml", &text)?;
    sink.done = true;
    Ok(RunOutcome {
        artifacts: sink.written.clone(),
        summary,
    })
}
