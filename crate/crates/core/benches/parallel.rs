use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use einsel::bath::{build_kernel_table, uniform_grid, BathModel};
use einsel::hilbert::{build_operators, DensityMatrix, SystemParams};
use einsel::oracle::{evolve_exact, BathState, JointModel, OracleMode};
use einsel::sieve::{run_sieve, Axis, Engine, FamilyKind, Measure, StateFamily};
use einsel::solvers::{secular_rates, ChannelSet, CrossTerms};
use einsel::{CVec, C64};
use rayon::{ThreadPool, ThreadPoolBuilder};
use std::f64::consts::PI;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        (
            "sequential",
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (
            "parallel",
            ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap(),
        ),
    ]
}

fn kernel_table(c: &mut Criterion) {
    let model = BathModel::new(0.5).with_nodes(256);
    let grid = uniform_grid(20.0 * PI, PI / 200.0);
    let mut group = c.benchmark_group("kernel_table");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| build_kernel_table(&model, &grid).unwrap()))
        });
    }
    group.finish();
}

fn sieve_sweep(c: &mut Criterion) {
    let sys = SystemParams::with_dim(16);
    let ops = build_operators(sys).unwrap();
    let set = ChannelSet::new(&BathModel::new(0.3).with_coupling_sq(10.0), &ops).unwrap();
    let rates = secular_rates(&set, &ops).unwrap();
    let engine = Engine::Secular {
        rates: &rates,
        ops: &ops,
        cross: CrossTerms::On(Default::default()),
    };
    let family = StateFamily::new(
        16,
        vec![
            FamilyKind::NumberStates { n_max: 3 },
            FamilyKind::CoherentGrid {
                re: Axis::new(-1.0, 1.0, 3),
                im: Axis::new(-1.0, 1.0, 3),
            },
        ],
    );
    let checkpoints = [2.0 * PI, 4.0 * PI];
    let mut group = c.benchmark_group("sieve_sweep");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    run_sieve(
                        &family,
                        &engine,
                        &checkpoints,
                        2.0 * PI / 200.0,
                        Measure::Linear,
                    )
                    .unwrap()
                })
            })
        });
    }
    group.finish();
}

fn oracle_ensemble(c: &mut Criterion) {
    let model = JointModel {
        modes: vec![OracleMode::new(0.7, 1.0, 5), OracleMode::new(1.3, 1.0, 5)],
        ..JointModel::default()
    };
    let mut psi = CVec::zeros(model.system.fock_dim);
    psi[0] = C64::new(1.0, 0.0);
    psi[1] = C64::new(1.0, 0.0);
    let rho0 = DensityMatrix::from_pure(&psi).unwrap();
    let bath = BathState::FockEnsemble { temperature: 0.25 };
    let times: Vec<f64> = (1..=8).map(|i| i as f64 * PI / 4.0).collect();
    let mut group = c.benchmark_group("oracle_ensemble");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| evolve_exact(&model, &rho0, bath, &times).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_table, sieve_sweep, oracle_ensemble);
criterion_main!(benches);
