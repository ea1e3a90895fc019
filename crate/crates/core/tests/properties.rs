use einsel::bath::BathModel;
use einsel::hilbert::{
    build_operators, coherent_state, linear_entropy, trace_distance, von_neumann_entropy,
    DensityMatrix, SystemParams,
};
use einsel::solvers::{
    evolve_channels, evolve_secular, secular_rates, ChannelSet, CrossTerms, EvolveOptions,
};
use einsel::{CVec, C64};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn superposition(n: usize, m: usize, phi: f64, dim: usize) -> DensityMatrix {
    let mut psi = CVec::zeros(dim);
    psi[n] = C64::new(1.0, 0.0);
    psi[m] = C64::from_polar(1.0, phi);
    DensityMatrix::from_pure(&(psi.unscale(2f64.sqrt()))).unwrap()
}

fn random_pure(amps: &[(f64, f64)], dim: usize) -> DensityMatrix {
    let mut psi = CVec::zeros(dim);
    for (k, &(a, b)) in amps.iter().enumerate() {
        psi[k] = C64::new(a, b);
    }
    let norm = psi.norm();
    DensityMatrix::from_pure(&psi.unscale(norm)).unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 6).prop_filter("nonzero vector", |v| {
        v.iter().any(|(a, b)| a.abs() + b.abs() > 0.1)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pure_states_have_unit_purity(amps in amplitudes()) {
        let rho = random_pure(&amps, 6);
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        prop_assert!((rho.purity() - 1.0).abs() < 1e-12);
        prop_assert!(linear_entropy(&rho).abs() < 1e-12);
        prop_assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-9);
    }

    #[test]
    fn trace_distance_is_a_bounded_symmetric_metric(a in amplitudes(), b in amplitudes()) {
        let (ra, rb) = (random_pure(&a, 6), random_pure(&b, 6));
        let ab = trace_distance(&ra, &rb).unwrap();
        let ba = trace_distance(&rb, &ra).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!(trace_distance(&ra, &ra).unwrap() < 1e-12);
    }

    #[test]
    fn coherent_state_mean_number_is_alpha_squared(re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let dim = 48;
        let ops = build_operators(SystemParams::with_dim(dim)).unwrap();
        let rho = coherent_state(C64::new(re, im), dim).unwrap();
        let n = rho.expectation(&ops.number_operator()).re;
        prop_assert!((n - (re * re + im * im)).abs() < 1e-9);
    }

    #[test]
    fn secular_entropy_ignores_the_relative_phase(
        n in 0usize..3,
        gap in 1usize..4,
        phi in 0.0..TAU,
    ) {
        let dim = 8;
        let ops = build_operators(SystemParams::with_dim(dim)).unwrap();
        let set = ChannelSet::new(&BathModel::new(0.01).with_coupling_sq(50.0), &ops).unwrap();
        let rates = secular_rates(&set, &ops).unwrap();
        let opts = EvolveOptions::new(2.0 * TAU, TAU / 200.0);
        let run = |phase: f64| {
            let rho0 = superposition(n, n + gap, phase, dim);
            evolve_secular(&rho0, &rates, &ops, &opts, CrossTerms::Off).unwrap().linear_entropies()
        };
        let reference = run(0.0);
        let rotated = run(phi);
        for (a, b) in reference.iter().zip(&rotated) {
            prop_assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        prop_assert!(reference.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn channel_evolution_is_deterministic(amps in amplitudes()) {
        let ops = build_operators(SystemParams::with_dim(12)).unwrap();
        let set = ChannelSet::new(&BathModel::new(0.01).with_coupling_sq(1.0), &ops).unwrap();
        let rho0 = random_pure(&amps, 12);
        let opts = EvolveOptions::new(TAU / 4.0, TAU / 200.0);
        let a = evolve_channels(&rho0, &set, &ops, &opts).unwrap();
        let b = evolve_channels(&rho0, &set, &ops, &opts).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert_eq!(x.matrix(), y.matrix());
        }
        let h = a.linear_entropies();
        prop_assert!(h[1] >= -1e-12);
    }
}
