mod common;

use common::*;
use proptest::prelude::*;
use qudit_control::gates::{gate_matrix, GateKind};
use qudit_control::lattice::build_hamiltonian;
use qudit_control::linalg::{c, hermiticity_error, identity, max_abs, unitarity_error};
use qudit_control::propagate::{evolve_phases, project_to_subspace, step_propagator, StepFactory};
use qudit_control::rng::seeded;
use qudit_control::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_hermitian(s in 0.0f64..12.0, q in -0.5f64..=0.5, phi in -10.0f64..10.0) {
        let cfg = LatticeConfig::new(s).with_quasimomentum(q);
        let h = build_hamiltonian(&cfg, phi);
        prop_assert!(hermiticity_error(h.matrix()) < 1e-12);
    }

    #[test]
    fn propagators_are_unitary(seed in any::<u64>(), s in 0.0f64..10.0, k in 1usize..2000) {
        let mut rng = seeded(seed);
        let ramp = random_ramp(&mut rng, 4, k, 0.02, 2.0);
        let u = evolve(&ramp, &LatticeConfig::new(s)).unwrap().unitary;
        prop_assert!(unitarity_error(&u) < 1e-10);
    }

    #[test]
    fn step_matches_series_exponential(s in 0.0f64..10.0, phi in -4.0f64..4.0, dt in 1e-3f64..0.2) {
        let cfg = LatticeConfig::new(s);
        let h = build_hamiltonian(&cfg, phi);
        let oracle = expm_taylor(h.matrix(), dt);
        prop_assert!(max_abs(&(step_propagator(&h, dt).unwrap() - &oracle)) < 1e-12);
        let factory = StepFactory::new(&cfg, dt).unwrap();
        prop_assert!(max_abs(&(factory.step(phi) - oracle)) < 1e-12);
    }

    #[test]
    fn truncation_is_stable(seed in any::<u64>(), s in 0.0f64..8.0, k in 1usize..200) {
        let mut rng = seeded(seed);
        let ramp = random_ramp(&mut rng, 3, k, 10.0 / 200.0, 1.5);
        let map = SubspaceMap::centered(2);
        let small = LatticeConfig::new(s).with_l_max(10);
        let large = LatticeConfig::new(s).with_l_max(14);
        let a = project_to_subspace(&evolve(&ramp, &small).unwrap().unitary, &map, &small).unwrap();
        let b = project_to_subspace(&evolve(&ramp, &large).unwrap().unitary, &map, &large).unwrap();
        prop_assert!(max_abs(&(a - b)) < 1e-8);
    }

    #[test]
    fn reversed_conjugate_steps_undo_the_ramp(seed in any::<u64>(), s in 0.0f64..10.0, k in 1usize..500) {
        let mut rng = seeded(seed);
        let ramp = random_ramp(&mut rng, 4, k, 0.03, 2.0);
        let cfg = LatticeConfig::new(s);
        let evo = evolve(&ramp, &cfg).unwrap();
        let undone = ramp
            .reversed_samples()
            .iter()
            .fold(evo.unitary.clone(), |acc, &phi| evo.factory.step(phi).adjoint() * acc);
        prop_assert!(max_abs(&(undone - identity(cfg.dim()))) < 1e-9);
    }

    #[test]
    fn fidelity_ignores_global_phase(seed in any::<u64>(), gamma in -10.0f64..10.0) {
        let mut rng = seeded(seed);
        let u = qudit_control::rng::haar_unitary(&mut rng, 3);
        let t = qudit_control::rng::haar_unitary(&mut rng, 3);
        let a = unitary_fidelity(&u, &t).unwrap();
        let b = unitary_fidelity(&(&u * c(gamma.cos(), gamma.sin())), &t).unwrap();
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn units_round_trip(t in 1e-9f64..1e-2) {
        let units = UnitTable::default();
        let back = units.dimensionless_to_seconds(units.seconds_to_dimensionless(t));
        prop_assert!(((back - t) / t).abs() < 1e-12);
    }

    #[test]
    fn spectrum_stops_at_the_cutoff(seed in any::<u64>(), n_max in 1usize..8) {
        let mut rng = seeded(seed);
        let ramp = random_ramp(&mut rng, n_max, 400, 0.05, 1.0);
        let f0 = 1.0 / ramp.t_f;
        for (f, mag) in qudit_control::ramp::spectrum(&ramp) {
            if f > (n_max as f64 + 0.5) * f0 && f < 0.5 / ramp.dt - f0 {
                prop_assert!(mag < 1e-12, "content {mag} at {f}");
            }
        }
    }
}

#[test]
fn builtin_gates_are_unitary() {
    for (kind, d) in [
        (GateKind::X, 2),
        (GateKind::Y, 2),
        (GateKind::Z, 2),
        (GateKind::H, 2),
        (GateKind::W, 2),
        (GateKind::Identity, 4),
        (GateKind::X12, 3),
        (GateKind::Dft, 5),
    ] {
        assert!(
            unitarity_error(&gate_matrix(kind, d).unwrap()) < 1e-12,
            "{kind}"
        );
    }
}

#[test]
fn free_evolution_target_converges_immediately() {
    let opt = OptimizerConfig::from_physical(&UnitTable::default(), 50e-6, 500e-9, 125e3).unwrap();
    let cfg = LatticeConfig::new(5.0);
    let zero = PhaseRamp::zero(opt.n_max, opt.t_f, opt.dt).unwrap();
    let map = SubspaceMap::symmetric_pair(1);
    let free = project_to_subspace(&evolve(&zero, &cfg).unwrap().unitary, &map, &cfg).unwrap();
    // Projected free evolution has a small loss; normalise its polar part.
    let svd = free.svd(true, true);
    let polar = svd.u.unwrap() * svd.v_t.unwrap();
    let target = TargetGate::new("free", polar, map).unwrap();
    let mut config = opt.clone();
    config.fidelity_goal = direct_fidelity(&zero, &cfg, &target) - 1e-12;
    config.initial_ramp = Some(zero);
    let report = grape_optimize(&config, &RobustnessEnsemble::single(5.0), &target, &cfg).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(report.termination, Termination::GoalReached);
}

#[test]
fn accepted_iterations_never_lower_the_fidelity() {
    let mut opt =
        OptimizerConfig::from_physical(&UnitTable::default(), 100e-6, 500e-9, 125e3).unwrap();
    opt.max_iters = 60;
    opt.fidelity_goal = 1.0;
    let target = TargetGate::builtin(GateKind::X, SubspaceMap::symmetric_pair(1)).unwrap();
    let ens = RobustnessEnsemble::around(5.5, 0.3, 3).unwrap();
    let a = grape_optimize(&opt, &ens, &target, &LatticeConfig::new(5.5)).unwrap();
    assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
    let b = grape_optimize(&opt, &ens, &target, &LatticeConfig::new(5.5)).unwrap();
    assert_eq!(a.ramp, b.ramp);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn ensemble_mean_is_recomputed_exactly() {
    let mut rng = seeded(3);
    let ramp = random_ramp(&mut rng, 5, 300, 0.05, 1.0);
    let target = TargetGate::builtin(GateKind::X, SubspaceMap::symmetric_pair(1)).unwrap();
    let cfg = LatticeConfig::new(5.5);
    let ens = RobustnessEnsemble::around(5.5, 0.3, 3).unwrap();
    let value = robust_objective(&ramp, &ens, &target, &cfg).unwrap();
    let mean = [5.2, 5.5, 5.8]
        .iter()
        .map(|&s| direct_fidelity(&ramp, &cfg.with_depth(s), &target))
        .sum::<f64>()
        / 3.0;
    assert!((value.mean - mean).abs() < 1e-14);
    let sweep = control::infidelity_sweep(&ramp, &target, &[5.2, 5.8], 0.0, &cfg).unwrap();
    assert!((sweep[0].infidelity - (1.0 - value.samples[0].fidelity)).abs() < 1e-14);
}

#[test]
fn phases_match_direct_hamiltonian_products() {
    let mut rng = seeded(5);
    let ramp = random_ramp(&mut rng, 3, 40, 0.05, 1.0);
    let cfg = LatticeConfig::new(4.0).with_quasimomentum(0.2);
    let direct = ramp
        .samples()
        .iter()
        .fold(identity(cfg.dim()), |acc, &phi| {
            expm_taylor(build_hamiltonian(&cfg, phi).matrix(), ramp.dt) * acc
        });
    let factory = StepFactory::new(&cfg, ramp.dt).unwrap();
    let gauge = evolve_phases(&factory, &ramp.samples(), identity(cfg.dim()));
    assert!(max_abs(&(direct - gauge)) < 1e-11);
}
