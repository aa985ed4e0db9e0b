mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use qudit_control::linalg::{max_abs, CMat};
use qudit_control::measurement::*;
use qudit_control::propagate::evolve_state;
use qudit_control::rng::seeded;
use qudit_control::*;

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx` (Golub–Welsch).
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            (
                eig.eigenvalues[k],
                std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2),
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[test]
fn quasimomentum_mixture_matches_quadrature() {
    let mut rng = seeded(12);
    let ramp = random_ramp(&mut rng, 3, 120, 0.05, 1.5);
    let cfg = LatticeConfig::new(5.0);
    let psi = momentum_basis_state(&cfg, 1).unwrap();
    let sigma = 0.01;
    let noise = NoiseModel {
        quasimomentum_sigma: sigma,
        ..NoiseModel::noiseless()
    };
    let sampled = quasimomentum_mixture(&ramp, &cfg, &noise, &psi, 10_000).unwrap();
    let mut quad = CMat::zeros(cfg.dim(), cfg.dim());
    for (x, w) in gauss_hermite(24) {
        let q = std::f64::consts::SQRT_2 * sigma * x;
        let out = evolve_state(&ramp, &cfg.with_quasimomentum(q), &psi).unwrap();
        quad +=
            (&out * out.adjoint()) * qudit_control::linalg::c(w / std::f64::consts::PI.sqrt(), 0.0);
    }
    let err = max_abs(&(sampled - &quad));
    assert!(err < 1e-3, "max deviation {err:e}");
    // The spread matters at this σ, so the check is not vacuous.
    let sharp = evolve_state(&ramp, &cfg, &psi).unwrap();
    let shift = max_abs(&(&sharp * sharp.adjoint() - quad));
    assert!(shift > 2.0 * err, "shift {shift:e} vs deviation {err:e}");
}

#[test]
fn noiseless_images_are_plain_evolution() {
    let mut rng = seeded(4);
    let ramp = random_ramp(&mut rng, 4, 200, 0.05, 1.0);
    let cfg = LatticeConfig::new(5.5);
    let psi = momentum_basis_state(&cfg, -1).unwrap();
    let exact = evolve_state(&ramp, &cfg, &psi).unwrap();
    let seq = Sequence {
        gate: Some(&ramp),
        probe: &Probe::Bare,
    };
    let img = simulate_image(
        seq,
        &cfg,
        &NoiseModel::noiseless(),
        0.0,
        &psi,
        &mut seeded(0),
    )
    .unwrap();
    for (p, a) in img.populations.iter().zip(exact.iter()) {
        assert!((p - a.norm_sqr()).abs() < 1e-14);
    }
    assert_eq!(img.depth, cfg.depth);
}

#[test]
fn images_repeat_for_a_seed() {
    let mut rng = seeded(6);
    let ramp = random_ramp(&mut rng, 3, 100, 0.05, 1.0);
    let cfg = LatticeConfig::new(5.5);
    let psi = momentum_basis_state(&cfg, 1).unwrap();
    let noise = NoiseModel::experimental_preset(21);
    let seq = Sequence {
        gate: Some(&ramp),
        probe: &Probe::Bare,
    };
    let a = simulate_image(seq, &cfg, &noise, 0.01, &psi, &mut image_rng(&noise, 3, 4)).unwrap();
    let b = simulate_image(seq, &cfg, &noise, 0.01, &psi, &mut image_rng(&noise, 3, 4)).unwrap();
    let other =
        simulate_image(seq, &cfg, &noise, 0.01, &psi, &mut image_rng(&noise, 3, 5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, other);
}

#[test]
fn quasimomentum_spread_lowers_purity() {
    use qudit_control::sqpt::*;
    let mut rng = seeded(30);
    let ramp = random_ramp(&mut rng, 5, 300, 0.05, 2.0);
    let cfg = LatticeConfig::new(5.5);
    let map = SubspaceMap::symmetric_pair(2);
    let set = build_input_states(2, &map).unwrap();
    let settings = SqptSettings::compact(&cfg).unwrap();
    let model = MeasurementModel::new(&cfg, &settings.basis, &settings.probes).unwrap();
    let purity_at = |sigma: f64| {
        let noise = NoiseModel {
            quasimomentum_sigma: sigma,
            ..NoiseModel::noiseless()
        };
        let (ds, _) = simulate_dataset(Some(&ramp), &cfg, &set, &noise, &settings).unwrap();
        let est = mle_state_tomography(&model, &ds.states[2].records, &MleConfig::default(), None)
            .unwrap();
        est.purity
    };
    let sharp = purity_at(0.0);
    let spread = purity_at(0.02);
    assert!(spread < sharp, "{spread} vs {sharp}");
}
