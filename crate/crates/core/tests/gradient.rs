mod common;

use common::*;
use qudit_control::gates::GateKind;
use qudit_control::rng::seeded;
use qudit_control::*;
use rand::Rng;

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = seeded(2024);
    let kinds = [
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::H,
        GateKind::W,
    ];
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let s = rng.random_range(1.0..8.0);
        let q = if i % 5 == 0 {
            rng.random_range(-0.2..0.2)
        } else {
            0.0
        };
        let cfg = LatticeConfig::new(s).with_quasimomentum(q);
        let target = if i % 10 == 9 {
            TargetGate::builtin(GateKind::X12, SubspaceMap::centered(1)).unwrap()
        } else {
            TargetGate::builtin(
                kinds[i % kinds.len()],
                SubspaceMap::symmetric_pair(1 + (i % 2) as i64),
            )
            .unwrap()
        };
        let ramp = random_ramp(&mut rng, 3, 80, 0.05, 1.5);
        let errs = gradient_errors(&ramp, &cfg, &target, 1e-6, 1e-8);
        worst = errs.iter().fold(worst, |a, &b| a.max(b));
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn zero_depth_gradient_vanishes() {
    let mut rng = seeded(1);
    let ramp = random_ramp(&mut rng, 4, 50, 0.05, 1.0);
    let target = TargetGate::builtin(GateKind::H, SubspaceMap::symmetric_pair(1)).unwrap();
    let g = control::fidelity_gradient(&ramp, &LatticeConfig::new(0.0), &target).unwrap();
    assert!(g.iter().all(|x| x.abs() < 1e-14));
}
