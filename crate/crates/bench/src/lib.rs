//! Fixtures shared by the benchmarks.

use qudit_control::gates::GateKind;
use qudit_control::{
    LatticeConfig, OptimizerConfig, PhaseRamp, SubspaceMap, TargetGate, UnitTable,
};

/// Lattice, target and a deterministic 350 μs ramp with 43 harmonics.
pub fn x_gate_fixture() -> (LatticeConfig, TargetGate, PhaseRamp) {
    let opt = OptimizerConfig::from_physical(&UnitTable::default(), 350e-6, 500e-9, 125e3)
        .expect("valid timing");
    let n = opt.n_max;
    let coeff =
        |k: usize, phase: f64| 0.3 * ((k as f64 + 1.0) * 0.7 + phase).sin() / (k as f64 + 1.0);
    let ramp = PhaseRamp {
        a0: 0.1,
        a: (0..n).map(|k| coeff(k, 0.0)).collect(),
        b: (0..n).map(|k| coeff(k, 1.3)).collect(),
        t_f: opt.t_f,
        dt: opt.dt,
    };
    let target =
        TargetGate::builtin(GateKind::X, SubspaceMap::symmetric_pair(1)).expect("builtin gate");
    (LatticeConfig::new(5.57), target, ramp)
}
