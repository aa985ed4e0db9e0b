//! Robust unitary gate synthesis for momentum-state qudits of a condensate in
//! a phase-modulated optical lattice.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`], [`ramp`] and [`propagate`] model the phase-shaken lattice in
//!   the plane-wave momentum basis and propagate piecewise-constant controls.
//! * [`control`] synthesises Fourier-parameterised controls by gradient ascent
//!   on the (ensemble-averaged) gate fidelity.
//! * [`process`] holds Kraus and Choi representations of quantum channels and
//!   the process / average-gate fidelities.
//! * [`measurement`] simulates population imaging with experimental noise.
//! * [`sqpt`] runs standard quantum process tomography with maximum-likelihood
//!   state reconstruction.
//! * [`phase`] recovers relative phases from interference populations.
//!
//! All quantities are dimensionless internally: energies in units of
//! `E_L = ħ²k_L²/2m` and times in units of `ħ/E_L`. [`units::UnitTable`]
//! converts to laboratory units.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod gates;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod measurement;
pub mod phase;
pub mod process;
pub mod propagate;
pub mod ramp;
pub mod rng;
pub mod sqpt;
pub mod units;

pub use control::{
    grape_optimize, robust_objective, unitary_fidelity, OptimizationReport, OptimizerConfig,
    RobustnessEnsemble, Termination,
};
pub use error::{Error, Result};
pub use gates::TargetGate;
pub use lattice::{LatticeConfig, SubspaceMap};
pub use linalg::{CMat, CVec};
pub use measurement::NoiseModel;
pub use process::{DensityMatrix, KrausProcess, ProcessMatrix};
pub use propagate::{evolve, Evolution};
pub use ramp::PhaseRamp;
pub use units::UnitTable;
