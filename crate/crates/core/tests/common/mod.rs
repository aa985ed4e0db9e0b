//! Helpers shared by the integration tests.
#![allow(dead_code)]

use qudit_control::linalg::{c, identity, CMat};
use qudit_control::propagate::project_to_subspace;
use qudit_control::rng::ginibre;
use qudit_control::*;
use rand::Rng;

/// Ramp with coefficients uniform in `±amp`.
pub fn random_ramp<R: Rng>(rng: &mut R, n_max: usize, k: usize, dt: f64, amp: f64) -> PhaseRamp {
    let mut draw = || rng.random_range(-amp..=amp);
    PhaseRamp {
        a0: draw(),
        a: (0..n_max).map(|_| draw()).collect(),
        b: (0..n_max).map(|_| draw()).collect(),
        t_f: k as f64 * dt,
        dt,
    }
}

/// Kraus operators from a random isometry, scaled by `sqrt(keep)`.
/// `keep = 1` gives a trace-preserving channel.
pub fn random_kraus<R: Rng>(rng: &mut R, d: usize, rank: usize, keep: f64) -> Vec<CMat> {
    let g = ginibre(rng, d * rank, d);
    let q = g.qr().q();
    (0..rank)
        .map(|r| q.view((r * d, 0), (d, d)).into_owned() * c(keep.sqrt(), 0.0))
        .collect()
}

/// Fidelity of the projected propagator, evaluated by direct products.
pub fn direct_fidelity(ramp: &PhaseRamp, cfg: &LatticeConfig, target: &TargetGate) -> f64 {
    let u = evolve(ramp, cfg).unwrap().unitary;
    let p = project_to_subspace(&u, &target.subspace, cfg).unwrap();
    unitary_fidelity(&p, &target.matrix).unwrap()
}

/// `exp(−i τ H)` by scaling and squaring a degree-18 Taylor series.
pub fn expm_taylor(h: &CMat, tau: f64) -> CMat {
    let a = h * c(0.0, -tau);
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * a.nrows() as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let a = a.unscale(2f64.powi(squarings as i32));
    let n = a.nrows();
    let mut term = identity(n);
    let mut sum = identity(n);
    for j in 1..=18 {
        term = &term * &a * c(1.0 / j as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Relative errors of the analytic gradient against central differences
/// with step `h`, for components of magnitude above `floor`.
pub fn gradient_errors(
    ramp: &PhaseRamp,
    cfg: &LatticeConfig,
    target: &TargetGate,
    h: f64,
    floor: f64,
) -> Vec<f64> {
    let grad = control::fidelity_gradient(ramp, cfg, target).unwrap();
    let p = ramp.params();
    let mut out = Vec::new();
    for (i, g) in grad.iter().enumerate() {
        let mut up = p.clone();
        let mut dn = p.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (direct_fidelity(&ramp.with_params(&up), cfg, target)
            - direct_fidelity(&ramp.with_params(&dn), cfg, target))
            / (2.0 * h);
        if g.abs() > floor {
            out.push((g - fd).abs() / g.abs());
        }
    }
    out
}
