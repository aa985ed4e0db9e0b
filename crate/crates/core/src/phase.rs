//! Relative-phase retrieval from interference populations.
//!
//! For `|ψ⟩ = a|−j⟩ + b e^{iθ}|j⟩` the populations after `H` and `W`,
//! ordered `(−j, +j)`, are
//!
//! ```text
//! H: (1 ± 2ab cos θ)/2        W: (1 ± 2ab sin θ)/2
//! ```
//!
//! With `X = (h₋ − h₊)/2` and `Y = (w₋ − w₊)/2` the squared residual of these
//! four equations is `2[(ab cos θ − X)² + (ab sin θ − Y)²] + const`, which
//! is minimised exactly by `θ̂ = atan2(Y, X)`.
//!
//! The general scheme images a `d`-mode state after `DFT_d` and after the
//! modified transform and fits the `d − 1` relative phases by
//! Levenberg–Marquardt from many random starts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gates::{dft_gate, hadamard, modified_dft_gate, w_gate};
use crate::lattice::{LatticeConfig, SubspaceMap};
use crate::linalg::{c, unitarity_error, CMat, CVec};
use crate::measurement::{
    image_rng, sample_frequencies, simulate_image, NoiseModel, Probe, Sequence,
};
use crate::propagate::embed_unitary;
use crate::rng::{derive_seed, seeded};
use crate::sqpt::{mle_state_tomography, Interval, MeasurementModel, MleConfig, ProbeRecord};

/// Below this value of `ab` the relative phase is reported as unidentifiable.
pub const MIN_INTERFERENCE: f64 = 1e-3;

/// Below this amplitude a component's phase is not determined.
pub const MIN_AMPLITUDE: f64 = 1e-3;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeState {
    pub j: i64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl TwoModeState {
    pub fn new(j: i64, a: f64, b: f64, theta: f64) -> Result<Self> {
        if j < 1 {
            return Err(Error::config("mode index j must be at least 1"));
        }
        if !(a >= 0.0 && b >= 0.0) || (a * a + b * b - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "amplitudes must be non-negative with a² + b² = 1",
            ));
        }
        if !theta.is_finite() {
            return Err(Error::config("theta must be finite"));
        }
        Ok(Self { j, a, b, theta })
    }

    /// Equal weights, `a = b = 1/√2`.
    pub fn balanced(j: i64, theta: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            j,
            a: h,
            b: h,
            theta,
        }
    }

    pub fn map(&self) -> SubspaceMap {
        SubspaceMap::symmetric_pair(self.j)
    }

    /// Amplitudes on `(−j, +j)`.
    pub fn amplitudes(&self) -> CVec {
        CVec::from_vec(vec![
            c(self.a, 0.0),
            Complex64::from_polar(self.b, self.theta),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModePrediction {
    pub h: [f64; 2],
    pub w: [f64; 2],
}

pub fn two_mode_predict(state: &TwoModeState) -> TwoModePrediction {
    let v = 2.0 * state.a * state.b;
    let (s, co) = state.theta.sin_cos();
    TwoModePrediction {
        h: [(1.0 + v * co) / 2.0, (1.0 - v * co) / 2.0],
        w: [(1.0 + v * s) / 2.0, (1.0 - v * s) / 2.0],
    }
}

/// Populations on `(−j, +j)` for the three images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeRecords {
    pub bare: [f64; 2],
    pub h: [f64; 2],
    pub w: [f64; 2],
    pub atoms: Option<u64>,
}

/// Confidence interval for an angle, stored as offsets from the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
}

impl AngleInterval {
    pub fn contains(&self, theta: f64) -> bool {
        let d = wrap_angle(theta - self.center);
        self.lo <= d && d <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSolveResult {
    /// In `(−π, π]`; 0 when unidentifiable.
    pub theta_hat: f64,
    pub residual: f64,
    pub a: f64,
    pub b: f64,
    pub identifiable: bool,
    pub ci: Option<AngleInterval>,
}

fn two_mode_residual(a: f64, b: f64, theta: f64, r: &TwoModeRecords) -> f64 {
    let p = two_mode_predict(&TwoModeState { j: 1, a, b, theta });
    (0..2)
        .map(|k| (p.h[k] - r.h[k]).powi(2) + (p.w[k] - r.w[k]).powi(2))
        .sum()
}

/// Least-squares relative phase; no confidence interval.
pub fn solve_two_mode(records: &TwoModeRecords) -> Result<PhaseSolveResult> {
    let all = records.bare.iter().chain(&records.h).chain(&records.w);
    if all.clone().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Numerical(
            "populations must be finite and non-negative".into(),
        ));
    }
    let total = records.bare[0] + records.bare[1];
    if total <= 0.0 {
        return Err(Error::Numerical("no population in the two modes".into()));
    }
    let a = (records.bare[0] / total).sqrt();
    let b = (records.bare[1] / total).sqrt();
    let x = (records.h[0] - records.h[1]) / 2.0;
    let y = (records.w[0] - records.w[1]) / 2.0;
    let identifiable = a * b >= MIN_INTERFERENCE && (x != 0.0 || y != 0.0);
    let theta_hat = if identifiable {
        wrap_angle(y.atan2(x))
    } else {
        0.0
    };
    Ok(PhaseSolveResult {
        theta_hat,
        residual: two_mode_residual(a, b, theta_hat, records),
        a,
        b,
        identifiable,
        ci: None,
    })
}

fn resample_pair<R: Rng + ?Sized>(
    p: &[f64; 2],
    atoms: Option<u64>,
    rng: &mut R,
) -> Result<[f64; 2]> {
    let v = sample_frequencies(p, atoms, rng)?;
    Ok([v[0], v[1]])
}

/// [`solve_two_mode`] plus a 95% percentile bootstrap interval from
/// multinomial resampling of each image. Exact data get a zero-width interval.
pub fn solve_two_mode_with_ci(
    records: &TwoModeRecords,
    resamples: usize,
    seed: u64,
) -> Result<PhaseSolveResult> {
    let mut out = solve_two_mode(records)?;
    if !out.identifiable {
        return Ok(out);
    }
    if records.atoms.is_none() || resamples < 2 {
        out.ci = Some(AngleInterval {
            center: out.theta_hat,
            lo: 0.0,
            hi: 0.0,
        });
        return Ok(out);
    }
    let mut rng = seeded(seed);
    let mut offsets = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let r = TwoModeRecords {
            bare: resample_pair(&records.bare, records.atoms, &mut rng)?,
            h: resample_pair(&records.h, records.atoms, &mut rng)?,
            w: resample_pair(&records.w, records.atoms, &mut rng)?,
            atoms: records.atoms,
        };
        let s = solve_two_mode(&r)?;
        offsets.push(wrap_angle(s.theta_hat - out.theta_hat));
    }
    let iv = Interval::percentile95(&offsets).expect("at least two resamples");
    out.ci = Some(AngleInterval {
        center: out.theta_hat,
        lo: iv.lo.min(0.0),
        hi: iv.hi.max(0.0),
    });
    Ok(out)
}

/// The two readout operations for the closed-form scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeGates {
    pub h: Probe,
    pub w: Probe,
}

impl TwoModeGates {
    /// Noise-free `H` and `W` on `{−j, +j}`.
    pub fn ideal(cfg: &LatticeConfig, j: i64) -> Result<Self> {
        let map = SubspaceMap::symmetric_pair(j);
        Ok(Self {
            h: Probe::Unitary {
                label: "H".into(),
                matrix: embed_unitary(&hadamard(), &map, cfg)?,
            },
            w: Probe::Unitary {
                label: "W".into(),
                matrix: embed_unitary(&w_gate(), &map, cfg)?,
            },
        })
    }
}

/// Images `psi` (full basis) after each probe, keeping the orders of `map`.
pub fn simulate_records(
    psi: &CVec,
    map: &SubspaceMap,
    cfg: &LatticeConfig,
    probes: &[Probe],
    noise: &NoiseModel,
    stream: u64,
) -> Result<Vec<ProbeRecord>> {
    noise.validate()?;
    let offset = noise.draw_dataset_offset(&mut seeded(derive_seed(noise.seed, u64::MAX - stream)));
    let pos = map.positions(cfg)?;
    probes
        .iter()
        .enumerate()
        .map(|(p, probe)| {
            let mut rng = image_rng(noise, stream, p as u64);
            let seq = Sequence { gate: None, probe };
            let img = simulate_image(seq, cfg, noise, offset, psi, &mut rng)?;
            Ok(ProbeRecord {
                probe: probe.clone(),
                populations: pos.iter().map(|&k| img.populations[k]).collect(),
                atoms: noise.atom_number,
            })
        })
        .collect()
}

fn embed_state(amps: &CVec, map: &SubspaceMap, cfg: &LatticeConfig) -> Result<CVec> {
    check_dim(map.dim(), amps.len())?;
    let mut psi = CVec::zeros(cfg.dim());
    for (&p, a) in map.positions(cfg)?.iter().zip(amps.iter()) {
        psi[p] = *a;
    }
    Ok(psi)
}

/// Simulated bare, `H` and `W` images of a two-mode state.
pub fn simulate_two_mode(
    state: &TwoModeState,
    cfg: &LatticeConfig,
    gates: &TwoModeGates,
    noise: &NoiseModel,
    stream: u64,
) -> Result<TwoModeRecords> {
    let map = state.map();
    let psi = embed_state(&state.amplitudes(), &map, cfg)?;
    let probes = [Probe::Bare, gates.h.clone(), gates.w.clone()];
    let rec = simulate_records(&psi, &map, cfg, &probes, noise, stream)?;
    let pair = |r: &ProbeRecord| [r.populations[0], r.populations[1]];
    Ok(TwoModeRecords {
        bare: pair(&rec[0]),
        h: pair(&rec[1]),
        w: pair(&rec[2]),
        atoms: noise.atom_number,
    })
}

/// One row of a prepared-versus-measured phase table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub j: i64,
    pub theta_prep: f64,
    pub theta_meas: f64,
    pub ci: Option<AngleInterval>,
    pub identifiable: bool,
    /// `θ_prep` lies inside the interval.
    pub covered: bool,
    pub error: f64,
}

/// `θ_prep ∈ {2πn/8}` for `n = 0..8`.
pub fn eighth_turns() -> Vec<f64> {
    (0..8).map(|n| 2.0 * PI * n as f64 / 8.0).collect()
}

/// Prepares `a|−j⟩ + b e^{iθ}|j⟩` for every `θ` in `thetas`, simulates the
/// readout and solves for the phase.
#[allow(clippy::too_many_arguments)]
pub fn phase_table(
    j: i64,
    a: f64,
    thetas: &[f64],
    cfg: &LatticeConfig,
    gates: &TwoModeGates,
    noise: &NoiseModel,
    resamples: usize,
    seed: u64,
) -> Result<Vec<PhaseRow>> {
    let b = (1.0 - a * a).max(0.0).sqrt();
    thetas
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let state = TwoModeState::new(j, a, b, theta)?;
            let stream = derive_seed(j as u64, i as u64);
            let rec = simulate_two_mode(&state, cfg, gates, noise, stream)?;
            let sol = solve_two_mode_with_ci(&rec, resamples, derive_seed(seed, stream))?;
            let error = wrap_angle(sol.theta_hat - theta).abs();
            Ok(PhaseRow {
                j,
                theta_prep: wrap_angle(theta),
                theta_meas: sol.theta_hat,
                ci: sol.ci,
                identifiable: sol.identifiable,
                covered: sol.ci.is_some_and(|ci| ci.contains(theta)),
                error,
            })
        })
        .collect()
}

/// Result of the general `d`-mode scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralPhaseResult {
    /// Phases with the first determined component fixed to 0.
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Components whose amplitude is too small for a phase.
    pub degenerate: Vec<bool>,
    pub residual: f64,
    pub best_restart: usize,
    /// Distinct solutions within 1% of the best residual (best first).
    pub optima: Vec<Vec<f64>>,
}

struct PhaseProblem<'a> {
    amps: Vec<f64>,
    maps: [&'a CMat; 2],
    meas: [&'a [f64]; 2],
    free: Vec<usize>,
}

impl PhaseProblem<'_> {
    fn phases(&self, x: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.amps.len()];
        for (&k, &v) in self.free.iter().zip(x) {
            phi[k] = v;
        }
        phi
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.amps.len();
        let phi = self.phases(x);
        let psi: Vec<Complex64> = (0..d)
            .map(|k| Complex64::from_polar(self.amps[k], phi[k]))
            .collect();
        let mut r = DVector::zeros(2 * d);
        let mut jac = DMatrix::zeros(2 * d, self.free.len());
        for (g, (map, meas)) in self.maps.iter().zip(self.meas).enumerate() {
            for u in 0..d {
                let z: Complex64 = (0..d).map(|k| map[(u, k)] * psi[k]).sum();
                let row = g * d + u;
                r[row] = z.norm_sqr() - meas[u];
                for (col, &k) in self.free.iter().enumerate() {
                    let dz = c(0.0, 1.0) * map[(u, k)] * psi[k];
                    jac[(row, col)] = 2.0 * (z.conj() * dz).re;
                }
            }
        }
        (r, jac)
    }

    fn cost(&self, x: &[f64]) -> f64 {
        self.residuals_and_jacobian(x).0.norm_squared()
    }

    /// Levenberg–Marquardt with Marquardt diagonal scaling.
    fn solve(&self, mut x: Vec<f64>) -> (Vec<f64>, f64) {
        let n = x.len();
        if n == 0 {
            return (x, self.cost(&[]));
        }
        let mut lambda = 1e-3;
        let (mut r, mut jac) = self.residuals_and_jacobian(&x);
        let mut cost = r.norm_squared();
        for _ in 0..500 {
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &r;
            if g.amax() < 1e-15 {
                break;
            }
            let mut improved = false;
            while lambda < 1e12 {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
                let (tr, tj) = self.residuals_and_jacobian(&trial);
                let tc = tr.norm_squared();
                if tc < cost {
                    let rel = (cost - tc) / cost.max(1e-300);
                    x = trial;
                    r = tr;
                    jac = tj;
                    cost = tc;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = rel > 1e-15 && cost > 1e-32;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (x.into_iter().map(wrap_angle).collect(), cost)
    }
}

/// Fits the relative phases of a pure `d`-mode state from its bare
/// populations and those after `DFT_d` and the modified transform.
///
/// Runs `restarts` Levenberg–Marquardt solves from uniform random phases
/// (in parallel, each seeded from `seed` and its index) and keeps the best
/// by `(residual, restart index)`.
pub fn general_phase_retrieval(
    bare: &[f64],
    after_dft: &[f64],
    after_modified: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<GeneralPhaseResult> {
    let d = bare.len();
    check_dim(d, after_dft.len())?;
    check_dim(d, after_modified.len())?;
    if restarts == 0 {
        return Err(Error::config("restarts must be at least 1"));
    }
    let f = dft_gate(d)?;
    let fm = modified_dft_gate(d)?;
    let total: f64 = bare.iter().map(|x| x.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("no population in the modes".into()));
    }
    let amps: Vec<f64> = bare.iter().map(|x| (x.max(0.0) / total).sqrt()).collect();
    let degenerate: Vec<bool> = amps.iter().map(|&a| a < MIN_AMPLITUDE).collect();
    // The first determined component carries the gauge.
    let free: Vec<usize> = (0..d).filter(|&k| !degenerate[k]).skip(1).collect();
    let problem = PhaseProblem {
        amps: amps.clone(),
        maps: [&f, &fm],
        meas: [after_dft, after_modified],
        free: free.clone(),
    };
    let mut runs: Vec<(f64, usize, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(derive_seed(seed, i as u64));
            let x0: Vec<f64> = free.iter().map(|_| rng.random_range(-PI..PI)).collect();
            let (x, cost) = problem.solve(x0);
            (cost, i, x)
        })
        .collect();
    runs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let best_cost = runs[0].0;
    let limit = best_cost * 1.01 + 1e-24;
    let mut optima: Vec<Vec<f64>> = Vec::new();
    for (cost, _, x) in &runs {
        if *cost > limit {
            break;
        }
        let phi = problem.phases(x);
        let distinct = optima.iter().all(|o| {
            o.iter()
                .zip(&phi)
                .any(|(a, b)| wrap_angle(a - b).abs() > 1e-6)
        });
        if distinct {
            optima.push(phi);
        }
    }
    Ok(GeneralPhaseResult {
        phases: optima[0].clone(),
        amplitudes: amps,
        degenerate,
        residual: best_cost,
        best_restart: runs[0].1,
        optima,
    })
}

/// Readout probes for the general scheme on `map`.
///
/// The modified transform is not unitary for `d > 2`; it is then applied as
/// a plain linear map to the state before imaging.
pub fn fourier_probes(map: &SubspaceMap, cfg: &LatticeConfig) -> Result<[Probe; 3]> {
    let d = map.dim();
    Ok([
        Probe::Bare,
        Probe::Unitary {
            label: "dft".into(),
            matrix: embed_unitary(&dft_gate(d)?, map, cfg)?,
        },
        Probe::Unitary {
            label: "modified_dft".into(),
            matrix: embed_unitary(&modified_dft_gate(d)?, map, cfg)?,
        },
    ])
}

/// Phases `arg ρ[k, g]` of a maximum-likelihood estimate built from the same
/// gate-probe records, relative to the first component `g` with appreciable
/// population.
///
/// Every probe must be unitary on the subspace.
pub fn mle_phases(
    records: &[ProbeRecord],
    map: &SubspaceMap,
    cfg: &LatticeConfig,
) -> Result<Vec<f64>> {
    let probes: Vec<Probe> = records.iter().map(|r| r.probe.clone()).collect();
    for p in &probes {
        if let Some(u) = p.unitary(cfg)? {
            if unitarity_error(&u) > 1e-9 {
                return Err(Error::config(format!(
                    "probe `{}` is not unitary",
                    p.label()
                )));
            }
        }
    }
    let model = MeasurementModel::new(cfg, map, &probes)?;
    let est = mle_state_tomography(&model, records, &MleConfig::default(), None)?;
    let rho = est.rho.matrix();
    let g = (0..map.dim())
        .find(|&k| rho[(k, k)].re > MIN_AMPLITUDE * MIN_AMPLITUDE)
        .unwrap_or(0);
    Ok((0..map.dim())
        .map(|k| if k == g { 0.0 } else { rho[(k, g)].arg() })
        .collect())
}
