//! Fourier-space gradient ascent on the gate fidelity, with concurrent
//! averaging over an ensemble of lattice depths and quasi-momenta.
//!
//! The objective for one lattice configuration is
//! `F = |tr(U_T† P U_f P)|² / d²`, where `P U_f P` is the propagator
//! restricted to the qudit orders, so leakage lowers `F` directly.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gates::TargetGate;
use crate::lattice::LatticeConfig;
use crate::linalg::{c, CMat};
use crate::propagate::StepFactory;
use crate::ramp::{harmonic_count, step_count, PhaseRamp};
use crate::rng::seeded;
use crate::units::UnitTable;

/// `|tr(U_T† U)|² / d²`.
pub fn unitary_fidelity(u_proj: &CMat, target: &CMat) -> Result<f64> {
    check_dim(target.nrows(), u_proj.nrows())?;
    check_dim(target.ncols(), u_proj.ncols())?;
    let d = target.nrows() as f64;
    let overlap: Complex64 = target
        .iter()
        .zip(u_proj.iter())
        .map(|(t, u)| t.conj() * u)
        .sum();
    Ok(overlap.norm_sqr() / (d * d))
}

/// Fidelity and `∂F/∂φ_j` for one lattice configuration, reusing a single
/// eigendecomposition for every step.
#[derive(Debug, Clone)]
pub struct SampleEvaluator {
    pub cfg: LatticeConfig,
    factory: StepFactory,
    positions: Vec<usize>,
    target: CMat,
    orders: Vec<f64>,
}

impl SampleEvaluator {
    pub fn new(cfg: LatticeConfig, dt: f64, target: &TargetGate) -> Result<Self> {
        cfg.validate()?;
        cfg.check_subspace(&target.subspace)?;
        let factory = StepFactory::new(&cfg, dt)?;
        Ok(Self {
            positions: target.subspace.positions(&cfg)?,
            target: target.matrix.clone(),
            orders: cfg.orders().map(|l| l as f64).collect(),
            cfg,
            factory,
        })
    }

    fn start_columns(&self) -> CMat {
        let mut e = CMat::zeros(self.factory.dim(), self.positions.len());
        for (col, &row) in self.positions.iter().enumerate() {
            e[(row, col)] = c(1.0, 0.0);
        }
        e
    }

    fn overlap(&self, cols: &CMat) -> Complex64 {
        let d = self.positions.len();
        let mut g = c(0.0, 0.0);
        for m in 0..d {
            for (n, &row) in self.positions.iter().enumerate() {
                g += self.target[(n, m)].conj() * cols[(row, m)];
            }
        }
        g
    }

    /// Subspace block of the ramp propagator.
    pub fn projected(&self, phases: &[f64]) -> CMat {
        let cols = phases.iter().fold(self.start_columns(), |acc, &phi| {
            self.factory.apply(phi, &acc)
        });
        CMat::from_fn(self.positions.len(), self.positions.len(), |r, k| {
            cols[(self.positions[r], k)]
        })
    }

    pub fn fidelity(&self, phases: &[f64]) -> f64 {
        let cols = phases.iter().fold(self.start_columns(), |acc, &phi| {
            self.factory.apply(phi, &acc)
        });
        let d = self.positions.len() as f64;
        self.overlap(&cols).norm_sqr() / (d * d)
    }

    /// Fidelity and its exact derivative with respect to every step phase.
    ///
    /// With `C_j = U_{j−1}⋯U_0 E` and `Λ_j = U_T† Eᵀ U_{k−1}⋯U_{j+1}`,
    /// `∂U_j/∂φ = i[L, U_j]` (`L = diag ℓ`) gives
    /// `∂g/∂φ_j = i(tr Λ_j L C_{j+1} − tr Λ_{j−1} L C_j)` for `g = tr(U_T† Eᵀ U_f E)`.
    pub fn fidelity_and_phase_gradient(&self, phases: &[f64]) -> (f64, Vec<f64>) {
        let k = phases.len();
        let n = self.factory.dim();
        let d = self.positions.len();
        let mut forward = Vec::with_capacity(k + 1);
        forward.push(self.start_columns());
        for (j, &phi) in phases.iter().enumerate() {
            let next = self.factory.apply(phi, &forward[j]);
            forward.push(next);
        }
        let g = self.overlap(&forward[k]);

        // Λ_{k−1} = U_T† Eᵀ, a d×N row block.
        let mut lambda = CMat::zeros(d, n);
        for m in 0..d {
            for (r, &row) in self.positions.iter().enumerate() {
                lambda[(m, row)] = self.target[(r, m)].conj();
            }
        }
        let weighted_trace = |left: &CMat, right: &CMat| -> Complex64 {
            let mut acc = c(0.0, 0.0);
            for a in 0..n {
                let l = self.orders[a];
                if l == 0.0 {
                    continue;
                }
                let mut row_sum = c(0.0, 0.0);
                for m in 0..d {
                    row_sum += left[(m, a)] * right[(a, m)];
                }
                acc += row_sum * l;
            }
            acc
        };

        let scale = 2.0 / (d * d) as f64;
        let mut grad = vec![0.0; k];
        for j in (0..k).rev() {
            let after = weighted_trace(&lambda, &forward[j + 1]);
            lambda = self.factory.apply_right(phases[j], &lambda);
            let before = weighted_trace(&lambda, &forward[j]);
            let dg = c(0.0, 1.0) * (after - before);
            grad[j] = scale * (g.conj() * dg).re;
        }
        ((g.norm_sqr()) / (d * d) as f64, grad)
    }
}

/// Chains `∂F/∂φ_j` into `∂F/∂[a0, a_n, b_n]` using the ramp's design matrix.
pub fn chain_to_coefficients(design: &[Vec<f64>], phase_grad: &[f64]) -> Vec<f64> {
    design
        .iter()
        .map(|row| row.iter().zip(phase_grad).map(|(x, g)| x * g).sum())
        .collect()
}

/// Exact gradient of the single-configuration fidelity with respect to the
/// flattened Fourier coefficients `[a0, a_1..a_n, b_1..b_n]`.
pub fn fidelity_gradient(
    ramp: &PhaseRamp,
    cfg: &LatticeConfig,
    target: &TargetGate,
) -> Result<Vec<f64>> {
    ramp.validate()?;
    let eval = SampleEvaluator::new(*cfg, ramp.dt, target)?;
    let (_, g) = eval.fidelity_and_phase_gradient(&ramp.samples());
    Ok(chain_to_coefficients(&ramp.design_matrix(), &g))
}

/// Lattice-parameter samples for concurrent averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessEnsemble {
    pub depth_samples: Vec<f64>,
    #[serde(default = "default_q_samples")]
    pub quasimomentum_samples: Vec<f64>,
}

fn default_q_samples() -> Vec<f64> {
    vec![0.0]
}

pub const MAX_ENSEMBLE_SAMPLES: usize = 16;

impl RobustnessEnsemble {
    pub fn new(mut depth_samples: Vec<f64>, mut quasimomentum_samples: Vec<f64>) -> Result<Self> {
        for (name, v) in [
            ("depth", &mut depth_samples),
            ("quasi-momentum", &mut quasimomentum_samples),
        ] {
            if v.is_empty() || v.len() > MAX_ENSEMBLE_SAMPLES {
                return Err(Error::config(format!(
                    "{name} ensemble must have between 1 and {MAX_ENSEMBLE_SAMPLES} samples, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!("{name} samples must be finite")));
            }
            v.sort_by(f64::total_cmp);
            if v.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::config(format!("{name} samples must be distinct")));
            }
        }
        Ok(Self {
            depth_samples,
            quasimomentum_samples,
        })
    }

    pub fn single(depth: f64) -> Self {
        Self {
            depth_samples: vec![depth],
            quasimomentum_samples: vec![0.0],
        }
    }

    /// `n` depths evenly spaced over `[center − half_width, center + half_width]`.
    pub fn around(center: f64, half_width: f64, n: usize) -> Result<Self> {
        let depths = if n == 1 {
            vec![center]
        } else {
            (0..n)
                .map(|i| center + half_width * (2.0 * i as f64 / (n - 1) as f64 - 1.0))
                .collect()
        };
        Self::new(depths, vec![0.0])
    }

    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(
            self.depth_samples.clone(),
            self.quasimomentum_samples.clone(),
        )?;
        if &rebuilt != self {
            return Err(Error::config("ensemble samples must be sorted ascending"));
        }
        Ok(())
    }

    /// `(s, q)` pairs in sorted order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.depth_samples
            .iter()
            .flat_map(|&s| self.quasimomentum_samples.iter().map(move |&q| (s, q)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.depth_samples.len() * self.quasimomentum_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleFidelity {
    pub depth: f64,
    pub quasimomentum: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustValue {
    pub mean: f64,
    pub samples: Vec<SampleFidelity>,
}

/// Evaluators for every ensemble member, sharing one target.
#[derive(Debug, Clone)]
pub struct EnsembleEvaluator {
    members: Vec<SampleEvaluator>,
}

impl EnsembleEvaluator {
    pub fn new(
        ensemble: &RobustnessEnsemble,
        template: &LatticeConfig,
        dt: f64,
        target: &TargetGate,
    ) -> Result<Self> {
        ensemble.validate()?;
        let members = ensemble
            .pairs()
            .into_iter()
            .map(|(s, q)| {
                let cfg = template.with_depth(s).with_quasimomentum(q);
                SampleEvaluator::new(cfg, dt, target)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn value(&self, phases: &[f64]) -> RobustValue {
        let fids: Vec<f64> = self
            .members
            .par_iter()
            .map(|m| m.fidelity(phases))
            .collect();
        self.summarize(&fids)
    }

    fn summarize(&self, fids: &[f64]) -> RobustValue {
        // Sequential sum in sample order keeps the reduction bitwise reproducible.
        let mean = fids.iter().sum::<f64>() / fids.len() as f64;
        let samples = self
            .members
            .iter()
            .zip(fids)
            .map(|(m, &fidelity)| SampleFidelity {
                depth: m.cfg.depth,
                quasimomentum: m.cfg.quasimomentum,
                fidelity,
            })
            .collect();
        RobustValue { mean, samples }
    }

    /// Mean fidelity and the ensemble-averaged phase gradient.
    pub fn value_and_phase_gradient(&self, phases: &[f64]) -> (RobustValue, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = self
            .members
            .par_iter()
            .map(|m| m.fidelity_and_phase_gradient(phases))
            .collect();
        let fids: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let mut grad = vec![0.0; phases.len()];
        for (_, g) in &parts {
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x;
            }
        }
        let inv = 1.0 / parts.len() as f64;
        grad.iter_mut().for_each(|x| *x *= inv);
        (self.summarize(&fids), grad)
    }
}

/// Mean fidelity over the ensemble, each member evaluated independently.
pub fn robust_objective(
    ramp: &PhaseRamp,
    ensemble: &RobustnessEnsemble,
    target: &TargetGate,
    template: &LatticeConfig,
) -> Result<RobustValue> {
    ramp.validate()?;
    let eval = EnsembleEvaluator::new(ensemble, template, ramp.dt, target)?;
    Ok(eval.value(&ramp.samples()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Duration in units of `ħ/E_L`.
    pub t_f: f64,
    /// Step in units of `ħ/E_L`.
    pub dt: f64,
    pub n_max: usize,
    pub epsilon0: f64,
    #[serde(default = "default_growth")]
    pub epsilon_growth: f64,
    #[serde(default = "default_shrink")]
    pub epsilon_shrink: f64,
    #[serde(default = "default_min_epsilon")]
    pub min_epsilon: f64,
    pub max_iters: usize,
    pub fidelity_goal: f64,
    pub rng_seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Half-width of the uniform initial-coefficient distribution, radians.
    #[serde(default = "default_init_amplitude")]
    pub init_amplitude: f64,
    /// Starting point for the first restart instead of a random guess.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_ramp: Option<PhaseRamp>,
}

fn default_growth() -> f64 {
    1.5
}
fn default_shrink() -> f64 {
    0.5
}
fn default_min_epsilon() -> f64 {
    1e-12
}
fn default_restarts() -> usize {
    1
}
fn default_init_amplitude() -> f64 {
    0.1
}

impl OptimizerConfig {
    /// Builds a configuration from laboratory units, deriving `n_max` from the
    /// frequency cap.
    pub fn from_physical(units: &UnitTable, t_f_s: f64, dt_s: f64, f_max_hz: f64) -> Result<Self> {
        let t_f = units.seconds_to_dimensionless(t_f_s);
        let dt = units.seconds_to_dimensionless(dt_s);
        // Snap dt so that t_f/dt is exactly the integer implied by the physical values.
        let k = step_count(t_f_s, dt_s)?;
        let dt = if ((t_f / dt) - k as f64).abs() < 1e-6 {
            t_f / k as f64
        } else {
            dt
        };
        Ok(Self {
            t_f,
            dt,
            n_max: harmonic_count(f_max_hz, t_f_s)?,
            epsilon0: 1.0,
            epsilon_growth: default_growth(),
            epsilon_shrink: default_shrink(),
            min_epsilon: default_min_epsilon(),
            max_iters: 2000,
            fidelity_goal: 0.999,
            rng_seed: 0,
            restarts: 1,
            init_amplitude: default_init_amplitude(),
            initial_ramp: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        step_count(self.t_f, self.dt)?;
        if self.n_max < 1 {
            return Err(Error::config("n_max must be at least 1"));
        }
        if !(self.epsilon0 > 0.0) {
            return Err(Error::config("epsilon0 must be positive"));
        }
        if !(self.fidelity_goal > 0.0 && self.fidelity_goal <= 1.0) {
            return Err(Error::config("fidelity_goal must lie in (0, 1]"));
        }
        if !(self.epsilon_growth >= 1.0)
            || !(self.epsilon_shrink > 0.0 && self.epsilon_shrink < 1.0)
        {
            return Err(Error::config(
                "epsilon schedule needs growth >= 1 and shrink in (0, 1)",
            ));
        }
        if self.restarts < 1 {
            return Err(Error::config("restarts must be at least 1"));
        }
        if let Some(r) = &self.initial_ramp {
            r.validate()?;
            if r.n_max() != self.n_max
                || (r.t_f - self.t_f).abs() > 1e-12
                || (r.dt - self.dt).abs() > 1e-15
            {
                return Err(Error::config(
                    "initial ramp does not match t_f, dt and n_max",
                ));
            }
        }
        Ok(())
    }

    fn random_ramp(&self, restart: usize) -> PhaseRamp {
        let mut rng = seeded(crate::rng::derive_seed(self.rng_seed, restart as u64));
        let amp = self.init_amplitude;
        let mut draw = || {
            if amp > 0.0 {
                rng.random_range(-amp..=amp)
            } else {
                0.0
            }
        };
        let a0 = draw();
        let a = (0..self.n_max).map(|_| draw()).collect();
        let b = (0..self.n_max).map(|_| draw()).collect();
        PhaseRamp {
            a0,
            a,
            b,
            t_f: self.t_f,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GoalReached,
    MaxIterations,
    StepSizeFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub mean_fidelity: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub ramp: PhaseRamp,
    /// Mean fidelity after each accepted iteration of the returned restart.
    pub trace: Vec<f64>,
    pub mean_fidelity: f64,
    pub samples: Vec<SampleFidelity>,
    pub iterations: usize,
    pub termination: Termination,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    /// Wall-clock time in seconds; excluded from equality-sensitive outputs by callers.
    #[serde(skip)]
    pub elapsed_s: f64,
}

struct RestartOutcome {
    ramp: PhaseRamp,
    trace: Vec<f64>,
    value: RobustValue,
    iterations: usize,
    termination: Termination,
}

fn ascend(config: &OptimizerConfig, eval: &EnsembleEvaluator, start: PhaseRamp) -> RestartOutcome {
    let design = start.design_matrix();
    let mut params = start.params();
    let mut ramp = start;
    let (mut value, phase_grad) = eval.value_and_phase_gradient(&ramp.samples());
    let mut grad = chain_to_coefficients(&design, &phase_grad);
    let mut trace = vec![value.mean];
    let mut eps = config.epsilon0;
    let mut iterations = 0;
    let termination = loop {
        if value.mean >= config.fidelity_goal {
            break Termination::GoalReached;
        }
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let accepted = loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p + eps * g).collect();
            let trial_ramp = ramp.with_params(&trial);
            let (trial_value, trial_phase_grad) =
                eval.value_and_phase_gradient(&trial_ramp.samples());
            if trial_value.mean > value.mean {
                params = trial;
                ramp = trial_ramp;
                value = trial_value;
                grad = chain_to_coefficients(&design, &trial_phase_grad);
                eps *= config.epsilon_growth;
                break true;
            }
            eps *= config.epsilon_shrink;
            if eps < config.min_epsilon {
                break false;
            }
        };
        if !accepted {
            break Termination::StepSizeFloor;
        }
        trace.push(value.mean);
    };
    RestartOutcome {
        ramp,
        trace,
        value,
        iterations,
        termination,
    }
}

/// Gradient ascent with restarts; stops at the first restart that reaches
/// the fidelity goal, otherwise returns the best one.
pub fn grape_optimize(
    config: &OptimizerConfig,
    ensemble: &RobustnessEnsemble,
    target: &TargetGate,
    template: &LatticeConfig,
) -> Result<OptimizationReport> {
    config.validate()?;
    let started = Instant::now();
    let eval = EnsembleEvaluator::new(ensemble, template, config.dt, target)?;
    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut summaries = Vec::new();
    for restart in 0..config.restarts {
        let start = match (&config.initial_ramp, restart) {
            (Some(r), 0) => r.clone(),
            _ => config.random_ramp(restart),
        };
        let outcome = ascend(config, &eval, start);
        summaries.push(RestartSummary {
            restart,
            mean_fidelity: outcome.value.mean,
            iterations: outcome.iterations,
            termination: outcome.termination,
        });
        let reached = outcome.termination == Termination::GoalReached;
        let better = best
            .as_ref()
            .is_none_or(|(_, b)| outcome.value.mean > b.value.mean);
        if better {
            best = Some((restart, outcome));
        }
        if reached {
            break;
        }
    }
    let (best_restart, outcome) = best.expect("at least one restart");
    Ok(OptimizationReport {
        ramp: outcome.ramp,
        trace: outcome.trace,
        mean_fidelity: outcome.value.mean,
        samples: outcome.value.samples,
        iterations: outcome.iterations,
        termination: outcome.termination,
        best_restart,
        restarts: summaries,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub depth: f64,
    pub infidelity: f64,
}

/// `1 − F` of a fixed ramp over a grid of lattice depths.
pub fn infidelity_sweep(
    ramp: &PhaseRamp,
    target: &TargetGate,
    depths: &[f64],
    quasimomentum: f64,
    template: &LatticeConfig,
) -> Result<Vec<SweepPoint>> {
    ramp.validate()?;
    let phases = ramp.samples();
    depths
        .par_iter()
        .map(|&s| {
            let cfg = template.with_depth(s).with_quasimomentum(quasimomentum);
            let eval = SampleEvaluator::new(cfg, ramp.dt, target)?;
            Ok(SweepPoint {
                depth: s,
                infidelity: 1.0 - eval.fidelity(&phases),
            })
        })
        .collect()
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
