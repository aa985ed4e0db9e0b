//! Standard quantum process tomography.
//!
//! Each of the `d²` inputs `|u⟩`, `(|u⟩+|v⟩)/√2` and `(|u⟩+i|v⟩)/√2` is sent
//! through the channel, imaged after a set of known probe unitaries and
//! reconstructed by maximum likelihood over an extended momentum basis `H′`.
//! Writing `P = ε(|+⟩⟨+|_uv)`, `M = ε(|−⟩⟨−|_uv)`,
//!
//! ```text
//! ε(B_uv) = P + iM − ((1+i)/2)(ε(B_uu) + ε(B_vv))
//! ε(B_vu) = P − iM − ((1−i)/2)(ε(B_uu) + ε(B_vv))
//! ```
//!
//! and the Choi matrix is `β = Σ_uv B_uv ⊗ ε(B_uv)`.
//!
//! # Likelihood model
//!
//! The state estimate lives on `H′` plus one *vacuum* level holding the
//! population that had already left `H′` before the probe. For probe `p` the
//! recorded outcomes are the orders of `H′`, with POVM elements
//! `Π_pm = E†U_p†|m⟩⟨m|U_p E`; everything else is one unrecorded outcome with
//! element `(I − Σ_m Π_pm) ⊕ 1`. The estimate therefore has `tr ρ ≤ 1` with
//! the deficit equal to the vacuum weight.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gates::TargetGate;
use crate::lattice::{band_gap_timescale, LatticeConfig, SubspaceMap};
use crate::linalg::{
    c, identity, project_to_density, psd_sqrt, submatrix, trace, CMat, CVec, HermitianEigen,
};
use crate::measurement::{
    image_rng, sample_frequencies, simulate_image, NoiseModel, Probe, Sequence,
};
use crate::process::{
    alpha_avg, avg_gate_fidelity_formula, kraus_to_choi, process_fidelity, unitary_choi,
    DensityMatrix, KrausProcess, ProcessMatrix,
};
use crate::ramp::PhaseRamp;
use crate::rng::{derive_seed, seeded};
use crate::units::UnitTable;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    /// `|u⟩`.
    Basis { u: usize },
    /// `(|u⟩+|v⟩)/√2`.
    Plus { u: usize, v: usize },
    /// `(|u⟩+i|v⟩)/√2`.
    Minus { u: usize, v: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputState {
    pub label: String,
    pub kind: InputKind,
    /// Amplitudes over the subspace.
    #[serde(skip)]
    pub amplitudes: CVec,
}

/// The `d²` tomography inputs: basis states first, then `+`/`−` per pair `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputStateSet {
    pub map: SubspaceMap,
    pub states: Vec<InputState>,
}

pub fn build_input_states(d: usize, map: &SubspaceMap) -> Result<InputStateSet> {
    check_dim(map.dim(), d)?;
    let orders = map.indices();
    let ket = |entries: &[(usize, Complex64)]| {
        let mut v = CVec::zeros(d);
        for &(i, a) in entries {
            v[i] = a;
        }
        v
    };
    let mut states = Vec::with_capacity(d * d);
    for (u, order) in orders.iter().enumerate() {
        states.push(InputState {
            label: format!("|{order}>"),
            kind: InputKind::Basis { u },
            amplitudes: ket(&[(u, c(1.0, 0.0))]),
        });
    }
    for u in 0..d {
        for v in u + 1..d {
            states.push(InputState {
                label: format!("|+>_({},{})", orders[u], orders[v]),
                kind: InputKind::Plus { u, v },
                amplitudes: ket(&[(u, c(SQRT_HALF, 0.0)), (v, c(SQRT_HALF, 0.0))]),
            });
            states.push(InputState {
                label: format!("|->_({},{})", orders[u], orders[v]),
                kind: InputKind::Minus { u, v },
                amplitudes: ket(&[(u, c(SQRT_HALF, 0.0)), (v, c(0.0, SQRT_HALF))]),
            });
        }
    }
    Ok(InputStateSet {
        map: map.clone(),
        states,
    })
}

impl InputStateSet {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Input `i` in the full truncated basis of `cfg`.
    pub fn embedded(&self, i: usize, cfg: &LatticeConfig) -> Result<CVec> {
        let pos = self.map.positions(cfg)?;
        let mut psi = CVec::zeros(cfg.dim());
        for (k, &p) in pos.iter().enumerate() {
            psi[p] = self.states[i].amplitudes[k];
        }
        Ok(psi)
    }

    fn find(&self, kind: InputKind) -> usize {
        self.states
            .iter()
            .position(|s| s.kind == kind)
            .expect("input set is complete")
    }
}

/// `ε(B_uv)` from the outputs of the four physical inputs.
pub fn reconstruct_eps_buv(
    eps_plus: &CMat,
    eps_minus: &CMat,
    eps_uu: &CMat,
    eps_vv: &CMat,
) -> Result<CMat> {
    combine(eps_plus, eps_minus, eps_uu, eps_vv, 1.0)
}

/// `ε(B_vu)` from the same four outputs.
pub fn reconstruct_eps_bvu(
    eps_plus: &CMat,
    eps_minus: &CMat,
    eps_uu: &CMat,
    eps_vv: &CMat,
) -> Result<CMat> {
    combine(eps_plus, eps_minus, eps_uu, eps_vv, -1.0)
}

fn combine(p: &CMat, m: &CMat, uu: &CMat, vv: &CMat, sign: f64) -> Result<CMat> {
    for x in [m, uu, vv] {
        check_dim(p.nrows(), x.nrows())?;
        check_dim(p.ncols(), x.ncols())?;
    }
    let i = c(0.0, sign);
    let k = c(0.5, 0.5 * sign);
    Ok(p + m * i - (uu + vv) * k)
}

/// Choi matrix from the outputs of every input in `set` (same order).
pub fn assemble_choi(set: &InputStateSet, outputs: &[CMat]) -> Result<ProcessMatrix> {
    check_dim(set.len(), outputs.len())?;
    let d = set.dim();
    let mut blocks = vec![CMat::zeros(0, 0); d * d];
    for u in 0..d {
        blocks[u * d + u] = outputs[set.find(InputKind::Basis { u })].clone();
    }
    for u in 0..d {
        for v in u + 1..d {
            let p = &outputs[set.find(InputKind::Plus { u, v })];
            let m = &outputs[set.find(InputKind::Minus { u, v })];
            let (uu, vv) = (blocks[u * d + u].clone(), blocks[v * d + v].clone());
            blocks[u * d + v] = reconstruct_eps_buv(p, m, &uu, &vv)?;
            blocks[v * d + u] = reconstruct_eps_bvu(p, m, &uu, &vv)?;
        }
    }
    ProcessMatrix::from_blocks(d, &blocks)
}

/// Uhlmann fidelity `(tr √(√σ ρ √σ))²`.
pub fn state_fidelity(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    check_dim(target.dim(), rho.dim())?;
    let s = psd_sqrt(target.matrix())?;
    let inner = &s * rho.matrix() * &s;
    let eig = HermitianEigen::new(&inner)?;
    let root: f64 = eig.values.iter().map(|x| x.max(0.0).sqrt()).sum();
    Ok(root * root)
}

/// `tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Populations recorded after one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: Probe,
    /// Frequencies for each order of the recorded basis.
    pub populations: Vec<f64>,
    /// Atoms in the image; `None` for exact populations.
    pub atoms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecords {
    pub input: String,
    pub records: Vec<ProbeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    /// Momentum orders of the recorded populations.
    pub basis: SubspaceMap,
    pub states: Vec<StateRecords>,
}

impl TomographyDataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.basis.dim();
        for s in &self.states {
            for r in &s.records {
                check_dim(n, r.populations.len())?;
                let tol = r.atoms.map_or(1e-9, |a| 5.0 / (a as f64).sqrt());
                if r.populations.iter().any(|p| !(*p >= 0.0))
                    || r.populations.iter().sum::<f64>() > 1.0 + tol
                {
                    return Err(Error::Numerical(format!(
                        "invalid populations for {}",
                        s.input
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Probe unitaries for the nominal lattice, as rank-one POVM vectors.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    basis: SubspaceMap,
    probes: Vec<Probe>,
    /// `projectors[p][m] = Π_pm = v v†`.
    projectors: Vec<Vec<CMat>>,
    /// `I − Σ_m Π_pm`.
    complements: Vec<CMat>,
}

impl MeasurementModel {
    pub fn new(cfg: &LatticeConfig, basis: &SubspaceMap, probes: &[Probe]) -> Result<Self> {
        let pos = basis.positions(cfg)?;
        let dd = basis.dim();
        let mut projectors = Vec::with_capacity(probes.len());
        let mut complements = Vec::with_capacity(probes.len());
        for probe in probes {
            let u = probe.unitary(cfg)?.unwrap_or_else(|| identity(cfg.dim()));
            let mut vs = Vec::with_capacity(dd);
            let mut comp = identity(dd);
            for &m in &pos {
                let v = CVec::from_iterator(dd, pos.iter().map(|&a| u[(m, a)].conj()));
                let pi = &v * v.adjoint();
                comp -= &pi;
                vs.push(pi);
            }
            projectors.push(vs);
            complements.push(comp);
        }
        Ok(Self {
            basis: basis.clone(),
            probes: probes.to_vec(),
            projectors,
            complements,
        })
    }

    pub fn basis(&self) -> &SubspaceMap {
        &self.basis
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    /// Predicted recorded populations for probe `p` on `rho`.
    pub fn predict(&self, p: usize, rho: &CMat) -> Vec<f64> {
        // Π is Hermitian, so tr(Πρ) = Σ conj(Π_ij) ρ_ij.
        self.projectors[p]
            .iter()
            .map(|pi| pi.dotc(rho).re)
            .collect()
    }

    /// Linear-inversion design: rows are (probe, outcome) equations in the
    /// Hermitian coordinates of `ρ` plus the vacuum weight.
    pub fn design(&self) -> DMatrix<f64> {
        let dd = self.basis.dim();
        let cols = dd * dd + 1;
        let rows = self.probes.len() * (dd + 1);
        let mut a = DMatrix::zeros(rows, cols);
        for p in 0..self.probes.len() {
            for m in 0..=dd {
                let row = p * (dd + 1) + m;
                let pi = if m < dd {
                    self.projectors[p][m].clone()
                } else {
                    a[(row, cols - 1)] = 1.0;
                    self.complements[p].clone()
                };
                for (k, coeff) in hermitian_coordinates(&pi).into_iter().enumerate() {
                    a[(row, k)] = coeff;
                }
            }
        }
        a
    }
}

/// `tr(Π G_k)` for the Hermitian basis `G_k` used by [`from_coordinates`].
fn hermitian_coordinates(pi: &CMat) -> Vec<f64> {
    let n = pi.nrows();
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        out.push(pi[(a, a)].re);
    }
    for a in 0..n {
        for b in a + 1..n {
            // G = E_ab + E_ba and G = i E_ab − i E_ba.
            out.push(2.0 * pi[(b, a)].re);
            out.push(-2.0 * pi[(b, a)].im);
        }
    }
    out
}

fn from_coordinates(x: &[f64], n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    for a in 0..n {
        m[(a, a)] = c(x[a], 0.0);
    }
    let mut k = n;
    for a in 0..n {
        for b in a + 1..n {
            m[(a, b)] = c(x[k], x[k + 1]);
            m[(b, a)] = c(x[k], -x[k + 1]);
            k += 2;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MleConfig {
    pub max_iters: usize,
    /// Stop once an accepted step gains less than this in mean log-likelihood per atom.
    pub tolerance: f64,
    /// Weight of the maximally mixed state blended into the initializer for
    /// finite-atom data, so no direction starts at exactly zero.
    pub mixing: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-10,
            mixing: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    /// Estimate over the extended basis.
    pub rho: DensityMatrix,
    /// Population outside the extended basis, `1 − tr ρ`.
    pub vacuum: f64,
    pub purity: f64,
    /// Mean log-likelihood per atom.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when the probes do not determine the state; the estimate then
    /// starts from the maximally mixed state.
    pub identifiable: bool,
    #[serde(skip)]
    pub history: Vec<f64>,
}

struct Likelihood<'a> {
    model: &'a MeasurementModel,
    weights: Vec<f64>,
    /// `freqs[p]` has the recorded outcomes then the unrecorded one.
    freqs: Vec<Vec<f64>>,
    exact: bool,
}

impl<'a> Likelihood<'a> {
    fn new(model: &'a MeasurementModel, records: &[ProbeRecord]) -> Result<Self> {
        check_dim(model.probes.len(), records.len())?;
        let dd = model.basis.dim();
        let total: f64 = records
            .iter()
            .map(|r| r.atoms.map_or(1.0, |a| a as f64))
            .sum();
        let anyfinite = records.iter().any(|r| r.atoms.is_some());
        let mut weights = Vec::with_capacity(records.len());
        let mut freqs = Vec::with_capacity(records.len());
        for (r, probe) in records.iter().zip(&model.probes) {
            if r.probe.label() != probe.label() {
                return Err(Error::config(format!(
                    "record probe `{}` does not match model probe `{}`",
                    r.probe.label(),
                    probe.label()
                )));
            }
            check_dim(dd, r.populations.len())?;
            let w = if anyfinite {
                r.atoms.map_or(1.0, |a| a as f64) / total
            } else {
                1.0 / records.len() as f64
            };
            weights.push(w);
            let mut f: Vec<f64> = r.populations.iter().map(|x| x.max(0.0)).collect();
            let rest = (1.0 - f.iter().sum::<f64>()).max(0.0);
            f.push(rest);
            freqs.push(f);
        }
        Ok(Self {
            model,
            weights,
            freqs,
            exact: !anyfinite,
        })
    }

    fn probabilities(&self, p: usize, rho: &CMat, vacuum: f64) -> Vec<f64> {
        let mut probs = self.model.predict(p, rho);
        let rest = trace(rho).re - probs.iter().sum::<f64>() + vacuum;
        probs.push(rest);
        probs
    }

    fn log_likelihood(&self, rho: &CMat, vacuum: f64) -> f64 {
        let mut total = 0.0;
        for p in 0..self.freqs.len() {
            let probs = self.probabilities(p, rho, vacuum);
            for (f, q) in self.freqs[p].iter().zip(probs) {
                if *f > 0.0 {
                    total += self.weights[p] * f * q.max(1e-300).ln();
                }
            }
        }
        total
    }

    /// `R` restricted to `H′` and its vacuum entry.
    fn r_operator(&self, rho: &CMat, vacuum: f64) -> (CMat, f64) {
        let dd = rho.nrows();
        let mut r = CMat::zeros(dd, dd);
        let mut r_vac = 0.0;
        for p in 0..self.freqs.len() {
            let probs = self.probabilities(p, rho, vacuum);
            let w = self.weights[p];
            for (m, pi) in self.model.projectors[p].iter().enumerate() {
                let f = self.freqs[p][m];
                if f > 0.0 {
                    let k = c(w * f / probs[m].max(1e-300), 0.0);
                    r.zip_apply(pi, |x, y| *x += y * k);
                }
            }
            let f = self.freqs[p][dd];
            if f > 0.0 {
                let ratio = w * f / probs[dd].max(1e-300);
                r += &self.model.complements[p] * c(ratio, 0.0);
                r_vac += ratio;
            }
        }
        (r, r_vac)
    }
}

/// Relative singular-value cutoff for sampled populations.
const SVD_CUTOFF: f64 = 1e-9;
/// Cutoff for exact populations. Those carry only rounding error, so more
/// weakly resolved directions can be kept before that error dominates.
const EXACT_SVD_CUTOFF: f64 = 1e-10;

/// Nearest density matrix on `H′ ⊕ vacuum` to a Hermitian estimate.
fn physical(rho: &CMat, vacuum: f64) -> Result<CMat> {
    let herm = augmented(rho, vacuum);
    project_to_density(&(&herm + herm.adjoint()).scale(0.5), 1.0)
}

fn linear_inversion(model: &MeasurementModel, lik: &Likelihood<'_>) -> Result<(CMat, f64, bool)> {
    let dd = model.basis.dim();
    let a = model.design();
    let mut b = nalgebra::DVector::zeros(a.nrows());
    for p in 0..lik.freqs.len() {
        let w = lik.weights[p].sqrt();
        for m in 0..=dd {
            b[p * (dd + 1) + m] = w * lik.freqs[p][m];
        }
    }
    let mut aw = a;
    for p in 0..lik.freqs.len() {
        let w = lik.weights[p].sqrt();
        for m in 0..=dd {
            aw.row_mut(p * (dd + 1) + m).scale_mut(w);
        }
    }
    let svd = aw.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > SVD_CUTOFF * smax)
        .count();
    let identifiable = rank == dd * dd + 1;
    let cutoff = if lik.exact {
        EXACT_SVD_CUTOFF
    } else {
        SVD_CUTOFF
    };
    let x = svd
        .solve(&b, cutoff * smax)
        .map_err(|e| Error::Numerical(format!("linear inversion failed: {e}")))?;
    Ok((from_coordinates(x.as_slice(), dd), x[dd * dd], identifiable))
}

/// Weighted least-squares inversion of `records`: the Hermitian (not
/// necessarily positive) estimate, its vacuum weight, and whether the probes
/// determine every coordinate.
pub fn linear_inversion_estimate(
    model: &MeasurementModel,
    records: &[ProbeRecord],
) -> Result<(CMat, f64, bool)> {
    let lik = Likelihood::new(model, records)?;
    linear_inversion(model, &lik)
}

fn augmented(rho: &CMat, vacuum: f64) -> CMat {
    let n = rho.nrows();
    let mut m = CMat::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(rho);
    m[(n, n)] = c(vacuum, 0.0);
    m
}

fn split(aug: &CMat) -> (CMat, f64) {
    let n = aug.nrows() - 1;
    (
        aug.view((0, 0), (n, n)).into_owned(),
        aug[(n, n)].re.max(0.0),
    )
}

/// Maximum-likelihood state from one input's records.
///
/// Starts from the linear-inversion estimate projected onto density
/// matrices (or `start`, when given) and iterates `ρ ← RρR/tr(RρR)`,
/// diluting the step whenever the full step would lower the likelihood.
pub fn mle_state_tomography(
    model: &MeasurementModel,
    records: &[ProbeRecord],
    config: &MleConfig,
    start: Option<&StateEstimate>,
) -> Result<StateEstimate> {
    let dd = model.basis.dim();
    let lik = Likelihood::new(model, records)?;
    let noisy = records.iter().any(|r| r.atoms.is_some());
    let (rho, vac, identifiable) = linear_inversion(model, &lik)?;
    let mut aug = match start {
        Some(s) => augmented(s.rho.matrix(), s.vacuum),
        // Minimum-norm inversion: on a non-identifiable probe set this is the
        // least-pure state consistent with the data.
        None => physical(&rho, vac)?,
    };
    if noisy && config.mixing > 0.0 {
        let mix = identity(dd + 1).unscale((dd + 1) as f64);
        aug = aug.scale(1.0 - config.mixing) + mix.scale(config.mixing);
    }
    let (mut rho, mut vac) = split(&aug);
    let mut ll = lik.log_likelihood(&rho, vac);
    let mut history = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let (r, r_vac) = lik.r_operator(&rho, vac);
        let mut eps = f64::INFINITY;
        let mut accepted = None;
        while eps > 1e-8 {
            let (m, m_vac) = if eps.is_infinite() {
                (r.clone(), r_vac)
            } else {
                let s = 1.0 / (1.0 + eps);
                (
                    (identity(dd) + &r * c(eps, 0.0)) * c(s, 0.0),
                    (1.0 + eps * r_vac) * s,
                )
            };
            let mut next = &m * &rho * m.adjoint();
            let mut next_vac = m_vac * m_vac * vac;
            let norm = trace(&next).re + next_vac;
            next.unscale_mut(norm);
            next_vac /= norm;
            next = (&next + next.adjoint()).scale(0.5);
            let next_ll = lik.log_likelihood(&next, next_vac);
            if next_ll >= ll {
                accepted = Some((next, next_vac, next_ll, eps >= 1.0));
                break;
            }
            eps = if eps.is_infinite() { 1.0 } else { eps * 0.5 };
        }
        match accepted {
            Some((next, next_vac, next_ll, full)) => {
                let gain = next_ll - ll;
                rho = next;
                vac = next_vac;
                ll = next_ll;
                history.push(ll);
                // A heavily diluted step is small by construction; only a
                // step of size ε ≥ 1 can signal a stationary point.
                if full && gain < config.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    let rho = DensityMatrix::new(rho.clone())
        .unwrap_or_else(|_| DensityMatrix::from_matrix_unchecked(rho));
    Ok(StateEstimate {
        purity: purity(&rho),
        rho,
        vacuum: vac,
        log_likelihood: ll,
        iterations,
        converged,
        identifiable,
        history,
    })
}

/// Simulation and reconstruction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqptSettings {
    /// Extended reconstruction basis.
    pub basis: SubspaceMap,
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub mle: MleConfig,
    /// Bootstrap resamples; 0 disables error bars.
    #[serde(default)]
    pub bootstrap: usize,
}

/// Number of static-lattice holds in the default probe set.
pub const DEFAULT_HOLD_COUNT: usize = 10;

/// Number of random phase-modulation probes in the default probe set.
pub const DEFAULT_SCRAMBLE_COUNT: usize = 30;
/// Step, bandwidth and coefficient range of the scrambling probes.
pub const SCRAMBLE_DT_SECONDS: f64 = 500e-9;
pub const SCRAMBLE_F_MAX_HZ: f64 = 125e3;
pub const SCRAMBLE_AMPLITUDE: f64 = 1.0;
pub const SCRAMBLE_SEED: u64 = 7;

/// `H′ = {−4, …, 4}`, the compact basis used for noisy data.
pub fn default_extended_basis() -> SubspaceMap {
    SubspaceMap::centered(4)
}

/// Holds plus the default scrambling probes.
pub fn default_probes(cfg: &LatticeConfig) -> Result<Vec<Probe>> {
    let dt = UnitTable::default().seconds_to_dimensionless(SCRAMBLE_DT_SECONDS);
    let mut probes = hold_probes(cfg, DEFAULT_HOLD_COUNT)?;
    probes.extend(scrambling_probes(
        cfg,
        DEFAULT_SCRAMBLE_COUNT,
        dt,
        SCRAMBLE_F_MAX_HZ,
        SCRAMBLE_AMPLITUDE,
        SCRAMBLE_SEED,
    )?);
    Ok(probes)
}

/// Holds of `i·T₀/n` for `i = 0..n` in the static lattice, where `T₀` is the
/// band-gap period at depth `cfg.depth`.
pub fn hold_probes(cfg: &LatticeConfig, n: usize) -> Result<Vec<Probe>> {
    let period = band_gap_timescale(&(*cfg).with_quasimomentum(0.0), &UnitTable::default())?.period;
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                Probe::Bare
            } else {
                Probe::Hold {
                    duration: period * i as f64 / n as f64,
                }
            }
        })
        .collect())
}

/// Random phase-modulation ramps used as additional probes. Each lasts one
/// band-gap period at step `dt`, with harmonics up to `f_max_hz` and
/// coefficients uniform in `±amplitude` radians.
pub fn scrambling_probes(
    cfg: &LatticeConfig,
    count: usize,
    dt: f64,
    f_max_hz: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<Probe>> {
    use rand::Rng;
    let units = UnitTable::default();
    let period = band_gap_timescale(&(*cfg).with_quasimomentum(0.0), &units)?.period;
    let k = (period / dt).round().max(1.0) as usize;
    let t_f = k as f64 * dt;
    let n_max = crate::ramp::harmonic_count(f_max_hz, units.dimensionless_to_seconds(t_f))?.max(1);
    Ok((0..count)
        .map(|i| {
            let mut rng = seeded(derive_seed(seed, i as u64));
            let mut draw = || rng.random_range(-amplitude..=amplitude);
            let ramp = PhaseRamp {
                a0: draw(),
                a: (0..n_max).map(|_| draw()).collect(),
                b: (0..n_max).map(|_| draw()).collect(),
                t_f,
                dt,
            };
            Probe::Ramp {
                label: format!("scramble:{i}"),
                ramp,
            }
        })
        .collect())
}

impl SqptSettings {
    /// Reconstruction on the whole truncated lattice, so no population can
    /// leave `H′`.
    pub fn standard(cfg: &LatticeConfig) -> Result<Self> {
        Ok(Self {
            basis: SubspaceMap::centered(cfg.l_max as i64),
            probes: default_probes(cfg)?,
            mle: MleConfig::default(),
            bootstrap: 0,
        })
    }

    /// Reconstruction on [`default_extended_basis`].
    pub fn compact(cfg: &LatticeConfig) -> Result<Self> {
        Ok(Self {
            basis: default_extended_basis(),
            probes: default_probes(cfg)?,
            mle: MleConfig::default(),
            bootstrap: 0,
        })
    }

    pub fn with_bootstrap(mut self, n: usize) -> Self {
        self.bootstrap = n;
        self
    }
}

/// Simulates the tomography dataset of `gate` (identity when `None`).
///
/// All images share one depth offset drawn from `noise`; image `(i, p)` uses
/// its own seeded stream, so datasets are reproducible from `noise.seed`.
pub fn simulate_dataset(
    gate: Option<&PhaseRamp>,
    cfg: &LatticeConfig,
    inputs: &InputStateSet,
    noise: &NoiseModel,
    settings: &SqptSettings,
) -> Result<(TomographyDataset, f64)> {
    noise.validate()?;
    let offset = noise.draw_dataset_offset(&mut seeded(derive_seed(noise.seed, u64::MAX)));
    let pos = settings.basis.positions(cfg)?;
    let states = (0..inputs.len())
        .into_par_iter()
        .map(|i| {
            let psi = inputs.embedded(i, cfg)?;
            let records = settings
                .probes
                .iter()
                .enumerate()
                .map(|(p, probe)| {
                    let mut rng = image_rng(noise, i as u64, p as u64);
                    let img = simulate_image(
                        Sequence { gate, probe },
                        cfg,
                        noise,
                        offset,
                        &psi,
                        &mut rng,
                    )?;
                    Ok(ProbeRecord {
                        probe: probe.clone(),
                        populations: pos.iter().map(|&k| img.populations[k]).collect(),
                        atoms: noise.atom_number,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StateRecords {
                input: inputs.states[i].label.clone(),
                records,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        TomographyDataset {
            basis: settings.basis.clone(),
            states,
        },
        offset,
    ))
}

/// Process of `gate` from `H` into the extended basis: Kraus operator
/// `P_H′ U E_H`.
pub fn designed_process(
    gate: Option<&PhaseRamp>,
    cfg: &LatticeConfig,
    map: &SubspaceMap,
    basis: &SubspaceMap,
) -> Result<ProcessMatrix> {
    let u = match gate {
        Some(r) => crate::propagate::evolve(r, cfg)?.unitary,
        None => identity(cfg.dim()),
    };
    let k = submatrix(&u, &basis.positions(cfg)?, &map.positions(cfg)?);
    Ok(kraus_to_choi(&KrausProcess::new(vec![k])?))
}

/// Positions of the subspace orders inside the extended basis.
pub fn subspace_in_basis(map: &SubspaceMap, basis: &SubspaceMap) -> Result<Vec<usize>> {
    map.indices()
        .iter()
        .map(|l| {
            basis
                .indices()
                .iter()
                .position(|b| b == l)
                .ok_or(Error::IndexOutOfRange {
                    index: *l,
                    limit: *basis.indices().last().unwrap_or(&0),
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPair {
    pub process: f64,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputReport {
    pub input: String,
    pub state_fidelity: f64,
    pub purity: f64,
    pub vacuum: f64,
    pub iterations: usize,
    pub converged: bool,
    pub identifiable: bool,
}

/// Percentile interval of a bootstrap sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub std: f64,
}

impl Interval {
    /// Central 95% interval and standard deviation of `xs`.
    pub fn percentile95(xs: &[f64]) -> Option<Self> {
        if xs.len() < 2 {
            return None;
        }
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let x = p * (s.len() - 1) as f64;
            let (i, f) = (x.floor() as usize, x.fract());
            if i + 1 < s.len() {
                s[i] * (1.0 - f) + s[i + 1] * f
            } else {
                s[i]
            }
        };
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        Some(Self {
            lo: q(0.025),
            hi: q(0.975),
            std: var.sqrt(),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub th_exp_process: Interval,
    pub th_exp_average: Interval,
    pub oc_exp_process: Interval,
    pub mean_purity: Interval,
    pub mean_state_fidelity: Interval,
}

/// Per-input state results and process fidelities, laid out like a
/// tomography results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqptReport {
    pub target: String,
    pub inputs: Vec<InputReport>,
    pub mean_state_fidelity: f64,
    pub mean_purity: f64,
    /// Ideal target vs designed process.
    pub th_oc: FidelityPair,
    /// Ideal target vs reconstruction.
    pub th_exp: FidelityPair,
    /// Designed vs reconstructed process, in the extended basis.
    pub oc_exp_process: f64,
    /// Designed vs reconstructed process, both restricted to the subspace.
    pub oc_exp_subspace: f64,
    pub alpha_exp: f64,
    pub depth_offset: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

#[derive(Debug, Clone)]
pub struct SqptOutcome {
    /// Reconstructed process from `H` into the extended basis, projected
    /// onto the PSD cone.
    pub process: ProcessMatrix,
    pub designed: ProcessMatrix,
    pub dataset: TomographyDataset,
    pub estimates: Vec<StateEstimate>,
    pub report: SqptReport,
}

struct Metrics {
    inputs: Vec<InputReport>,
    process: ProcessMatrix,
    th_exp: FidelityPair,
    oc_exp: f64,
    oc_exp_sub: f64,
    alpha: f64,
    mean_fs: f64,
    mean_p: f64,
}

fn metrics(
    set: &InputStateSet,
    estimates: &[StateEstimate],
    ideal_outputs: &[DensityMatrix],
    target: &TargetGate,
    designed: &ProcessMatrix,
    sub: &[usize],
) -> Result<Metrics> {
    let outputs: Vec<CMat> = estimates.iter().map(|e| e.rho.matrix().clone()).collect();
    // Combining PSD state estimates need not give a PSD Choi matrix.
    let process = assemble_choi(set, &outputs)?.psd_projected()?;
    let restricted = process.restrict_output(sub)?;
    let fp = process_fidelity(&unitary_choi(&target.matrix), &restricted)?;
    let alpha = alpha_avg(&restricted);
    let d = set.dim();
    let inputs = estimates
        .iter()
        .zip(ideal_outputs)
        .zip(&set.states)
        .map(|((e, ideal), s)| {
            Ok(InputReport {
                input: s.label.clone(),
                state_fidelity: state_fidelity(&e.rho, ideal)?,
                purity: e.purity,
                vacuum: e.vacuum,
                iterations: e.iterations,
                converged: e.converged,
                identifiable: e.identifiable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = inputs.len() as f64;
    Ok(Metrics {
        mean_fs: inputs.iter().map(|r| r.state_fidelity).sum::<f64>() / n,
        mean_p: inputs.iter().map(|r| r.purity).sum::<f64>() / n,
        inputs,
        th_exp: FidelityPair {
            process: fp,
            average: avg_gate_fidelity_formula(fp, alpha, d),
        },
        oc_exp: process_fidelity(designed, &process)?,
        oc_exp_sub: process_fidelity(&designed.restrict_output(sub)?, &restricted)?,
        alpha,
        process,
    })
}

fn resample(records: &[ProbeRecord], rng: &mut crate::rng::SimRng) -> Result<Vec<ProbeRecord>> {
    records
        .iter()
        .map(|r| {
            let populations = match r.atoms {
                Some(_) => sample_frequencies(&r.populations, r.atoms, rng)?,
                None => r.populations.clone(),
            };
            Ok(ProbeRecord {
                probe: r.probe.clone(),
                populations,
                atoms: r.atoms,
            })
        })
        .collect()
}

/// Simulates and reconstructs the process of `gate` on `map`.
///
/// The dataset is generated from `noise` (seeded by `noise.seed`); `seed`
/// drives the bootstrap resampling.
pub fn run_sqpt(
    gate: Option<&PhaseRamp>,
    cfg: &LatticeConfig,
    target: &TargetGate,
    noise: &NoiseModel,
    settings: &SqptSettings,
    seed: u64,
) -> Result<SqptOutcome> {
    let map = &target.subspace;
    let set = build_input_states(map.dim(), map)?;
    let model = MeasurementModel::new(cfg, &settings.basis, &settings.probes)?;
    let sub = subspace_in_basis(map, &settings.basis)?;
    let (dataset, offset) = simulate_dataset(gate, cfg, &set, noise, settings)?;
    dataset.validate()?;
    let estimates = dataset
        .states
        .par_iter()
        .map(|s| mle_state_tomography(&model, &s.records, &settings.mle, None))
        .collect::<Result<Vec<_>>>()?;
    let designed = designed_process(gate, cfg, map, &settings.basis)?;
    let th_oc_fp = process_fidelity(
        &unitary_choi(&target.matrix),
        &designed.restrict_output(&sub)?,
    )?;
    let th_oc_alpha = alpha_avg(&designed.restrict_output(&sub)?);
    let ideal_outputs: Vec<DensityMatrix> = set
        .states
        .iter()
        .map(|s| {
            let out = &target.matrix * &s.amplitudes;
            let mut full = CVec::zeros(settings.basis.dim());
            for (k, &p) in sub.iter().enumerate() {
                full[p] = out[k];
            }
            DensityMatrix::from_pure(&full)
        })
        .collect();
    let m = metrics(&set, &estimates, &ideal_outputs, target, &designed, &sub)?;

    let bootstrap = if settings.bootstrap >= 2 && noise.atom_number.is_some() {
        let samples = (0..settings.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = seeded(derive_seed(seed, b as u64));
                let est = dataset
                    .states
                    .iter()
                    .zip(&estimates)
                    .map(|(s, e)| {
                        let rec = resample(&s.records, &mut rng)?;
                        mle_state_tomography(&model, &rec, &settings.mle, Some(e))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let bm = metrics(&set, &est, &ideal_outputs, target, &designed, &sub)?;
                Ok([
                    bm.th_exp.process,
                    bm.th_exp.average,
                    bm.oc_exp,
                    bm.mean_p,
                    bm.mean_fs,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let col = |i: usize| -> Vec<f64> { samples.iter().map(|s| s[i]).collect() };
        Some(BootstrapSummary {
            resamples: samples.len(),
            th_exp_process: Interval::percentile95(&col(0)).expect("≥ 2 samples"),
            th_exp_average: Interval::percentile95(&col(1)).expect("≥ 2 samples"),
            oc_exp_process: Interval::percentile95(&col(2)).expect("≥ 2 samples"),
            mean_purity: Interval::percentile95(&col(3)).expect("≥ 2 samples"),
            mean_state_fidelity: Interval::percentile95(&col(4)).expect("≥ 2 samples"),
        })
    } else {
        None
    };

    let report = SqptReport {
        target: target.name.clone(),
        inputs: m.inputs,
        mean_state_fidelity: m.mean_fs,
        mean_purity: m.mean_p,
        th_oc: FidelityPair {
            process: th_oc_fp,
            average: avg_gate_fidelity_formula(th_oc_fp, th_oc_alpha, map.dim()),
        },
        th_exp: m.th_exp,
        oc_exp_process: m.oc_exp,
        oc_exp_subspace: m.oc_exp_sub,
        alpha_exp: m.alpha,
        depth_offset: offset,
        bootstrap,
    };
    Ok(SqptOutcome {
        process: m.process,
        designed,
        dataset,
        estimates,
        report,
    })
}
