//! Simulated time-of-flight population imaging.
//!
//! One *image* records the diffraction-order populations of an ensemble of
//! atoms that all went through the same sequence: an optional gate ramp
//! followed by a [`Probe`]. Within an image the lattice depth is fixed
//! (nominal + dataset offset + per-image jitter) while every atom carries its
//! own quasimomentum, so the recorded populations are those of an incoherent
//! mixture over `q ~ N(0, σ_q)`. Finite atom number enters as multinomial
//! counting noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lattice::LatticeConfig;
use crate::linalg::{c, CMat, CVec};
use crate::propagate::{evolve_phases, StepFactory};
use crate::ramp::PhaseRamp;
use crate::rng::{derive_seed, seeded, SimRng};

/// Typical number of atoms in one image.
pub const DEFAULT_ATOM_NUMBER: u64 = 500_000;

/// Experimental imperfections applied by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Fixed additive error on the lattice depth.
    pub depth_offset: f64,
    /// Half-width of an extra uniform depth error drawn once per dataset.
    pub depth_offset_range: f64,
    /// Standard deviation of the per-image Gaussian depth error.
    pub depth_jitter_sigma: f64,
    /// Standard deviation of the quasimomentum distribution.
    pub quasimomentum_sigma: f64,
    /// Atoms per image; `None` records exact populations. Serialized as an
    /// integer or the string `"exact"`.
    #[serde(with = "atom_count")]
    pub atom_number: Option<u64>,
    /// Quasimomentum samples averaged into one image.
    pub quasimomentum_draws: usize,
    pub seed: u64,
}

mod atom_count {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Count(u64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => Repr::Count(*n),
            None => Repr::Word("exact".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            Some(Repr::Count(n)) => Ok(Some(n)),
            None => Ok(None),
            Some(Repr::Word(w)) if w == "exact" => Ok(None),
            Some(Repr::Word(w)) => Err(serde::de::Error::custom(format!(
                "atom_number must be a count or \"exact\", got \"{w}\""
            ))),
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            depth_offset: 0.0,
            depth_offset_range: 0.0,
            depth_jitter_sigma: 0.0,
            quasimomentum_sigma: 0.0,
            atom_number: Some(DEFAULT_ATOM_NUMBER),
            quasimomentum_draws: 32,
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// No imperfections and exact populations.
    pub fn noiseless() -> Self {
        Self {
            atom_number: None,
            ..Self::default()
        }
    }

    /// Depth offset uniform in ±0.05, `σ_q = 0.01`, 10⁴ atoms per image.
    pub fn experimental_preset(seed: u64) -> Self {
        Self {
            depth_offset_range: 0.05,
            quasimomentum_sigma: 0.01,
            atom_number: Some(10_000),
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_atom_number(mut self, atoms: Option<u64>) -> Self {
        self.atom_number = atoms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.depth_offset,
            self.depth_offset_range,
            self.depth_jitter_sigma,
            self.quasimomentum_sigma,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::config("noise parameters must be finite"));
        }
        if self.depth_offset_range < 0.0
            || self.depth_jitter_sigma < 0.0
            || self.quasimomentum_sigma < 0.0
        {
            return Err(Error::config("noise widths must be non-negative"));
        }
        if self.atom_number == Some(0) {
            return Err(Error::config("atom_number must be at least 1"));
        }
        if self.quasimomentum_draws == 0 {
            return Err(Error::config("quasimomentum_draws must be at least 1"));
        }
        Ok(())
    }

    /// True when evolution is deterministic (no depth or `q` noise).
    pub fn is_coherent(&self) -> bool {
        self.depth_offset == 0.0
            && self.depth_offset_range == 0.0
            && self.depth_jitter_sigma == 0.0
            && self.quasimomentum_sigma == 0.0
    }

    pub fn is_noiseless(&self) -> bool {
        self.is_coherent() && self.atom_number.is_none()
    }

    /// Depth error shared by every image of one dataset.
    pub fn draw_dataset_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.depth_offset_range > 0.0 {
            self.depth_offset + rng.random_range(-self.depth_offset_range..=self.depth_offset_range)
        } else {
            self.depth_offset
        }
    }

    fn draw_depth<R: Rng + ?Sized>(&self, nominal: f64, dataset_offset: f64, rng: &mut R) -> f64 {
        let jitter = if self.depth_jitter_sigma > 0.0 {
            Normal::new(0.0, self.depth_jitter_sigma)
                .expect("validated sigma")
                .sample(rng)
        } else {
            0.0
        };
        (nominal + dataset_offset + jitter).max(0.0)
    }

    fn draw_quasimomentum<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.quasimomentum_sigma > 0.0 {
            let q: f64 = Normal::new(0.0, self.quasimomentum_sigma)
                .expect("validated sigma")
                .sample(rng);
            q.clamp(-0.5, 0.5)
        } else {
            0.0
        }
    }
}

/// Operation applied after the gate and before imaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// Direct imaging.
    Bare,
    /// Hold in the static lattice (phase 0) for a dimensionless duration.
    Hold { duration: f64 },
    /// A designed phase ramp, subject to the same depth and `q` noise.
    Ramp { label: String, ramp: PhaseRamp },
    /// A noise-free unitary on the full truncated basis.
    Unitary {
        label: String,
        #[serde(with = "crate::io::cmat")]
        matrix: CMat,
    },
}

impl Probe {
    pub fn label(&self) -> String {
        match self {
            Probe::Bare => "bare".into(),
            Probe::Hold { duration } => format!("hold:{duration}"),
            Probe::Ramp { label, .. } | Probe::Unitary { label, .. } => label.clone(),
        }
    }

    /// Unitary of the probe for a given lattice, `None` for [`Probe::Bare`].
    pub fn unitary(&self, cfg: &LatticeConfig) -> Result<Option<CMat>> {
        match self {
            Probe::Bare => Ok(None),
            Probe::Hold { duration } => Ok(Some(StepFactory::new(cfg, 1.0)?.hold(*duration))),
            Probe::Ramp { ramp, .. } => Ok(Some(crate::propagate::evolve(ramp, cfg)?.unitary)),
            Probe::Unitary { matrix, .. } => {
                check_dim(cfg.dim(), matrix.nrows())?;
                Ok(Some(matrix.clone()))
            }
        }
    }
}

/// Sequence run before imaging: an optional gate, then a probe.
#[derive(Debug, Clone, Copy)]
pub struct Sequence<'a> {
    pub gate: Option<&'a PhaseRamp>,
    pub probe: &'a Probe,
}

fn as_column(psi: &CVec) -> CMat {
    CMat::from_column_slice(psi.len(), 1, psi.as_slice())
}

fn check_normalized(psi: &CVec) -> Result<()> {
    let norm = psi.norm_squared();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Numerical(format!("state norm² {norm} is not 1")));
    }
    Ok(())
}

/// Runs `seq` on `psi` in the lattice `cfg` without any noise.
pub fn run_sequence(seq: Sequence<'_>, cfg: &LatticeConfig, psi: &CVec) -> Result<CVec> {
    check_dim(cfg.dim(), psi.len())?;
    let mut state = as_column(psi);
    let mut static_factory: Option<StepFactory> = None;
    if let Some(ramp) = seq.gate {
        ramp.validate()?;
        let f = StepFactory::new(cfg, ramp.dt)?;
        state = evolve_phases(&f, &ramp.samples(), state);
        static_factory = Some(f);
    }
    state = match seq.probe {
        Probe::Bare => state,
        Probe::Hold { duration } => {
            let f = match static_factory {
                Some(f) => f,
                None => StepFactory::new(cfg, 1.0)?,
            };
            f.hold(*duration) * state
        }
        Probe::Ramp { ramp, .. } => {
            ramp.validate()?;
            let f = StepFactory::new(cfg, ramp.dt)?;
            evolve_phases(&f, &ramp.samples(), state)
        }
        Probe::Unitary { matrix, .. } => {
            check_dim(cfg.dim(), matrix.nrows())?;
            matrix * state
        }
    };
    Ok(CVec::from_column_slice(state.as_slice()))
}

/// One noisy run: draws `(s + offset + jitter, q)` and evolves `psi` through
/// `ramp` in that lattice.
pub fn evolve_with_noise<R: Rng + ?Sized>(
    ramp: &PhaseRamp,
    cfg: &LatticeConfig,
    noise: &NoiseModel,
    psi: &CVec,
    rng: &mut R,
) -> Result<CVec> {
    noise.validate()?;
    let offset = noise.draw_dataset_offset(rng);
    let run = (*cfg)
        .with_depth(noise.draw_depth(cfg.depth, offset, rng))
        .with_quasimomentum(noise.draw_quasimomentum(rng));
    run_sequence(
        Sequence {
            gate: Some(ramp),
            probe: &Probe::Bare,
        },
        &run,
        psi,
    )
}

/// Average of `|ψ(q)⟩⟨ψ(q)|` over `draws` quasimomentum samples after the
/// ramp, at the nominal depth plus the fixed offset.
pub fn quasimomentum_mixture(
    ramp: &PhaseRamp,
    cfg: &LatticeConfig,
    noise: &NoiseModel,
    psi: &CVec,
    draws: usize,
) -> Result<CMat> {
    noise.validate()?;
    let mut rng = seeded(noise.seed);
    let n = cfg.dim();
    let mut rho = CMat::zeros(n, n);
    let base = (*cfg).with_depth((cfg.depth + noise.depth_offset).max(0.0));
    for _ in 0..draws {
        let run = base.with_quasimomentum(noise.draw_quasimomentum(&mut rng));
        let out = run_sequence(
            Sequence {
                gate: Some(ramp),
                probe: &Probe::Bare,
            },
            &run,
            psi,
        )?;
        rho += &out * out.adjoint();
    }
    Ok(rho.unscale(draws.max(1) as f64))
}

/// Multinomial counting of `atoms` over `probs`, returned as frequencies.
/// Probability mass missing from `probs` (if it sums below one) is an
/// unrecorded outcome. With `atoms = None` the (clipped) inputs are returned
/// unchanged and need not sum to at most one.
pub fn sample_frequencies<R: Rng + ?Sized>(
    probs: &[f64],
    atoms: Option<u64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::Numerical(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let Some(n) = atoms else {
        return Ok(probs.iter().map(|p| p.max(0.0)).collect());
    };
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    if total > 1.0 + 1e-8 {
        return Err(Error::Numerical(format!(
            "probabilities sum to {total} > 1"
        )));
    }
    let mut remaining_atoms = n;
    let mut remaining_mass = 1.0_f64;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let p = p.max(0.0);
        let k = if remaining_atoms == 0 || remaining_mass <= 0.0 {
            0
        } else {
            let ratio = (p / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining_atoms, ratio)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng)
        };
        remaining_atoms -= k;
        remaining_mass -= p;
        out.push(k as f64 / n as f64);
    }
    Ok(out)
}

/// Images `psi` directly with counting noise from `noise.atom_number`.
pub fn measure_populations<R: Rng + ?Sized>(
    psi: &CVec,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_normalized(psi)?;
    let probs: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    sample_frequencies(&probs, noise.atom_number, rng)
}

/// Populations of one image; indices follow `cfg.orders()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub populations: Vec<f64>,
    pub depth: f64,
}

/// Simulates one image of `seq` applied to `psi`.
///
/// `dataset_offset` is the depth error shared by the dataset (see
/// [`NoiseModel::draw_dataset_offset`]). Exact populations are averaged over
/// `noise.quasimomentum_draws` quasimomenta before counting noise is applied.
pub fn simulate_image<R: Rng + ?Sized>(
    seq: Sequence<'_>,
    cfg: &LatticeConfig,
    noise: &NoiseModel,
    dataset_offset: f64,
    psi: &CVec,
    rng: &mut R,
) -> Result<Image> {
    check_normalized(psi)?;
    let depth = noise.draw_depth(cfg.depth, dataset_offset, rng);
    let draws = if noise.quasimomentum_sigma > 0.0 {
        noise.quasimomentum_draws
    } else {
        1
    };
    let mut probs = vec![0.0; cfg.dim()];
    for _ in 0..draws {
        let run = (*cfg)
            .with_depth(depth)
            .with_quasimomentum(noise.draw_quasimomentum(rng));
        let out = run_sequence(seq, &run, psi)?;
        for (p, z) in probs.iter_mut().zip(out.iter()) {
            *p += z.norm_sqr() / draws as f64;
        }
    }
    Ok(Image {
        populations: sample_frequencies(&probs, noise.atom_number, rng)?,
        depth,
    })
}

/// Independent generator for image `index` of the dataset seeded by `noise`.
pub fn image_rng(noise: &NoiseModel, stream: u64, index: u64) -> SimRng {
    seeded(derive_seed(derive_seed(noise.seed, stream), index))
}

/// Superposition `Σ amps[i]·|orders[i]⟩` in the truncated basis of `cfg`.
pub fn momentum_state(cfg: &LatticeConfig, orders: &[i64], amps: &[Complex64]) -> Result<CVec> {
    check_dim(orders.len(), amps.len())?;
    let mut psi = CVec::zeros(cfg.dim());
    for (&l, &a) in orders.iter().zip(amps) {
        psi[cfg.position(l)?] += a;
    }
    Ok(psi)
}

/// `|ℓ⟩` in the truncated basis of `cfg`.
pub fn momentum_basis_state(cfg: &LatticeConfig, ell: i64) -> Result<CVec> {
    momentum_state(cfg, &[ell], &[c(1.0, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::evolve_state;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn cfg() -> LatticeConfig {
        LatticeConfig::new(5.5)
    }

    #[test]
    fn atom_number_serializes_as_count_or_exact() {
        for n in [NoiseModel::noiseless(), NoiseModel::default()] {
            let text = serde_json::to_string(&n).unwrap();
            assert_eq!(serde_json::from_str::<NoiseModel>(&text).unwrap(), n);
        }
        let exact: NoiseModel = serde_json::from_str(r#"{"atom_number": "exact"}"#).unwrap();
        assert_eq!(exact.atom_number, None);
        let null: NoiseModel = serde_json::from_str(r#"{"atom_number": null}"#).unwrap();
        assert_eq!(null.atom_number, None);
        assert!(serde_json::from_str::<NoiseModel>(r#"{"atom_number": "many"}"#).is_err());
    }

    #[test]
    fn ground_order_is_measured_exactly() {
        let psi = momentum_basis_state(&cfg(), 0).unwrap();
        let noise = NoiseModel::experimental_preset(3);
        let pops = measure_populations(&psi, &noise, &mut seeded(1)).unwrap();
        let centre = cfg().position(0).unwrap();
        assert_eq!(pops[centre], 1.0);
        assert_eq!(pops.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn infinite_atoms_give_exact_half() {
        let a = c(FRAC_1_SQRT_2, 0.0);
        let psi = momentum_state(&cfg(), &[-1, 1], &[a, a]).unwrap();
        let pops = measure_populations(&psi, &NoiseModel::noiseless(), &mut seeded(0)).unwrap();
        assert!((pops[cfg().position(-1).unwrap()] - 0.5).abs() < 1e-15);
        assert!((pops[cfg().position(1).unwrap()] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn counting_noise_matches_binomial_spread() {
        let n = 10_000u64;
        let predicted = (0.25 / n as f64).sqrt();
        let mut rng = seeded(42);
        let samples: Vec<f64> = (0..1000)
            .map(|_| sample_frequencies(&[0.5, 0.5], Some(n), &mut rng).unwrap()[0])
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var =
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let std = var.sqrt();
        assert!((predicted - 0.005).abs() < 1e-12);
        assert!(
            (std / predicted - 1.0).abs() < 0.2,
            "std {std} vs {predicted}"
        );
    }

    #[test]
    fn frequencies_conserve_atoms() {
        let f = sample_frequencies(&[0.2, 0.3, 0.1], Some(1000), &mut seeded(5)).unwrap();
        let total: f64 = f.iter().sum();
        assert!(total <= 1.0 + 1e-12);
        assert!(sample_frequencies(&[0.7, 0.7], Some(10), &mut seeded(0)).is_err());
        assert!(sample_frequencies(&[0.7, 0.7], None, &mut seeded(0)).is_ok());
    }

    #[test]
    fn zero_noise_run_is_plain_evolution() {
        let ramp = PhaseRamp {
            a0: 0.3,
            a: vec![0.2, -0.1],
            b: vec![0.05, 0.4],
            t_f: 2.0,
            dt: 0.05,
        };
        let psi = momentum_basis_state(&cfg(), 1).unwrap();
        let noise = NoiseModel::noiseless();
        let a = evolve_with_noise(&ramp, &cfg(), &noise, &psi, &mut seeded(9)).unwrap();
        let b = evolve_state(&ramp, &cfg(), &psi).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(NoiseModel::default().validate().is_ok());
        let bad = NoiseModel {
            quasimomentum_sigma: -1.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        assert!(NoiseModel::default()
            .with_atom_number(Some(0))
            .validate()
            .is_err());
        assert!(NoiseModel::noiseless().is_noiseless());
        assert!(!NoiseModel::experimental_preset(0).is_coherent());
    }

    #[test]
    fn seeded_images_repeat() {
        let noise = NoiseModel::experimental_preset(11);
        let a = c(FRAC_1_SQRT_2, 0.0);
        let psi = momentum_state(&cfg(), &[-1, 1], &[a, a]).unwrap();
        let probe = Probe::Hold { duration: 0.7 };
        let seq = Sequence {
            gate: None,
            probe: &probe,
        };
        let one = simulate_image(
            seq,
            &cfg(),
            &noise,
            0.01,
            &psi,
            &mut image_rng(&noise, 0, 0),
        )
        .unwrap();
        let two = simulate_image(
            seq,
            &cfg(),
            &noise,
            0.01,
            &psi,
            &mut image_rng(&noise, 0, 0),
        )
        .unwrap();
        assert_eq!(one, two);
    }
}
