//! Piecewise-constant propagation of the phase-shaken lattice.
//!
//! Shifting the lattice phase is a momentum-order-dependent gauge
//! transformation, `H(φ) = S(φ) H(0) S(φ)†` with `S(φ) = diag(e^{iℓφ})`, so
//! every step exponential shares the eigenvectors of `H(0)` up to that
//! diagonal phase:
//!
//! ```text
//! exp(−i dt H(φ))_{ab} = e^{i(ℓ_a − ℓ_b)φ} · exp(−i dt H(0))_{ab}
//! ```
//!
//! [`StepFactory`] diagonalises `H(0)` once per lattice configuration and
//! produces each step (and its exact derivative in `φ`) from it.

use num_complex::Complex64;

use crate::error::{check_dim, Result};
use crate::lattice::{build_hamiltonian, Hamiltonian, LatticeConfig, SubspaceMap};
use crate::linalg::{c, embedding, identity, submatrix, CMat, CVec, HermitianEigen};
use crate::ramp::PhaseRamp;

/// `exp(−i·dt·H)` through the Hermitian eigendecomposition of `H`.
pub fn step_propagator(h: &Hamiltonian, dt: f64) -> Result<CMat> {
    let eig = HermitianEigen::new(h.matrix())?;
    Ok(eig.map(|lambda| Complex64::from_polar(1.0, -dt * lambda)))
}

/// Step exponentials for one lattice configuration and time step.
#[derive(Debug, Clone)]
pub struct StepFactory {
    orders: Vec<f64>,
    eigen: HermitianEigen,
    base: CMat,
    dt: f64,
}

impl StepFactory {
    pub fn new(cfg: &LatticeConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        let h0 = build_hamiltonian(cfg, 0.0);
        let eigen = HermitianEigen::new(h0.matrix())?;
        let base = eigen.map(|lambda| Complex64::from_polar(1.0, -dt * lambda));
        Ok(Self {
            orders: cfg.orders().map(|l| l as f64).collect(),
            eigen,
            base,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Eigenpairs of `H(0)`; those of `H(φ)` are `(λ, S(φ)·v)`.
    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    /// `exp(−i dt H(0))`.
    pub fn base(&self) -> &CMat {
        &self.base
    }

    /// `exp(−iτH(0))`: a hold of duration `τ` in the unshifted static lattice.
    pub fn hold(&self, duration: f64) -> CMat {
        self.eigen
            .map(|lambda| Complex64::from_polar(1.0, -duration * lambda))
    }

    fn gauge(&self, phi: f64) -> Vec<Complex64> {
        self.orders
            .iter()
            .map(|&l| Complex64::from_polar(1.0, l * phi))
            .collect()
    }

    pub fn step(&self, phi: f64) -> CMat {
        let g = self.gauge(phi);
        CMat::from_fn(self.dim(), self.dim(), |a, b| {
            g[a] * self.base[(a, b)] * g[b].conj()
        })
    }

    /// `∂/∂φ exp(−i dt H(φ))`, entrywise `i(ℓ_a − ℓ_b)·U_ab`.
    pub fn step_derivative(&self, phi: f64) -> CMat {
        let g = self.gauge(phi);
        CMat::from_fn(self.dim(), self.dim(), |a, b| {
            let diff = self.orders[a] - self.orders[b];
            c(0.0, diff) * g[a] * self.base[(a, b)] * g[b].conj()
        })
    }

    /// `U(φ)·m` without materialising `U(φ)`.
    pub fn apply(&self, phi: f64, m: &CMat) -> CMat {
        let g = self.gauge(phi);
        let mut rotated = m.clone();
        for (a, ga) in g.iter().enumerate() {
            let conj = ga.conj();
            rotated.row_mut(a).iter_mut().for_each(|z| *z *= conj);
        }
        let mut out = &self.base * rotated;
        for (a, ga) in g.iter().enumerate() {
            out.row_mut(a).iter_mut().for_each(|z| *z *= ga);
        }
        out
    }

    /// `m·U(φ)` without materialising `U(φ)`.
    pub fn apply_right(&self, phi: f64, m: &CMat) -> CMat {
        let g = self.gauge(phi);
        let mut rotated = m.clone();
        for (b, gb) in g.iter().enumerate() {
            rotated.column_mut(b).iter_mut().for_each(|z| *z *= gb);
        }
        let mut out = rotated * &self.base;
        for (b, gb) in g.iter().enumerate() {
            let conj = gb.conj();
            out.column_mut(b).iter_mut().for_each(|z| *z *= conj);
        }
        out
    }
}

/// Result of propagating a ramp: the ordered product `U_{k−1} ⋯ U_0` plus
/// the shared step factory for gradient reuse.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub phases: Vec<f64>,
    pub unitary: CMat,
    pub factory: StepFactory,
}

pub fn evolve(ramp: &PhaseRamp, cfg: &LatticeConfig) -> Result<Evolution> {
    ramp.validate()?;
    let factory = StepFactory::new(cfg, ramp.dt)?;
    let phases = ramp.samples();
    let unitary = evolve_phases(&factory, &phases, identity(factory.dim()));
    Ok(Evolution {
        phases,
        unitary,
        factory,
    })
}

/// Applies the steps for `phases` in order to `initial` (later steps on the left).
pub fn evolve_phases(factory: &StepFactory, phases: &[f64], initial: CMat) -> CMat {
    phases
        .iter()
        .fold(initial, |acc, &phi| factory.apply(phi, &acc))
}

/// Evolves a single state vector through the ramp.
pub fn evolve_state(ramp: &PhaseRamp, cfg: &LatticeConfig, psi: &CVec) -> Result<CVec> {
    ramp.validate()?;
    let factory = StepFactory::new(cfg, ramp.dt)?;
    check_dim(factory.dim(), psi.len())?;
    let m = CMat::from_column_slice(psi.len(), 1, psi.as_slice());
    let out = evolve_phases(&factory, &ramp.samples(), m);
    Ok(CVec::from_column_slice(out.as_slice()))
}

/// `d×d` block of `u` on the subspace orders. Generally sub-unitary.
pub fn project_to_subspace(u: &CMat, map: &SubspaceMap, cfg: &LatticeConfig) -> Result<CMat> {
    check_dim(cfg.dim(), u.nrows())?;
    let pos = map.positions(cfg)?;
    Ok(submatrix(u, &pos, &pos))
}

/// Embeds a subspace operator into the full truncated basis (zeros elsewhere).
pub fn embed_operator(op: &CMat, map: &SubspaceMap, cfg: &LatticeConfig) -> Result<CMat> {
    check_dim(map.dim(), op.nrows())?;
    let e = embedding(cfg.dim(), &map.positions(cfg)?);
    Ok(&e * op * e.adjoint())
}

/// Embeds a subspace operator, acting as the identity on every other order.
pub fn embed_unitary(op: &CMat, map: &SubspaceMap, cfg: &LatticeConfig) -> Result<CMat> {
    let pos = map.positions(cfg)?;
    let mut out = embed_operator(op, map, cfg)?;
    for k in 0..cfg.dim() {
        if !pos.contains(&k) {
            out[(k, k)] = c(1.0, 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, unitarity_error};
    use crate::rng::{random_hermitian, seeded};

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let h = Hamiltonian::from_matrix(CMat::zeros(4, 4)).unwrap();
        let u = step_propagator(&h, 0.7).unwrap();
        assert!(max_abs(&(u - identity(4))) < 1e-15);
    }

    #[test]
    fn diagonal_exponential() {
        let h = Hamiltonian::from_matrix(CMat::from_diagonal(&CVec::from_vec(vec![
            c(1.0, 0.0),
            c(4.0, 0.0),
        ])))
        .unwrap();
        let u = step_propagator(&h, 0.5).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -0.5)).norm() < 1e-14);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, -2.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn gauge_steps_match_direct_exponential() {
        let cfg = LatticeConfig::new(5.5)
            .with_quasimomentum(0.07)
            .with_l_max(6);
        let factory = StepFactory::new(&cfg, 0.03).unwrap();
        for &phi in &[0.0, 0.4, -2.1, 3.0] {
            let direct = step_propagator(&build_hamiltonian(&cfg, phi), 0.03).unwrap();
            assert!(max_abs(&(factory.step(phi) - direct)) < 1e-13);
        }
    }

    #[test]
    fn apply_matches_dense_products() {
        let cfg = LatticeConfig::new(3.0).with_l_max(4);
        let factory = StepFactory::new(&cfg, 0.1).unwrap();
        let mut rng = seeded(3);
        let m = random_hermitian(&mut rng, 9);
        let u = factory.step(1.3);
        assert!(max_abs(&(factory.apply(1.3, &m) - &u * &m)) < 1e-13);
        assert!(max_abs(&(factory.apply_right(1.3, &m) - &m * &u)) < 1e-13);
    }

    #[test]
    fn constant_ramp_is_single_exponential() {
        let cfg = LatticeConfig::new(5.0).with_l_max(6);
        let ramp = PhaseRamp::zero(2, 2.0, 0.05).unwrap();
        let evo = evolve(&ramp, &cfg).unwrap();
        let direct = step_propagator(&build_hamiltonian(&cfg, 0.0), 2.0).unwrap();
        assert!(max_abs(&(evo.unitary - direct)) < 1e-11);

        let one = PhaseRamp::zero(1, 0.5, 0.5).unwrap();
        let evo = evolve(&PhaseRamp { a0: 0.8, ..one }, &cfg).unwrap();
        let direct = step_propagator(&build_hamiltonian(&cfg, 0.8), 0.5).unwrap();
        assert!(max_abs(&(evo.unitary - direct)) < 1e-13);
    }

    #[test]
    fn projection_of_identity_and_full_leakage() {
        let cfg = LatticeConfig::new(5.0);
        let map = SubspaceMap::symmetric_pair(1);
        let p = project_to_subspace(&identity(cfg.dim()), &map, &cfg).unwrap();
        assert!(max_abs(&(p - identity(2))) < 1e-15);

        // A permutation shifting every order by +3 moves ±1 to 2 and 4.
        let n = cfg.dim();
        let mut shift = CMat::zeros(n, n);
        for k in 0..n {
            shift[((k + 3) % n, k)] = c(1.0, 0.0);
        }
        let p = project_to_subspace(&shift, &map, &cfg).unwrap();
        assert!(max_abs(&p) == 0.0);
    }

    #[test]
    fn random_hermitian_step_is_unitary() {
        let mut rng = seeded(11);
        let h = Hamiltonian::from_matrix(random_hermitian(&mut rng, 5)).unwrap();
        let u = step_propagator(&h, 0.9).unwrap();
        assert!(unitarity_error(&u) < 1e-12);
    }
}
