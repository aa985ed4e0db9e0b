//! Conversion between laboratory units and the lattice's natural units.

use serde::{Deserialize, Serialize};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const RB87_MASS_U: f64 = 86.909_180_527;

/// Lattice wavelength and atomic species. Energies are measured in
/// `E_L = ħ²k_L²/2m` with `k_L = 4π/λ`, times in `ħ/E_L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitTable {
    pub wavelength_m: f64,
    pub mass_kg: f64,
}

impl Default for UnitTable {
    fn default() -> Self {
        Self::rubidium87(1064e-9)
    }
}

impl UnitTable {
    pub fn rubidium87(wavelength_m: f64) -> Self {
        Self {
            wavelength_m,
            mass_kg: RB87_MASS_U * ATOMIC_MASS_UNIT,
        }
    }

    pub fn lattice_wavenumber(&self) -> f64 {
        4.0 * std::f64::consts::PI / self.wavelength_m
    }

    pub fn lattice_energy_j(&self) -> f64 {
        let k = self.lattice_wavenumber();
        HBAR * HBAR * k * k / (2.0 * self.mass_kg)
    }

    /// `ħ/E_L` in seconds.
    pub fn time_unit_s(&self) -> f64 {
        HBAR / self.lattice_energy_j()
    }

    pub fn seconds_to_dimensionless(&self, t: f64) -> f64 {
        t / self.time_unit_s()
    }

    pub fn dimensionless_to_seconds(&self, t: f64) -> f64 {
        t * self.time_unit_s()
    }

    /// Physical frequency (Hz) to cycles per dimensionless time unit.
    pub fn hertz_to_dimensionless(&self, f: f64) -> f64 {
        f * self.time_unit_s()
    }

    pub fn dimensionless_to_hertz(&self, f: f64) -> f64 {
        f / self.time_unit_s()
    }
}
