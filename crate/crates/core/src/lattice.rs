//! Optical lattice model in the plane-wave momentum basis.
//!
//! Basis state `ℓ` (for `ℓ = −l_max ..= l_max`) carries momentum `2ℓħk` in
//! the lab frame. The lattice phase `φ` couples neighbouring orders:
//!
//! ```text
//! H_{ℓ,ℓ}   = (ℓ + q)²
//! H_{ℓ,ℓ−1} = −(s/4) e^{iφ},   H_{ℓ−1,ℓ} = −(s/4) e^{−iφ}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, HermitianEigen};
use crate::units::UnitTable;

pub const DEFAULT_L_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Dimensionless depth `s` in units of `E_L`.
    pub depth: f64,
    /// Quasi-momentum in units of the lattice wave number, `|q| ≤ 1/2`.
    #[serde(default)]
    pub quasimomentum: f64,
    /// Basis spans `ℓ = −l_max ..= l_max`.
    #[serde(default = "default_l_max")]
    pub l_max: usize,
}

fn default_l_max() -> usize {
    DEFAULT_L_MAX
}

impl LatticeConfig {
    pub fn new(depth: f64) -> Self {
        Self {
            depth,
            quasimomentum: 0.0,
            l_max: DEFAULT_L_MAX,
        }
    }

    pub fn with_quasimomentum(mut self, q: f64) -> Self {
        self.quasimomentum = q;
        self
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = l_max;
        self
    }

    pub fn with_depth(mut self, depth: f64) -> Self {
        self.depth = depth;
        self
    }

    /// Basis size `2 l_max + 1`.
    pub fn dim(&self) -> usize {
        2 * self.l_max + 1
    }

    /// Momentum order of each basis position.
    pub fn orders(&self) -> impl Iterator<Item = i64> + '_ {
        let l = self.l_max as i64;
        -l..=l
    }

    /// Basis position of momentum order `ell`.
    pub fn position(&self, ell: i64) -> Result<usize> {
        let l = self.l_max as i64;
        if ell.abs() > l {
            return Err(Error::IndexOutOfRange {
                index: ell,
                limit: l,
            });
        }
        Ok((ell + l) as usize)
    }

    /// Depth zero is allowed: it is the free-particle limit used in tests.
    pub fn validate(&self) -> Result<()> {
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(Error::config(format!(
                "lattice depth must be non-negative, got {}",
                self.depth
            )));
        }
        if !(self.quasimomentum.abs() <= 0.5) {
            return Err(Error::config(format!(
                "quasi-momentum must satisfy |q| <= 0.5, got {}",
                self.quasimomentum
            )));
        }
        if self.l_max < 2 {
            return Err(Error::config("l_max must be at least 2"));
        }
        Ok(())
    }

    /// The truncation must leave two spare orders beyond the outermost
    /// subspace index.
    pub fn check_subspace(&self, map: &SubspaceMap) -> Result<()> {
        let widest = map
            .indices
            .iter()
            .map(|i| i.unsigned_abs())
            .max()
            .unwrap_or(0) as usize;
        if self.l_max < widest + 2 {
            return Err(Error::config(format!(
                "l_max = {} too small for subspace reaching |ℓ| = {widest}",
                self.l_max
            )));
        }
        Ok(())
    }
}

/// Ordered momentum orders spanning the qudit computational basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct SubspaceMap {
    indices: Vec<i64>,
}

impl SubspaceMap {
    pub fn new(indices: Vec<i64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("subspace must contain at least one order"));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(format!(
                "subspace orders must be strictly increasing: {indices:?}"
            )));
        }
        Ok(Self { indices })
    }

    /// `{−j, +j}`.
    pub fn symmetric_pair(j: i64) -> Self {
        Self {
            indices: vec![-j, j],
        }
    }

    /// `{−m, …, +m}`.
    pub fn centered(m: i64) -> Self {
        Self {
            indices: (-m..=m).collect(),
        }
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Basis positions of the subspace orders inside `cfg`'s truncation.
    pub fn positions(&self, cfg: &LatticeConfig) -> Result<Vec<usize>> {
        self.indices.iter().map(|&ell| cfg.position(ell)).collect()
    }
}

impl TryFrom<Vec<i64>> for SubspaceMap {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        SubspaceMap::new(v)
    }
}

impl From<SubspaceMap> for Vec<i64> {
    fn from(m: SubspaceMap) -> Self {
        m.indices
    }
}

/// Hermitian lattice Hamiltonian in the truncated momentum basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian(CMat);

impl Hamiltonian {
    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    /// Wraps an arbitrary matrix after checking hermiticity to 1e-12.
    pub fn from_matrix(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let err = crate::linalg::hermiticity_error(&m);
        if err > 1e-12 {
            return Err(Error::Numerical(format!(
                "matrix is not Hermitian (error {err:e})"
            )));
        }
        Ok(Self(m))
    }
}

pub fn build_hamiltonian(cfg: &LatticeConfig, phi: f64) -> Hamiltonian {
    let n = cfg.dim();
    let mut h = CMat::zeros(n, n);
    let coupling = -cfg.depth / 4.0;
    let lower = c(coupling * phi.cos(), coupling * phi.sin());
    for (k, ell) in cfg.orders().enumerate() {
        let p = ell as f64 + cfg.quasimomentum;
        h[(k, k)] = c(p * p, 0.0);
        if k > 0 {
            h[(k, k - 1)] = lower;
            h[(k - 1, k)] = lower.conj();
        }
    }
    Hamiltonian(h)
}

/// Natural timescale of the static lattice set by the gap between its two
/// lowest eigenstates at zero quasi-momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGapTimescale {
    /// `ΔE / E_L`.
    pub gap: f64,
    /// `2π / ΔE` in units of `ħ/E_L`, i.e. `h/ΔE`.
    pub period: f64,
    pub period_s: f64,
}

pub fn band_gap_timescale(cfg: &LatticeConfig, units: &UnitTable) -> Result<BandGapTimescale> {
    cfg.validate()?;
    if cfg.quasimomentum != 0.0 {
        return Err(Error::config(
            "band gap timescale is defined at zero quasi-momentum",
        ));
    }
    let eig = HermitianEigen::new(build_hamiltonian(cfg, 0.0).matrix())?;
    let gap = eig.values[1] - eig.values[0];
    let period = std::f64::consts::TAU / gap;
    Ok(BandGapTimescale {
        gap,
        period,
        period_s: units.dimensionless_to_seconds(period),
    })
}
