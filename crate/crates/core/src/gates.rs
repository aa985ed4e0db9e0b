//! Target gates on the qudit subspace.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SubspaceMap;
use crate::linalg::{c, identity, unitarity_error, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    X,
    Y,
    Z,
    H,
    /// `(Y + Z)/√2`.
    W,
    Identity,
    /// Qutrit level swap `|1⟩ ↔ |2⟩`, leaving `|0⟩` fixed.
    X12,
    Dft,
    ModifiedDft,
}

impl FromStr for GateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "x" => GateKind::X,
            "y" => GateKind::Y,
            "z" => GateKind::Z,
            "h" | "hadamard" => GateKind::H,
            "w" => GateKind::W,
            "i" | "id" | "identity" => GateKind::Identity,
            "x12" => GateKind::X12,
            "dft" => GateKind::Dft,
            "modified_dft" | "mdft" => GateKind::ModifiedDft,
            other => return Err(Error::config(format!("unknown gate `{other}`"))),
        })
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::H => "h",
            GateKind::W => "w",
            GateKind::Identity => "identity",
            GateKind::X12 => "x12",
            GateKind::Dft => "dft",
            GateKind::ModifiedDft => "modified_dft",
        };
        f.write_str(s)
    }
}

fn qubit(entries: [Complex64; 4]) -> CMat {
    CMat::from_row_slice(2, 2, &entries)
}

pub fn pauli_x() -> CMat {
    qubit([c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMat {
    qubit([c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMat {
    qubit([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn hadamard() -> CMat {
    (pauli_x() + pauli_z()).scale(FRAC_1_SQRT_2)
}

pub fn w_gate() -> CMat {
    (pauli_y() + pauli_z()).scale(FRAC_1_SQRT_2)
}

pub fn qutrit_x12() -> CMat {
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = c(1.0, 0.0);
    m[(1, 2)] = c(1.0, 0.0);
    m[(2, 1)] = c(1.0, 0.0);
    m
}

/// `F_{uv} = ω^{uv}/√d`, `ω = e^{2πi/d}`.
pub fn dft_gate(d: usize) -> Result<CMat> {
    if d < 2 {
        return Err(Error::config("DFT requires d >= 2"));
    }
    let norm = 1.0 / (d as f64).sqrt();
    Ok(CMat::from_fn(d, d, |u, v| {
        Complex64::from_polar(norm, TAU * ((u * v) % d) as f64 / d as f64)
    }))
}

/// DFT with strictly-upper entries multiplied by `−i` and strictly-lower
/// entries by `+i`. Unitary for `d = 2` (where it equals `W`); for larger `d`
/// it is only a known linear measurement map.
pub fn modified_dft_gate(d: usize) -> Result<CMat> {
    let mut m = dft_gate(d)?;
    for u in 0..d {
        for v in 0..d {
            if v > u {
                m[(u, v)] *= c(0.0, -1.0);
            } else if v < u {
                m[(u, v)] *= c(0.0, 1.0);
            }
        }
    }
    Ok(m)
}

pub fn gate_matrix(kind: GateKind, d: usize) -> Result<CMat> {
    let need = |want: usize| {
        if d == want {
            Ok(())
        } else {
            Err(Error::config(format!(
                "gate `{kind}` acts on d = {want}, subspace has d = {d}"
            )))
        }
    };
    Ok(match kind {
        GateKind::X => {
            need(2)?;
            pauli_x()
        }
        GateKind::Y => {
            need(2)?;
            pauli_y()
        }
        GateKind::Z => {
            need(2)?;
            pauli_z()
        }
        GateKind::H => {
            need(2)?;
            hadamard()
        }
        GateKind::W => {
            need(2)?;
            w_gate()
        }
        GateKind::X12 => {
            need(3)?;
            qutrit_x12()
        }
        GateKind::Identity => identity(d),
        GateKind::Dft => dft_gate(d)?,
        GateKind::ModifiedDft => modified_dft_gate(d)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetGate {
    pub name: String,
    pub matrix: CMat,
    pub subspace: SubspaceMap,
}

impl TargetGate {
    pub fn new(name: impl Into<String>, matrix: CMat, subspace: SubspaceMap) -> Result<Self> {
        if matrix.nrows() != subspace.dim() || matrix.ncols() != subspace.dim() {
            return Err(Error::DimensionMismatch {
                expected: subspace.dim(),
                found: matrix.nrows(),
            });
        }
        let err = unitarity_error(&matrix);
        if err > 1e-12 {
            return Err(Error::config(format!(
                "target gate is not unitary (error {err:e})"
            )));
        }
        Ok(Self {
            name: name.into(),
            matrix,
            subspace,
        })
    }

    pub fn builtin(kind: GateKind, subspace: SubspaceMap) -> Result<Self> {
        let m = gate_matrix(kind, subspace.dim())?;
        Self::new(kind.to_string(), m, subspace)
    }

    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn builtins_are_unitary() {
        for kind in [
            GateKind::X,
            GateKind::Y,
            GateKind::Z,
            GateKind::H,
            GateKind::W,
        ] {
            assert!(TargetGate::builtin(kind, SubspaceMap::symmetric_pair(1)).is_ok());
        }
        assert!(TargetGate::builtin(GateKind::X12, SubspaceMap::centered(1)).is_ok());
        assert!(TargetGate::builtin(GateKind::Dft, SubspaceMap::centered(2)).is_ok());
        assert!(TargetGate::builtin(GateKind::X, SubspaceMap::centered(1)).is_err());
    }

    #[test]
    fn dft2_is_hadamard_and_modified_is_w() {
        assert!(max_abs(&(dft_gate(2).unwrap() - hadamard())) < 1e-15);
        assert!(max_abs(&(modified_dft_gate(2).unwrap() - w_gate())) < 1e-15);
    }

    #[test]
    fn dft3_unitary_modified_dft3_not() {
        assert!(unitarity_error(&dft_gate(3).unwrap()) < 1e-12);
        assert!(unitarity_error(&modified_dft_gate(3).unwrap()) > 1e-3);
    }

    #[test]
    fn parse_names() {
        assert_eq!("H".parse::<GateKind>().unwrap(), GateKind::H);
        assert_eq!("x12".parse::<GateKind>().unwrap(), GateKind::X12);
        assert!("cnot".parse::<GateKind>().is_err());
    }
}
