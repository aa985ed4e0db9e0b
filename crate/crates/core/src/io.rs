//! File formats.
//!
//! Complex matrices serialize as `{"rows": r, "cols": c, "data": [[re, im], …]}`
//! in row-major order.
//!
//! Choi matrices additionally have a binary form (all integers and floats
//! little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic b"CHOI"
//! 4       4     format version (u32) = 1
//! 8       4     input dimension d (u32)
//! 12      4     output dimension D (u32)
//! 16      16·n² row-major (re: f64, im: f64) pairs, n = d·D
//! ```
//!
//! Block `(u, v)` of the `n×n` matrix (rows `u·D..u·D+D`, columns
//! `v·D..v·D+D`) is `ε(|u⟩⟨v|)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::process::ProcessMatrix;

pub const CHOI_MAGIC: &[u8; 4] = b"CHOI";
pub const CHOI_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixRecord {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for k in 0..m.ncols() {
                let z = m[(r, k)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixRecord> for CMat {
    type Error = Error;
    fn try_from(rec: MatrixRecord) -> Result<Self> {
        if rec.data.len() != rec.rows * rec.cols {
            return Err(Error::DimensionMismatch {
                expected: rec.rows * rec.cols,
                found: rec.data.len(),
            });
        }
        Ok(CMat::from_fn(rec.rows, rec.cols, |r, k| {
            let [re, im] = rec.data[r * rec.cols + k];
            c(re, im)
        }))
    }
}

/// `#[serde(with = "crate::io::cmat")]` adapter.
pub mod cmat {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRecord::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rec = MatrixRecord::deserialize(d)?;
        CMat::try_from(rec).map_err(serde::de::Error::custom)
    }
}

/// JSON document for a Choi matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiDocument {
    pub format: String,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Momentum orders labelling the input basis, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_orders: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_orders: Option<Vec<i64>>,
    pub choi: MatrixRecord,
}

pub const CHOI_JSON_FORMAT: &str = "choi-v1: sum_uv B_uv (x) eps(B_uv), row-major";

impl ChoiDocument {
    pub fn new(p: &ProcessMatrix) -> Self {
        Self {
            format: CHOI_JSON_FORMAT.to_string(),
            input_dim: crate::process::Channel::input_dim(p),
            output_dim: crate::process::Channel::output_dim(p),
            input_orders: None,
            output_orders: None,
            choi: MatrixRecord::from(p.choi()),
        }
    }

    pub fn with_orders(mut self, input: Vec<i64>, output: Vec<i64>) -> Self {
        self.input_orders = Some(input);
        self.output_orders = Some(output);
        self
    }

    pub fn to_process(&self) -> Result<ProcessMatrix> {
        if self.format != CHOI_JSON_FORMAT {
            return Err(Error::config(format!(
                "unsupported Choi format `{}`",
                self.format
            )));
        }
        let m = CMat::try_from(self.choi.clone())?;
        ProcessMatrix::from_choi(self.input_dim, self.output_dim, m)
    }
}

pub fn write_choi_binary<W: Write>(p: &ProcessMatrix, mut w: W) -> Result<()> {
    use crate::process::Channel;
    w.write_all(CHOI_MAGIC)?;
    w.write_all(&CHOI_VERSION.to_le_bytes())?;
    w.write_all(&(p.input_dim() as u32).to_le_bytes())?;
    w.write_all(&(p.output_dim() as u32).to_le_bytes())?;
    let m = p.choi();
    for r in 0..m.nrows() {
        for k in 0..m.ncols() {
            w.write_all(&m[(r, k)].re.to_le_bytes())?;
            w.write_all(&m[(r, k)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_choi_binary<R: Read>(mut r: R) -> Result<ProcessMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHOI_MAGIC {
        return Err(Error::config("not a binary Choi file (bad magic)"));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = read_u32(&mut r)?;
    if version != CHOI_VERSION {
        return Err(Error::config(format!(
            "unsupported Choi binary version {version}"
        )));
    }
    let d = read_u32(&mut r)? as usize;
    let big = read_u32(&mut r)? as usize;
    let n = d * big;
    let mut buf = [0u8; 8];
    let mut next = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    let mut m = CMat::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let re = next(&mut r)?;
            let im = next(&mut r)?;
            m[(row, col)] = c(re, im);
        }
    }
    ProcessMatrix::from_choi(d, big, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::hadamard;
    use crate::process::unitary_choi;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_header() {
        let p = unitary_choi(&hadamard());
        let mut buf = Vec::new();
        write_choi_binary(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CHOI");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 16 + 16 * 16);
        // Entry (0,0) of the Hadamard Choi is ε(B_00)_{00} = 1/2.
        assert_eq!(
            f64::from_le_bytes(buf[16..24].try_into().unwrap()),
            0.5000000000000001
        );
        assert!(read_choi_binary(&b"NOPE"[..]).is_err());
    }

    proptest! {
        #[test]
        fn choi_round_trips(entries in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 36)) {
            let m = CMat::from_fn(6, 6, |r, k| { let (a, b) = entries[r * 6 + k]; c(a, b) });
            let p = ProcessMatrix::from_choi(2, 3, m).unwrap();
            let mut buf = Vec::new();
            write_choi_binary(&p, &mut buf).unwrap();
            prop_assert_eq!(&read_choi_binary(&buf[..]).unwrap(), &p);
            let json = serde_json::to_string(&ChoiDocument::new(&p)).unwrap();
            let doc: ChoiDocument = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&doc.to_process().unwrap(), &p);
        }
    }
}
