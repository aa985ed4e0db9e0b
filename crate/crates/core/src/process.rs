//! Quantum channels in Kraus and canonical-basis (Choi) form, and the two
//! fidelity measures used to compare a channel against a unitary target.
//!
//! The Choi matrix is stored as `β = Σ_uv B_uv ⊗ ε(B_uv)` with
//! `B_uv = |u⟩⟨v|` on the input space, so block `(u, v)` of `β` is
//! `ε(B_uv)`. The output space may be larger than the input space (an
//! extended momentum basis that captures leakage).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{c, hs_inner, projector, trace, CMat, CVec, HermitianEigen};
use crate::rng::{derive_seed, haar_state, seeded};

/// Density operator, possibly sub-normalised (leakage out of the basis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    #[serde(with = "crate::io::cmat")]
    matrix: CMat,
}

impl DensityMatrix {
    /// Checks hermiticity, positivity to `−1e-10` and `tr ρ ≤ 1 + 1e-10`.
    pub fn new(matrix: CMat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let herm = crate::linalg::hermiticity_error(&matrix);
        if herm > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian ({herm:e})"
            )));
        }
        let eig = HermitianEigen::new(&matrix)?;
        if eig.values[0] < -1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix has eigenvalue {}",
                eig.values[0]
            )));
        }
        let tr = trace(&matrix).re;
        if tr > 1.0 + 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix trace {tr} exceeds 1"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &CVec) -> Self {
        Self {
            matrix: projector(psi),
        }
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }
}

/// Something that maps input operators to output operators linearly.
pub trait Channel {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Image of an arbitrary (not necessarily physical) operator.
    fn apply_operator(&self, x: &CMat) -> Result<CMat>;
}

/// `ε(ρ)` for either representation.
pub fn apply_process<C: Channel + ?Sized>(p: &C, rho: &DensityMatrix) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_matrix_unchecked(
        p.apply_operator(rho.matrix())?,
    ))
}

/// `ε(ρ) = Σ A_i ρ A_i†` with `Σ A_i†A_i ≤ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausProcess {
    operators: Vec<CMat>,
}

impl KrausProcess {
    pub fn new(operators: Vec<CMat>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::config("Kraus process needs at least one operator"))?;
        let (rows, cols) = first.shape();
        for a in &operators {
            check_dim(rows, a.nrows())?;
            check_dim(cols, a.ncols())?;
        }
        let p = Self { operators };
        let top = *HermitianEigen::new(&p.completeness())?
            .values
            .last()
            .unwrap();
        if top > 1.0 + 1e-10 {
            return Err(Error::config(format!(
                "Kraus operators are trace-increasing (λ_max = {top})"
            )));
        }
        Ok(p)
    }

    pub fn unitary(u: CMat) -> Self {
        Self { operators: vec![u] }
    }

    pub fn operators(&self) -> &[CMat] {
        &self.operators
    }

    /// `Σ A_i† A_i`.
    pub fn completeness(&self) -> CMat {
        let n = self.input_dim();
        self.operators
            .iter()
            .fold(CMat::zeros(n, n), |acc, a| acc + a.adjoint() * a)
    }
}

impl Channel for KrausProcess {
    fn input_dim(&self) -> usize {
        self.operators[0].ncols()
    }

    fn output_dim(&self) -> usize {
        self.operators[0].nrows()
    }

    fn apply_operator(&self, x: &CMat) -> Result<CMat> {
        check_dim(self.input_dim(), x.nrows())?;
        check_dim(self.input_dim(), x.ncols())?;
        let m = self.output_dim();
        Ok(self
            .operators
            .iter()
            .fold(CMat::zeros(m, m), |acc, a| acc + a * x * a.adjoint()))
    }
}

/// Canonical-basis super-operator `β = Σ_uv B_uv ⊗ ε(B_uv)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessMatrix {
    input_dim: usize,
    output_dim: usize,
    #[serde(with = "crate::io::cmat")]
    choi: CMat,
}

impl ProcessMatrix {
    pub fn from_choi(input_dim: usize, output_dim: usize, choi: CMat) -> Result<Self> {
        check_dim(input_dim * output_dim, choi.nrows())?;
        check_dim(input_dim * output_dim, choi.ncols())?;
        Ok(Self {
            input_dim,
            output_dim,
            choi,
        })
    }

    /// Assembles `β` from `ε(B_uv)`, indexed `u·d + v`.
    pub fn from_blocks(input_dim: usize, blocks: &[CMat]) -> Result<Self> {
        check_dim(input_dim * input_dim, blocks.len())?;
        let m = blocks[0].nrows();
        let mut choi = CMat::zeros(input_dim * m, input_dim * m);
        for u in 0..input_dim {
            for v in 0..input_dim {
                let blk = &blocks[u * input_dim + v];
                check_dim(m, blk.nrows())?;
                check_dim(m, blk.ncols())?;
                choi.view_mut((u * m, v * m), (m, m)).copy_from(blk);
            }
        }
        Ok(Self {
            input_dim,
            output_dim: m,
            choi,
        })
    }

    pub fn choi(&self) -> &CMat {
        &self.choi
    }

    /// `ε(B_uv)`.
    pub fn block(&self, u: usize, v: usize) -> CMat {
        let m = self.output_dim;
        self.choi.view((u * m, v * m), (m, m)).into_owned()
    }

    /// Keeps only the output basis states at `positions` (e.g. the qudit
    /// orders inside an extended basis); the result is generally not trace
    /// preserving.
    pub fn restrict_output(&self, positions: &[usize]) -> Result<Self> {
        if let Some(&bad) = positions.iter().find(|&&p| p >= self.output_dim) {
            return Err(Error::IndexOutOfRange {
                index: bad as i64,
                limit: self.output_dim as i64,
            });
        }
        let blocks: Vec<CMat> = (0..self.input_dim)
            .flat_map(|u| (0..self.input_dim).map(move |v| (u, v)))
            .map(|(u, v)| crate::linalg::submatrix(&self.block(u, v), positions, positions))
            .collect();
        Self::from_blocks(self.input_dim, &blocks)
    }

    /// Eigenvalues of the Choi matrix, ascending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(HermitianEigen::new(&self.choi)?.values)
    }

    /// Projects the Choi matrix onto the PSD cone (negative eigenvalues clipped).
    pub fn psd_projected(&self) -> Result<Self> {
        let herm = (&self.choi + self.choi.adjoint()).scale(0.5);
        let eig = HermitianEigen::new(&herm)?;
        let choi = eig.map_real(|x| x.max(0.0));
        Self::from_choi(self.input_dim, self.output_dim, choi)
    }
}

impl Channel for ProcessMatrix {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `ε(X) = Σ_uv X_uv ε(B_uv)`.
    fn apply_operator(&self, x: &CMat) -> Result<CMat> {
        check_dim(self.input_dim, x.nrows())?;
        check_dim(self.input_dim, x.ncols())?;
        let m = self.output_dim;
        let mut out = CMat::zeros(m, m);
        for u in 0..self.input_dim {
            for v in 0..self.input_dim {
                let w = x[(u, v)];
                if w != c(0.0, 0.0) {
                    out += self.choi.view((u * m, v * m), (m, m)) * w;
                }
            }
        }
        Ok(out)
    }
}

/// Choi matrix of any channel by applying it to each `B_uv`.
pub fn channel_to_choi<C: Channel + ?Sized>(p: &C) -> Result<ProcessMatrix> {
    let d = p.input_dim();
    let mut blocks = Vec::with_capacity(d * d);
    for u in 0..d {
        for v in 0..d {
            let mut b = CMat::zeros(d, d);
            b[(u, v)] = c(1.0, 0.0);
            blocks.push(p.apply_operator(&b)?);
        }
    }
    ProcessMatrix::from_blocks(d, &blocks)
}

pub fn kraus_to_choi(p: &KrausProcess) -> ProcessMatrix {
    channel_to_choi(p).expect("Kraus operators have consistent shapes")
}

pub fn unitary_choi(u: &CMat) -> ProcessMatrix {
    kraus_to_choi(&KrausProcess::unitary(u.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `𝒩 = d²`; losses reduce the fidelity.
    #[default]
    Dimension,
    /// `𝒩 = √(tr β_a†β_a · tr β_b†β_b)`, discounting undetected losses.
    LossAware,
}

/// `F_p = Re tr(β_a β_b†) / 𝒩`.
pub fn process_fidelity(pa: &ProcessMatrix, pb: &ProcessMatrix) -> Result<f64> {
    process_fidelity_with(pa, pb, Normalization::Dimension)
}

pub fn process_fidelity_with(
    pa: &ProcessMatrix,
    pb: &ProcessMatrix,
    norm: Normalization,
) -> Result<f64> {
    check_dim(pa.input_dim, pb.input_dim)?;
    check_dim(pa.output_dim, pb.output_dim)?;
    let overlap = hs_inner(&pa.choi, &pb.choi);
    if overlap.im.abs() > 1e-8 * overlap.re.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "process overlap has imaginary part {:e}; inputs are not Hermitian-preserving",
            overlap.im
        )));
    }
    let n = match norm {
        Normalization::Dimension => (pa.input_dim * pa.input_dim) as f64,
        Normalization::LossAware => {
            (hs_inner(&pa.choi, &pa.choi).re * hs_inner(&pb.choi, &pb.choi).re).sqrt()
        }
    };
    Ok(overlap.re / n)
}

/// `α = tr ε(I_d) / d`, the mean population remaining in the output basis.
pub fn alpha_avg(p: &ProcessMatrix) -> f64 {
    trace(&p.choi).re / p.input_dim as f64
}

/// `F_avg = (d·F_p + α)/(d + 1)`.
pub fn avg_gate_fidelity_formula(fp: f64, alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    (d * fp + alpha) / (d + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

const SHARD: usize = 8192;

/// Sums `f` (and `f²`) over `n` Haar states in fixed-size shards with
/// per-shard seeds; the shard results are folded in order.
fn haar_moments<F>(dim: usize, n: usize, seed: u64, f: F) -> Vec<(Complex64, f64, f64)>
where
    F: Fn(&CVec) -> Complex64 + Sync,
{
    let shards = n.div_ceil(SHARD);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeded(derive_seed(seed, s as u64));
            let count = SHARD.min(n - s * SHARD);
            let mut sum = c(0.0, 0.0);
            let mut sq_re = 0.0;
            let mut sq_im = 0.0;
            for _ in 0..count {
                let psi = haar_state(&mut rng, dim);
                let v = f(&psi);
                sum += v;
                sq_re += v.re * v.re;
                sq_im += v.im * v.im;
            }
            (sum, sq_re, sq_im)
        })
        .collect()
}

fn mean_and_stderr(parts: &[(Complex64, f64, f64)], n: usize) -> (Complex64, f64, f64) {
    let (sum, sq_re, sq_im) = parts.iter().fold((c(0.0, 0.0), 0.0, 0.0), |acc, p| {
        (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2)
    });
    let nf = n as f64;
    let mean = sum / nf;
    let var = |sq: f64, m: f64| {
        ((sq / nf - m * m).max(0.0) * nf / (nf - 1.0).max(1.0)).sqrt() / nf.sqrt()
    };
    (mean, var(sq_re, mean.re), var(sq_im, mean.im))
}

/// Haar average of `tr[U_T ψψ† U_T† ε(ψψ†)]`.
pub fn avg_gate_fidelity_montecarlo(
    p: &ProcessMatrix,
    target: &CMat,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_dim(p.input_dim, target.nrows())?;
    check_dim(p.output_dim, target.nrows())?;
    if n < 2 {
        return Err(Error::config(
            "Monte-Carlo estimate needs at least two samples",
        ));
    }
    let parts = haar_moments(p.input_dim, n, seed, |psi| {
        let out = p
            .apply_operator(&projector(psi))
            .expect("dimensions checked");
        let phi = target * psi;
        (phi.adjoint() * out * &phi)[(0, 0)]
    });
    let (mean, stderr, _) = mean_and_stderr(&parts, n);
    Ok(McEstimate {
        mean: mean.re,
        stderr,
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoMomentCheck {
    pub mc_mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub closed_form: Complex64,
}

impl TwoMomentCheck {
    /// Whether both real and imaginary deviations are within `k` standard errors.
    pub fn within(&self, k: f64) -> bool {
        let diff = self.mc_mean - self.closed_form;
        diff.re.abs() <= k * self.stderr_re + 1e-12 && diff.im.abs() <= k * self.stderr_im + 1e-12
    }
}

/// Monte-Carlo `∫dψ ⟨ψ|M|ψ⟩⟨ψ|N|ψ⟩` against `[tr(MN) + tr M tr N] / d(d+1)`.
pub fn haar_two_moment_check(
    m: &CMat,
    n_op: &CMat,
    samples: usize,
    seed: u64,
) -> Result<TwoMomentCheck> {
    let d = m.nrows();
    check_dim(d, m.ncols())?;
    check_dim(d, n_op.nrows())?;
    check_dim(d, n_op.ncols())?;
    if samples < 2 {
        return Err(Error::config(
            "Monte-Carlo estimate needs at least two samples",
        ));
    }
    let parts = haar_moments(d, samples, seed, |psi| {
        let a = (psi.adjoint() * m * psi)[(0, 0)];
        let b = (psi.adjoint() * n_op * psi)[(0, 0)];
        a * b
    });
    let (mc_mean, stderr_re, stderr_im) = mean_and_stderr(&parts, samples);
    let df = d as f64;
    let closed_form = (trace(&(m * n_op)) + trace(m) * trace(n_op)) / (df * (df + 1.0));
    Ok(TwoMomentCheck {
        mc_mean,
        stderr_re,
        stderr_im,
        closed_form,
    })
}
