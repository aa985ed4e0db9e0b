//! Dense complex linear algebra shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().sum()
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `max |U†U − I|`.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - identity(n)))
}

/// `tr(A B†)`, i.e. the Hilbert–Schmidt inner product `⟨B, A⟩`.
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Outer product `|ψ⟩⟨ψ|`.
pub fn projector(psi: &CVec) -> CMat {
    psi * psi.adjoint()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, ordered like `values`.
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(m: &CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(
                "non-finite matrix passed to eigensolver".into(),
            ));
        }
        let n = m.nrows();
        // Symmetrize so round-off never leaks an anti-Hermitian part into the solver.
        let herm = (m + m.adjoint()).scale(0.5);
        let eig = herm
            .try_symmetric_eigen(1e-15, 10_000)
            .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
        Ok(Self { values, vectors })
    }

    /// `V f(Λ) V†` for a real spectral function.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> CMat {
        self.map(|x| c(f(x), 0.0))
    }

    /// `V f(Λ) V†` for a complex spectral function.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (k, &lambda) in self.values.iter().enumerate() {
            let fk = f(lambda);
            for r in 0..scaled.nrows() {
                scaled[(r, k)] *= fk;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Square root of a positive semidefinite matrix; negative round-off
/// eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    Ok(HermitianEigen::new(m)?.map_real(|x| x.max(0.0).sqrt()))
}

/// Closest (in Frobenius norm) PSD matrix of the given trace to a Hermitian
/// input. Eigenvalues are shifted and clipped so the spectrum stays on the
/// simplex scaled by `target_trace`.
pub fn project_to_density(m: &CMat, target_trace: f64) -> Result<CMat> {
    let eig = HermitianEigen::new(m)?;
    let n = eig.values.len();
    // Simplex projection of the eigenvalues (sorted descending).
    let mut desc: Vec<f64> = eig.values.iter().rev().copied().collect();
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &v) in desc.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - target_trace) / (k + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    for v in desc.iter_mut() {
        *v = (*v - shift).max(0.0);
    }
    let projected: Vec<f64> = desc.into_iter().rev().collect();
    let mut scaled = eig.vectors.clone();
    for (k, &lambda) in projected.iter().enumerate().take(n) {
        for r in 0..n {
            scaled[(r, k)] *= lambda;
        }
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Embedding `n×d` isometry selecting basis rows `indices`.
pub fn embedding(n: usize, indices: &[usize]) -> CMat {
    let mut e = CMat::zeros(n, indices.len());
    for (col, &row) in indices.iter().enumerate() {
        e[(row, col)] = c(1.0, 0.0);
    }
    e
}

/// Submatrix at the given rows and columns.
pub fn submatrix(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |r, k| m[(rows[r], cols[k])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[
                c(2.0, 0.0),
                c(0.5, 0.3),
                c(0.0, 0.0),
                c(0.5, -0.3),
                c(-1.0, 0.0),
                c(0.1, 0.0),
                c(0.0, 0.0),
                c(0.1, 0.0),
                c(0.7, 0.0),
            ],
        );
        let eig = HermitianEigen::new(&m).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let back = eig.map_real(|x| x);
        assert!(max_abs(&(back - &m)) < 1e-13);
    }

    #[test]
    fn density_projection_is_psd_with_unit_trace() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[c(1.2, 0.0), c(0.0, 0.4), c(0.0, -0.4), c(-0.3, 0.0)],
        );
        let rho = project_to_density(&m, 1.0).unwrap();
        let eig = HermitianEigen::new(&rho).unwrap();
        assert!(eig.values.iter().all(|&v| v > -1e-14));
        assert!((trace(&rho).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nan_rejected() {
        let m = CMat::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(matches!(HermitianEigen::new(&m), Err(Error::Numerical(_))));
    }
}
