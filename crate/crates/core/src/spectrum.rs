//! Hermitian eigendecomposition with the ordering and clipping conventions
//! used throughout the crate.
//!
//! Every covariance, Fisher information and Gram matrix in the crate is
//! handled through a [`HermitianSpectrum`]: eigenvalues sorted in
//! descending order with their orthonormal eigenvectors stored as columns.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Numerical tolerances shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalues above `-tol_psd * scale` are clipped to zero.
    pub tol_psd: f64,
    pub tol_unitary: f64,
    pub tol_herm: f64,
    pub tol_rel: f64,
    pub tol_bisect: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_psd: 1e-10,
            tol_unitary: 1e-10,
            tol_herm: 1e-10,
            tol_rel: 1e-9,
            tol_bisect: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tol_psd,
            self.tol_unitary,
            self.tol_herm,
            self.tol_rel,
            self.tol_bisect,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "tolerances must be finite and strictly positive".into(),
            ))
        }
    }
}

/// Eigenvalues (descending) and eigenvectors (columns) of a PSD Hermitian
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl HermitianSpectrum {
    /// Builds a spectrum from parts, checking ordering, sign and unitarity.
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        eigenvectors: CMatrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        let m = eigenvalues.len();
        if m == 0 {
            return Err(Error::EmptyInput);
        }
        if eigenvectors.nrows() != m || eigenvectors.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "eigenvector matrix",
                expected: m,
                found: eigenvectors.ncols(),
            });
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eigenvalues"));
        }
        let scale = eigenvalues.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if let Some(&neg) = eigenvalues.iter().find(|&&v| v < -tol.tol_psd * scale) {
            return Err(Error::IndefiniteInput {
                eigenvalue: neg,
                tol: tol.tol_psd * scale,
            });
        }
        let deviation = unitary_deviation(&eigenvectors);
        if deviation > tol.tol_unitary.max(1e-12) * (m as f64) {
            return Err(Error::NumericalFailure(format!(
                "eigenvector matrix is not unitary (deviation {deviation:e})"
            )));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let values = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
        let vectors = CMatrix::from_fn(m, m, |r, c| eigenvectors[(r, order[c])]);
        Ok(Self {
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }

    /// Diagonal spectrum with the identity as eigenbasis.
    pub fn diagonal(values: &[f64], tol: &Tolerances) -> Result<Self> {
        Self::from_parts(
            values.to_vec(),
            CMatrix::identity(values.len(), values.len()),
            tol,
        )
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues above `tol_psd` relative to the largest.
    pub fn rank(&self, tol: &Tolerances) -> usize {
        let cut = tol.tol_psd * self.max_eigenvalue();
        self.eigenvalues.iter().filter(|&&v| v > cut).count()
    }

    pub fn is_full_rank(&self, tol: &Tolerances) -> bool {
        self.max_eigenvalue() > 0.0 && self.rank(tol) == self.dim()
    }

    /// `U f(Λ) U^H` for a scalar map on the eigenvalues.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let scaled = CMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            self.eigenvectors[(r, c)] * f(self.eigenvalues[c])
        });
        let out = &scaled * self.eigenvectors.adjoint();
        hermitian_part(&out)
    }

    pub fn recompose(&self) -> CMatrix {
        self.map(|v| v)
    }

    pub fn sqrt(&self) -> CMatrix {
        self.map(f64::sqrt)
    }

    /// `U Λ^{-1} U^H`; fails when any eigenvalue is zero.
    pub fn inverse(&self, tol: &Tolerances) -> Result<CMatrix> {
        if !self.is_full_rank(tol) {
            return Err(Error::SingularPrior);
        }
        Ok(self.map(|v| 1.0 / v))
    }

    /// Re-chooses the eigenbasis inside every cluster of (numerically) equal
    /// eigenvalues so that `U^H B U` is diagonal on that cluster.
    ///
    /// The spectrum itself is unchanged; only the basis within degenerate
    /// eigenspaces rotates.
    pub fn aligned_to(&self, b: &CMatrix, tol: &Tolerances) -> Result<Self> {
        let m = self.dim();
        if b.nrows() != m || b.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "alignment matrix",
                expected: m,
                found: b.nrows(),
            });
        }
        let cluster_tol = tol.tol_rel.sqrt() * self.max_eigenvalue().max(f64::MIN_POSITIVE);
        let mut vectors = self.eigenvectors.clone();
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && self.eigenvalues[start] - self.eigenvalues[end] <= cluster_tol {
                end += 1;
            }
            if end - start > 1 {
                let block = self.eigenvectors.columns(start, end - start).into_owned();
                let projected = hermitian_part(&(block.adjoint() * b * &block));
                let inner = sorted_eigen(&projected);
                let rotated = &block * &inner.1;
                vectors.columns_mut(start, end - start).copy_from(&rotated);
            }
            start = end;
        }
        Ok(Self {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: vectors,
        })
    }
}

/// Eigendecomposition of a PSD Hermitian matrix.
///
/// The input is symmetrized as `(A + A^H)/2` after the asymmetry check;
/// eigenvalues in `[-tol_psd·scale, 0)` are clipped to zero and anything
/// more negative is rejected.
pub fn spectrum_from_matrix(matrix: &CMatrix, tol: &Tolerances) -> Result<HermitianSpectrum> {
    let m = matrix.nrows();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if matrix.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: m,
            found: matrix.ncols(),
        });
    }
    if matrix
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::NonFinite("matrix"));
    }
    let scale = matrix.iter().fold(1.0_f64, |a, z| a.max(z.norm()));
    let asymmetry = hermitian_asymmetry(matrix);
    if asymmetry > tol.tol_herm * scale {
        return Err(Error::NotHermitian {
            asymmetry,
            tol: tol.tol_herm * scale,
        });
    }
    let sym = hermitian_part(matrix);
    let (values, vectors) = sorted_eigen(&sym);
    let vmax = values
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    if let Some(&neg) = values.iter().find(|&&v| v < -tol.tol_psd * vmax.max(1.0)) {
        return Err(Error::IndefiniteInput {
            eigenvalue: neg,
            tol: tol.tol_psd * vmax.max(1.0),
        });
    }
    let values = values.into_iter().map(|v| v.max(0.0)).collect();
    HermitianSpectrum::from_parts(values, vectors, tol)
}

/// Raw eigendecomposition sorted by descending eigenvalue, ties kept in
/// solver order.
pub(crate) fn sorted_eigen(sym: &CMatrix) -> (Vec<f64>, CMatrix) {
    let m = sym.nrows();
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `(A + A^H) / 2`.
/// Cholesky factor of a Hermitian positive definite matrix. nalgebra takes
/// complex square roots on the diagonal, so indefinite input has to be
/// caught by inspecting the factor.
pub(crate) fn pd_cholesky(a: &CMatrix) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let ok = l
        .diagonal()
        .iter()
        .all(|d| d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
    ok.then_some(chol)
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `max |A - A^H|` entrywise.
pub fn hermitian_asymmetry(a: &CMatrix) -> f64 {
    (a - a.adjoint())
        .iter()
        .fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |U^H U - I|` entrywise.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((g[(r, c)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Embeds a real matrix into the complex field.
pub fn complexify(a: &DMatrix<f64>) -> CMatrix {
    a.map(|v| C64::new(v, 0.0))
}

/// Diagonal complex matrix from real entries.
pub fn diag_real(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v, 0.0)),
    ))
}
