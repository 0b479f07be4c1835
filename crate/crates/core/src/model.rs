//! Sensing-model building blocks: parameter prior, receiver noise and the
//! transmit waveform Gram matrix.

use crate::error::{Error, Result};
use crate::spectrum::{
    hermitian_asymmetry, hermitian_part, spectrum_from_matrix, CMatrix, HermitianSpectrum,
    Tolerances,
};

/// Zero-mean circularly symmetric Gaussian prior `CN(0, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    covariance: HermitianSpectrum,
    degenerate: bool,
}

impl GaussianPrior {
    /// Full-rank prior; rank-deficient covariances are rejected.
    pub fn new(covariance: HermitianSpectrum, tol: &Tolerances) -> Result<Self> {
        if !covariance.is_full_rank(tol) {
            return Err(Error::SingularPrior);
        }
        Ok(Self {
            covariance,
            degenerate: false,
        })
    }

    /// Prior that is allowed to be rank deficient. Operations that need
    /// `Σ^{-1}` still fail on it with [`Error::SingularPrior`].
    pub fn degenerate(covariance: HermitianSpectrum) -> Self {
        Self {
            covariance,
            degenerate: true,
        }
    }

    pub fn from_covariance(matrix: &CMatrix, tol: &Tolerances) -> Result<Self> {
        Self::new(spectrum_from_matrix(matrix, tol)?, tol)
    }

    /// Independent modes with the given variances (identity eigenbasis).
    pub fn from_variances(variances: &[f64], tol: &Tolerances) -> Result<Self> {
        Self::new(HermitianSpectrum::diagonal(variances, tol)?, tol)
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &HermitianSpectrum {
        &self.covariance
    }

    /// Prior eigenvalues `σ²_i`, descending.
    pub fn variances(&self) -> &[f64] {
        self.covariance.eigenvalues()
    }

    pub fn covariance_matrix(&self) -> CMatrix {
        self.covariance.recompose()
    }

    pub fn total_variance(&self) -> f64 {
        self.covariance.trace()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub(crate) fn require_full_rank(&self, tol: &Tolerances) -> Result<()> {
        if self.covariance.is_full_rank(tol) {
            Ok(())
        } else {
            Err(Error::SingularPrior)
        }
    }

    pub(crate) fn with_spectrum(&self, covariance: HermitianSpectrum) -> Self {
        Self {
            covariance,
            degenerate: self.degenerate,
        }
    }
}

/// Per-complex-sample receiver noise variance `σ_z²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma_z_sq: f64,
}

impl NoiseModel {
    pub fn new(sigma_z_sq: f64) -> Result<Self> {
        if !(sigma_z_sq.is_finite() && sigma_z_sq > 0.0) {
            return Err(Error::NonPositiveInput("noise variance"));
        }
        Ok(Self { sigma_z_sq })
    }

    pub fn variance(&self) -> f64 {
        self.sigma_z_sq
    }
}

/// `R_x = X^H X` together with the energy budget `T·P_T` it must respect and
/// the number of rows available to factor it back into `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformGram {
    gram: CMatrix,
    budget: f64,
    factor_rows: usize,
}

impl WaveformGram {
    pub fn new(gram: CMatrix, budget: f64, factor_rows: usize, tol: &Tolerances) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::NegativeBudget(budget));
        }
        if factor_rows == 0 {
            return Err(Error::InvalidArgument(
                "factor_rows must be positive".into(),
            ));
        }
        let m = gram.nrows();
        if gram.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "waveform gram",
                expected: m,
                found: gram.ncols(),
            });
        }
        let scale = gram.iter().fold(1.0_f64, |a, z| a.max(z.norm()));
        let asym = hermitian_asymmetry(&gram);
        if asym > tol.tol_herm * scale {
            return Err(Error::NotHermitian {
                asymmetry: asym,
                tol: tol.tol_herm * scale,
            });
        }
        let gram = hermitian_part(&gram);
        let spectrum = spectrum_from_matrix(&gram, tol)?;
        let trace = spectrum.trace();
        if trace > budget * (1.0 + tol.tol_rel) + tol.tol_rel {
            return Err(Error::InvalidArgument(format!(
                "gram trace {trace} exceeds budget {budget}"
            )));
        }
        // rank test relative to the budget scale, so an all-zero gram has rank 0
        let cut = tol.tol_psd * budget.max(spectrum.max_eigenvalue()).max(1.0);
        let rank = spectrum.eigenvalues().iter().filter(|&&v| v > cut).count();
        if rank > m.min(factor_rows) {
            return Err(Error::InsufficientRows {
                rows: factor_rows,
                active: rank,
            });
        }
        Ok(Self {
            gram,
            budget,
            factor_rows,
        })
    }

    /// Gram of an explicit waveform factor; the budget defaults to its energy.
    pub fn from_factor(x: &CMatrix, budget: f64, tol: &Tolerances) -> Result<Self> {
        Self::new(x.adjoint() * x, budget, x.nrows().max(1), tol)
    }

    pub fn zeros(m: usize, budget: f64, factor_rows: usize) -> Self {
        Self {
            gram: CMatrix::zeros(m, m),
            budget,
            factor_rows,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.gram
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn factor_rows(&self) -> usize {
        self.factor_rows
    }

    /// Transmit energy `tr(R_x) = ‖X‖_F²`.
    pub fn energy(&self) -> f64 {
        self.gram.trace().re
    }
}
