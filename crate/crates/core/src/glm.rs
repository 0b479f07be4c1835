//! Gaussian linear model `y = X h + z`, `h ~ CN(0, Σ)`.
//!
//! MI and MMSE are evaluated in the prior eigenbasis: with `Σ = U Λ U^H`
//! and `B = σ_z^{-2} Λ^{1/2} U^H R_x U Λ^{1/2} + I`,
//!
//! * `I = ln det B`
//! * `MMSE = tr(B^{-1} Λ)`
//!
//! so `Σ` is never inverted explicitly.

use crate::error::{Error, Result};
use crate::model::{GaussianPrior, NoiseModel, WaveformGram};
use crate::random::random_orthonormal_columns;
use crate::spectrum::{hermitian_part, pd_cholesky, CMatrix, Tolerances, C64};
use crate::waterfill::{rate_distortion, waterfill_direct, WaterfillAllocation};

/// MI, MMSE and SER of one (prior, waveform, noise) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmAnalysis {
    pub mi_nats: f64,
    pub mmse: f64,
    /// `R(D)` at `D = mmse`.
    pub ser_nats: f64,
    /// Reverse water-filling split of `mmse` over the prior modes.
    pub alloc: WaterfillAllocation,
    pub per_mode_distortion: Vec<f64>,
}

impl GlmAnalysis {
    /// `mi - ser`, never negative beyond round-off.
    pub fn gap(&self) -> f64 {
        self.mi_nats - self.ser_nats
    }
}

/// MI-optimal (and MMSE-optimal) waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWaveform {
    pub gram: WaveformGram,
    /// Explicit `X = Φ diag(p)^{1/2} U^H` with orthonormal `Φ`.
    pub factor: CMatrix,
    /// Water-filling powers in the prior eigen-order.
    pub allocation: WaterfillAllocation,
}

fn check_dims(prior: &GaussianPrior, eff: &CMatrix) -> Result<()> {
    if eff.nrows() != prior.dim() || eff.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "gram vs prior",
            expected: prior.dim(),
            found: eff.nrows(),
        });
    }
    Ok(())
}

/// `σ_z^{-2} Λ^{1/2} U^H A U Λ^{1/2} + I` for an effective Gram `A` acting
/// on the parameter space.
pub(crate) fn whitened_information(
    prior: &GaussianPrior,
    eff: &CMatrix,
    noise: &NoiseModel,
) -> CMatrix {
    let u = prior.covariance().eigenvectors();
    let sqrt_lambda: Vec<f64> = prior.variances().iter().map(|v| v.sqrt()).collect();
    let inner = u.adjoint() * eff * u;
    let m = prior.dim();
    let scale = 1.0 / noise.variance();
    let b = CMatrix::from_fn(m, m, |r, c| {
        let id = if r == c { 1.0 } else { 0.0 };
        inner[(r, c)] * (sqrt_lambda[r] * sqrt_lambda[c] * scale) + C64::new(id, 0.0)
    });
    hermitian_part(&b)
}

pub(crate) fn log_det_pd(b: &CMatrix) -> Result<f64> {
    let chol = pd_cholesky(b).ok_or_else(|| {
        Error::NumericalFailure("log-det argument is not positive definite".into())
    })?;
    Ok(chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.re.ln())
        .sum())
}

/// `ln det(σ_z^{-2} Σ A + I)` for an effective Gram `A` in parameter space.
pub(crate) fn mi_effective(
    prior: &GaussianPrior,
    eff: &CMatrix,
    noise: &NoiseModel,
) -> Result<f64> {
    check_dims(prior, eff)?;
    log_det_pd(&whitened_information(prior, eff, noise))
}

/// `tr((σ_z^{-2} A + Σ^{-1})^{-1})` for an effective Gram `A`.
pub(crate) fn mmse_effective(
    prior: &GaussianPrior,
    eff: &CMatrix,
    noise: &NoiseModel,
) -> Result<f64> {
    check_dims(prior, eff)?;
    prior.require_full_rank(&Tolerances::default())?;
    let b = whitened_information(prior, eff, noise);
    let chol = pd_cholesky(&b).ok_or_else(|| {
        Error::NumericalFailure("posterior information is not positive definite".into())
    })?;
    let inv = chol.inverse();
    Ok(prior
        .variances()
        .iter()
        .enumerate()
        .map(|(i, v)| v * inv[(i, i)].re)
        .sum())
}

/// `I(X) = ln det(σ_z^{-2} Σ R_x + I)` in nats.
pub fn glm_mi(prior: &GaussianPrior, gram: &WaveformGram, noise: &NoiseModel) -> Result<f64> {
    mi_effective(prior, gram.matrix(), noise)
}

/// `MMSE(X) = tr((σ_z^{-2} R_x + Σ^{-1})^{-1})`.
pub fn glm_mmse(prior: &GaussianPrior, gram: &WaveformGram, noise: &NoiseModel) -> Result<f64> {
    mmse_effective(prior, gram.matrix(), noise)
}

/// Builds `U diag(levels) U^H` from orthonormal columns `U`.
pub(crate) fn gram_from_modes(basis: &CMatrix, levels: &[f64]) -> CMatrix {
    let scaled = CMatrix::from_fn(basis.nrows(), levels.len(), |r, c| {
        basis[(r, c)] * levels[c]
    });
    hermitian_part(&(scaled * basis.adjoint()))
}

/// Builds `Φ diag(levels)^{1/2} U^H` over the active modes.
pub(crate) fn factor_from_modes(
    basis: &CMatrix,
    levels: &[f64],
    factor_rows: usize,
    seed: u64,
) -> Result<CMatrix> {
    let active: Vec<usize> = (0..levels.len()).filter(|&i| levels[i] > 0.0).collect();
    if factor_rows < active.len() {
        return Err(Error::InsufficientRows {
            rows: factor_rows,
            active: active.len(),
        });
    }
    let phi = random_orthonormal_columns(factor_rows, active.len(), seed);
    let mut x = CMatrix::zeros(factor_rows, basis.nrows());
    for (k, &i) in active.iter().enumerate() {
        let amp = levels[i].sqrt();
        x += (phi.column(k) * C64::new(amp, 0.0)) * basis.column(i).adjoint();
    }
    Ok(x)
}

/// Water-filling waveform `X* = Φ diag((λ - σ_z²/σ²_i)⁺)^{1/2} U^H`.
///
/// `Φ` is a seeded `factor_rows × (active modes)` matrix with orthonormal
/// columns; the Gram matrix and every figure of merit are independent of
/// it.
pub fn glm_optimal_waveform(
    prior: &GaussianPrior,
    noise: &NoiseModel,
    budget: f64,
    factor_rows: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<OptimalWaveform> {
    let variances = prior.variances();
    let observable: Vec<usize> = (0..variances.len())
        .filter(|&i| variances[i] > 0.0)
        .collect();
    if observable.is_empty() {
        return Err(Error::SingularPrior);
    }
    let floors: Vec<f64> = observable
        .iter()
        .map(|&i| noise.variance() / variances[i])
        .collect();
    let sub = waterfill_direct(&floors, budget, tol)?;
    let mut levels = vec![0.0; variances.len()];
    for (k, &i) in observable.iter().enumerate() {
        levels[i] = sub.levels[k];
    }
    let basis = prior.covariance().eigenvectors();
    let factor = factor_from_modes(basis, &levels, factor_rows, seed)?;
    let gram = WaveformGram::new(gram_from_modes(basis, &levels), budget, factor_rows, tol)?;
    Ok(OptimalWaveform {
        gram,
        factor,
        allocation: WaterfillAllocation {
            levels,
            water_level: sub.water_level,
            budget_used: sub.budget_used,
        },
    })
}

/// MI, MMSE and the estimation rate `R(MMSE)` for a given waveform.
pub fn glm_ser(
    prior: &GaussianPrior,
    gram: &WaveformGram,
    noise: &NoiseModel,
    tol: &Tolerances,
) -> Result<GlmAnalysis> {
    let mi_nats = glm_mi(prior, gram, noise)?;
    let mmse = glm_mmse(prior, gram, noise)?;
    let (ser_nats, alloc) = rate_distortion(prior.variances(), mmse, tol)?;
    Ok(GlmAnalysis {
        mi_nats,
        mmse,
        ser_nats,
        per_mode_distortion: alloc.levels.clone(),
        alloc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_covariance, random_gaussian_matrix, random_unitary};
    use crate::spectrum::{diag_real, HermitianSpectrum};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn unit_noise() -> NoiseModel {
        NoiseModel::new(1.0).unwrap()
    }

    #[test]
    fn scalar_case() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[1.0], &t).unwrap();
        let gram = WaveformGram::new(diag_real(&[1.0]), 1.0, 1, &t).unwrap();
        let a = glm_ser(&prior, &gram, &unit_noise(), &t).unwrap();
        assert!((a.mi_nats - 2f64.ln()).abs() < 1e-14);
        assert!((a.mmse - 0.5).abs() < 1e-14);
        assert!((a.ser_nats - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_gram() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[3.0, 2.0, 0.5], &t).unwrap();
        let gram = WaveformGram::zeros(3, 1.0, 3);
        let a = glm_ser(&prior, &gram, &unit_noise(), &t).unwrap();
        assert_eq!(a.mi_nats, 0.0);
        assert!((a.mmse - 5.5).abs() < 1e-14);
        assert!(a.ser_nats.abs() < 1e-12);
    }

    #[test]
    fn two_mode_hand_water_fill() {
        // floors [0.5, 1], λ = 2.25, levels [1.75, 1.25]
        let t = tol();
        let prior = GaussianPrior::from_variances(&[2.0, 1.0], &t).unwrap();
        let w = glm_optimal_waveform(&prior, &unit_noise(), 3.0, 4, 1, &t).unwrap();
        assert!((w.allocation.water_level - 2.25).abs() < 1e-14);
        assert!((w.allocation.levels[0] - 1.75).abs() < 1e-14);
        assert!((w.allocation.levels[1] - 1.25).abs() < 1e-14);
        let a = glm_ser(&prior, &w.gram, &unit_noise(), &t).unwrap();
        assert!((a.mi_nats - (4.5f64.ln() + 2.25f64.ln())).abs() < 1e-12);
        assert!((a.mi_nats - 2.3150).abs() < 1e-4);
        assert!((a.mmse - 2.0 / 2.25).abs() < 1e-12);
        assert!((a.ser_nats - a.mi_nats).abs() < 1e-12);
        // explicit factor reproduces the gram
        let g = w.factor.adjoint() * &w.factor;
        assert!((g - w.gram.matrix()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn zero_budget_and_uniform_levels() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[2.0, 1.0], &t).unwrap();
        let w = glm_optimal_waveform(&prior, &unit_noise(), 0.0, 2, 1, &t).unwrap();
        assert!(w.gram.matrix().iter().all(|z| z.norm() == 0.0));
        let eq = GaussianPrior::from_variances(&[1.5; 4], &t).unwrap();
        let w = glm_optimal_waveform(&eq, &unit_noise(), 2.0, 4, 3, &t).unwrap();
        assert!(w.allocation.levels.iter().all(|p| (p - 0.5).abs() < 1e-14));
    }

    #[test]
    fn insufficient_rows() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[2.0, 1.0], &t).unwrap();
        assert!(matches!(
            glm_optimal_waveform(&prior, &unit_noise(), 3.0, 1, 1, &t),
            Err(Error::InsufficientRows { rows: 1, active: 2 })
        ));
        // only one active mode at low budget: one row is enough
        assert!(glm_optimal_waveform(&prior, &unit_noise(), 0.1, 1, 1, &t).is_ok());
    }

    #[test]
    fn per_mode_distortion_matches_closed_form_at_optimum() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(6, 12, 5), &t).unwrap();
        let noise = NoiseModel::new(0.7).unwrap();
        let w = glm_optimal_waveform(&prior, &noise, 2.0, 8, 9, &t).unwrap();
        let a = glm_ser(&prior, &w.gram, &noise, &t).unwrap();
        let lambda = w.allocation.water_level;
        for (v, d) in prior.variances().iter().zip(&a.per_mode_distortion) {
            let closed = v / ((v * lambda / noise.variance() - 1.0).max(0.0) + 1.0);
            assert!((closed - d).abs() <= t.tol_rel * (1.0 + closed));
        }
        assert!((a.alloc.water_level - noise.variance() / lambda).abs() < 1e-12);
    }

    #[test]
    fn optimal_equality_and_bound_chain() {
        let t = tol();
        for seed in 0..40u64 {
            let m = [2, 4, 8, 10][(seed % 4) as usize];
            let prior =
                GaussianPrior::from_covariance(&random_covariance(m, 2 * m, seed), &t).unwrap();
            let noise = unit_noise();
            let budget = [0.1, 1.0, 10.0][(seed % 3) as usize];
            let w = glm_optimal_waveform(&prior, &noise, budget, m, seed, &t).unwrap();
            let opt = glm_ser(&prior, &w.gram, &noise, &t).unwrap();
            assert!((opt.ser_nats - opt.mi_nats).abs() <= 1e-8 * (1.0 + opt.mi_nats));
            let x = random_gaussian_matrix(m + 3, m, seed + 1000);
            let energy: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let x = x * C64::new((budget / energy).sqrt(), 0.0);
            let g = WaveformGram::from_factor(&x, budget, &t).unwrap();
            let any = glm_ser(&prior, &g, &noise, &t).unwrap();
            assert!(any.ser_nats <= any.mi_nats + t.tol_rel);
            assert!(any.mi_nats <= opt.mi_nats + t.tol_rel * (1.0 + opt.mi_nats));
            assert!(any.mmse >= opt.mmse - t.tol_rel);
            assert!(any.mmse <= prior.total_variance() * (1.0 + t.tol_rel));
        }
    }

    #[test]
    fn free_factor_rotation_is_irrelevant() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(4, 8, 2), &t).unwrap();
        let noise = unit_noise();
        let a = glm_optimal_waveform(&prior, &noise, 3.0, 6, 1, &t).unwrap();
        let b = glm_optimal_waveform(&prior, &noise, 3.0, 6, 2, &t).unwrap();
        assert!((&a.factor - &b.factor).iter().any(|z| z.norm() > 1e-3));
        assert!((a.gram.matrix() - b.gram.matrix())
            .iter()
            .all(|z| z.norm() < 1e-12));
        let sa = glm_ser(&prior, &a.gram, &noise, &t).unwrap();
        let sb = glm_ser(&prior, &b.gram, &noise, &t).unwrap();
        assert!((sa.mi_nats - sb.mi_nats).abs() < 1e-12);
        assert!((sa.ser_nats - sb.ser_nats).abs() < 1e-12);
    }

    #[test]
    fn degenerate_prior_basis_is_irrelevant() {
        let t = tol();
        let values = [3.0, 1.0, 1.0, 1.0];
        let p1 = GaussianPrior::from_variances(&values, &t).unwrap();
        let q = random_unitary(4, 17);
        let rotated = &q * diag_real(&values) * q.adjoint();
        let p2 = GaussianPrior::new(
            HermitianSpectrum::from_parts(values.to_vec(), q.clone(), &t).unwrap(),
            &t,
        )
        .unwrap();
        let p3 = GaussianPrior::from_covariance(&rotated, &t).unwrap();
        let noise = unit_noise();
        let g = WaveformGram::new(rotated.map(|z| z * 0.5), 3.0, 4, &t).unwrap();
        let r2 = glm_ser(&p2, &g, &noise, &t).unwrap();
        let r3 = glm_ser(&p3, &g, &noise, &t).unwrap();
        assert!((r2.mi_nats - r3.mi_nats).abs() < 1e-12);
        assert!((r2.mmse - r3.mmse).abs() < 1e-12);
        let w1 = glm_optimal_waveform(&p1, &noise, 2.0, 4, 0, &t).unwrap();
        let w1b = glm_ser(&p1, &w1.gram, &noise, &t).unwrap();
        let w3 = glm_optimal_waveform(&p3, &noise, 2.0, 4, 0, &t).unwrap();
        let w3b = glm_ser(&p3, &w3.gram, &noise, &t).unwrap();
        assert!((w1b.mi_nats - w3b.mi_nats).abs() < 1e-12);
        assert!((w1b.ser_nats - w3b.ser_nats).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_budget() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(5, 10, 3), &t).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        let mut last = (0.0, f64::INFINITY);
        for k in 0..60 {
            let budget = 0.25 * k as f64;
            let w = glm_optimal_waveform(&prior, &noise, budget, 5, 1, &t).unwrap();
            let a = glm_ser(&prior, &w.gram, &noise, &t).unwrap();
            assert!(a.mi_nats >= last.0 - 1e-12);
            assert!(a.mmse <= last.1 + 1e-12);
            last = (a.mi_nats, a.mmse);
        }
    }

    #[test]
    fn singular_prior_rejected_for_mmse() {
        let t = tol();
        let spec = HermitianSpectrum::diagonal(&[1.0, 0.0], &t).unwrap();
        let prior = GaussianPrior::degenerate(spec);
        let gram = WaveformGram::zeros(2, 1.0, 2);
        assert_eq!(
            glm_mmse(&prior, &gram, &unit_noise()),
            Err(Error::SingularPrior)
        );
        assert_eq!(glm_mi(&prior, &gram, &unit_noise()), Ok(0.0));
        let bad = WaveformGram::zeros(3, 1.0, 3);
        assert!(matches!(
            glm_mi(&prior, &bad, &unit_noise()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
