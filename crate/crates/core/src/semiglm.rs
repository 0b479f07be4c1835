//! Semi-controllable Gaussian linear model `y = X F η + z`.
//!
//! Only the waveform `X` is designable; the channel map `F` is fixed. The
//! MI-optimal waveform water-fills over the eigenmodes of `F Σ F^H`, while
//! the MMSE-optimal one (when `F`'s right singular space is aligned with
//! the prior eigenbasis) runs a *weighted* water-filling over the same
//! modes. The two coincide only when `F` also has identical singular
//! values; [`theorem2_certificate`] measures both conditions.
//!
//! Internally the prior eigenbasis is rotated inside degenerate eigenspaces
//! so that `U^H F^H F U` is block-diagonal wherever possible. This makes
//! the alignment test independent of the arbitrary basis choice the
//! eigensolver makes for repeated eigenvalues.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::glm::{factor_from_modes, gram_from_modes, mi_effective, mmse_effective};
use crate::model::{GaussianPrior, NoiseModel, WaveformGram};
use crate::spectrum::{
    hermitian_asymmetry, hermitian_part, pd_cholesky, sorted_eigen, CMatrix, CVector, Tolerances,
    C64,
};
use crate::waterfill::{
    rate_distortion, waterfill_direct, waterfill_weighted, WaterfillAllocation,
};

/// Relative residual below which the alignment / equal-singular-value
/// conditions count as satisfied, as a multiple of `tol_rel`.
const CERTIFICATE_SCALE: f64 = 10.0;

/// Channel map, prior on `η`, noise and energy budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiGlmProblem {
    channel: CMatrix,
    prior: GaussianPrior,
    noise: NoiseModel,
    budget: f64,
    factor_rows: usize,
}

impl SemiGlmProblem {
    /// `channel` is `M_h × M_η`; the prior lives on `η`.
    pub fn new(
        channel: CMatrix,
        prior: &GaussianPrior,
        noise: NoiseModel,
        budget: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        if channel.ncols() != prior.dim() {
            return Err(Error::DimensionMismatch {
                context: "channel columns vs prior",
                expected: prior.dim(),
                found: channel.ncols(),
            });
        }
        if channel.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if channel
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("channel map"));
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::NegativeBudget(budget));
        }
        let fhf = hermitian_part(&(channel.adjoint() * &channel));
        let aligned = prior.covariance().aligned_to(&fhf, tol)?;
        let factor_rows = channel.nrows();
        Ok(Self {
            channel,
            prior: prior.with_spectrum(aligned),
            noise,
            budget,
            factor_rows,
        })
    }

    /// Rows available for the explicit waveform factor (default `M_h`).
    pub fn with_factor_rows(mut self, rows: usize) -> Self {
        self.factor_rows = rows.max(1);
        self
    }

    pub fn channel(&self) -> &CMatrix {
        &self.channel
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn factor_rows(&self) -> usize {
        self.factor_rows
    }

    /// Dimension of the waveform Gram (`M_h`).
    pub fn waveform_dim(&self) -> usize {
        self.channel.nrows()
    }

    /// `F^H R F`, the Gram seen by the parameter.
    fn effective(&self, gram: &WaveformGram) -> Result<CMatrix> {
        if gram.dim() != self.waveform_dim() {
            return Err(Error::DimensionMismatch {
                context: "gram vs channel rows",
                expected: self.waveform_dim(),
                found: gram.dim(),
            });
        }
        Ok(hermitian_part(
            &(self.channel.adjoint() * gram.matrix() * &self.channel),
        ))
    }

    /// `Λ^{1/2} U^H F^H F U Λ^{1/2}`; its eigenvalues are the non-zero
    /// eigenvalues of `F Σ F^H` and its eigenvectors are `U_R`.
    fn whitened_channel_gram(&self) -> CMatrix {
        let u = self.prior.covariance().eigenvectors();
        let s: Vec<f64> = self.prior.variances().iter().map(|v| v.sqrt()).collect();
        let inner = u.adjoint() * self.channel.adjoint() * &self.channel * u;
        let m = s.len();
        hermitian_part(&CMatrix::from_fn(m, m, |r, c| {
            inner[(r, c)] * (s[r] * s[c])
        }))
    }

    fn zero_channel_cut(&self, tol: &Tolerances, largest: f64) -> Result<f64> {
        let f_norm: f64 = self.channel.iter().map(|z| z.norm_sqr()).sum();
        let scale = f_norm * self.prior.covariance().max_eigenvalue();
        if !(largest > tol.tol_psd * scale) {
            return Err(Error::ZeroChannel);
        }
        Ok(tol.tol_psd * largest)
    }

    /// Pairs every prior mode with a channel gain `Λ_F` and an output
    /// direction in waveform space.
    fn paired_modes(&self, tol: &Tolerances) -> Result<Vec<PairedMode>> {
        let w = self.whitened_channel_gram();
        let m = w.nrows();
        let diag_max = (0..m).map(|i| w[(i, i)].re).fold(0.0, f64::max);
        let cut = self.zero_channel_cut(tol, diag_max)?;
        let variances = self.prior.variances();
        let u = self.prior.covariance().eigenvectors();

        if alignment_residual(&w) <= CERTIFICATE_SCALE * tol.tol_rel {
            return Ok((0..m)
                .map(|i| {
                    let gain = w[(i, i)].re;
                    let direction = (gain > cut).then(|| {
                        let v: CVector = &self.channel * u.column(i);
                        let n = v.norm();
                        v / C64::new(n, 0.0)
                    });
                    PairedMode {
                        variance: variances[i],
                        gain: if gain > cut { gain } else { 0.0 },
                        direction,
                    }
                })
                .collect());
        }

        // misaligned: gains come from the EVD of W, each matched greedily to
        // the prior mode it overlaps most with
        let (gains, u_r) = sorted_eigen(&w);
        let sqrt_var: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        let whitened_map = &self.channel * u * crate::spectrum::diag_real(&sqrt_var);
        let assignment = greedy_assignment(&u_r);
        let mut modes: Vec<PairedMode> = variances
            .iter()
            .map(|&variance| PairedMode {
                variance,
                gain: 0.0,
                direction: None,
            })
            .collect();
        for (j, &i) in assignment.iter().enumerate() {
            if gains[j] > cut {
                let v: CVector = &whitened_map * u_r.column(j);
                let n = v.norm();
                modes[i].gain = gains[j];
                modes[i].direction = Some(v / C64::new(n, 0.0));
            }
        }
        Ok(modes)
    }
}

#[derive(Debug, Clone)]
struct PairedMode {
    variance: f64,
    gain: f64,
    direction: Option<CVector>,
}

/// Column `j` of a unitary `U_R` is assigned to the row with the largest
/// remaining `|U_R[i, j]|`, largest entries first.
fn greedy_assignment(u_r: &CMatrix) -> Vec<usize> {
    let n = u_r.nrows();
    let mut entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, u_r[(i, j)].norm_sqr()))
        .collect();
    entries.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut row_used = vec![false; n];
    let mut col_row = vec![usize::MAX; n];
    for (i, j, _) in entries {
        if !row_used[i] && col_row[j] == usize::MAX {
            row_used[i] = true;
            col_row[j] = i;
        }
    }
    col_row
}

/// Largest off-diagonal magnitude of `W` relative to its largest diagonal.
fn alignment_residual(w: &CMatrix) -> f64 {
    let m = w.nrows();
    let diag_max = (0..m).map(|i| w[(i, i)].re).fold(0.0, f64::max);
    if diag_max <= 0.0 {
        return 0.0;
    }
    let mut off = 0.0_f64;
    for r in 0..m {
        for c in 0..m {
            if r != c {
                off = off.max(w[(r, c)].norm());
            }
        }
    }
    off / diag_max
}

/// Waveform that maximizes MI.
#[derive(Debug, Clone, PartialEq)]
pub struct MiOptimalWaveform {
    pub gram: WaveformGram,
    pub mi_nats: f64,
    /// Powers on the eigenmodes of `F Σ F^H`.
    pub allocation: WaterfillAllocation,
    /// Eigenvalues `Λ_F` of `F Σ F^H`, descending.
    pub channel_gains: Vec<f64>,
    /// Eigenvectors `U_F`.
    pub basis: CMatrix,
}

impl MiOptimalWaveform {
    pub fn factor(&self, seed: u64) -> Result<CMatrix> {
        factor_from_modes(
            &self.basis,
            &self.allocation.levels,
            self.gram.factor_rows(),
            seed,
        )
    }
}

/// Waveform minimizing the trace lower bound `f(Λ_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseOptimalWaveform {
    pub gram: WaveformGram,
    /// `f(Λ_x*) = Σ σ²_i / (σ_z^{-2} Λ_F_i Λ_x_i + 1)`.
    pub bound_value: f64,
    /// Exact posterior trace at `gram`.
    pub exact_mmse: f64,
    /// `true` when `F`'s right singular space is aligned with the prior
    /// eigenbasis, in which case `bound_value == exact_mmse` is the true
    /// minimum. Otherwise the gram is only bound-optimal.
    pub exact: bool,
    /// Powers per prior mode.
    pub allocation: WaterfillAllocation,
    /// Channel gain `Λ_F` paired with each prior mode.
    pub paired_gains: Vec<f64>,
    /// Weights `a_i = sqrt(σ_z² σ²_i / Λ_F_i)` (0 for unobserved modes).
    pub weights: Vec<f64>,
}

/// MI-maximizing waveform: water-filling over the eigenmodes of `F Σ F^H`
/// with floors `σ_z² / Λ_F_i`.
pub fn semiglm_mi_optimal(problem: &SemiGlmProblem, tol: &Tolerances) -> Result<MiOptimalWaveform> {
    let k = hermitian_part(
        &(&problem.channel * problem.prior.covariance_matrix() * problem.channel.adjoint()),
    );
    let (gains, basis) = sorted_eigen(&k);
    let cut = problem.zero_channel_cut(tol, gains[0])?;
    let sigma = problem.noise.variance();
    let active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > cut).collect();
    let floors: Vec<f64> = active.iter().map(|&i| sigma / gains[i]).collect();
    let sub = waterfill_direct(&floors, problem.budget, tol)?;
    let mut levels = vec![0.0; gains.len()];
    for (k, &i) in active.iter().enumerate() {
        levels[i] = sub.levels[k];
    }
    let mi_nats = active
        .iter()
        .map(|&i| (1.0 + gains[i] * levels[i] / sigma).ln())
        .sum();
    let gram = WaveformGram::new(
        gram_from_modes(&basis, &levels),
        problem.budget,
        problem.factor_rows,
        tol,
    )?;
    let channel_gains = gains
        .iter()
        .map(|&g| if g > cut { g } else { g.max(0.0) })
        .collect();
    Ok(MiOptimalWaveform {
        gram,
        mi_nats,
        allocation: WaterfillAllocation {
            levels,
            water_level: sub.water_level,
            budget_used: sub.budget_used,
        },
        channel_gains,
        basis,
    })
}

/// Weighted water-filling waveform `Λ_x_i = (a_i λ_m - σ_z²/Λ_F_i)⁺` on the
/// channel directions paired with each prior mode.
pub fn semiglm_mmse_optimal(
    problem: &SemiGlmProblem,
    tol: &Tolerances,
) -> Result<MmseOptimalWaveform> {
    let modes = problem.paired_modes(tol)?;
    let sigma = problem.noise.variance();
    let floors: Vec<f64> = modes
        .iter()
        .map(|m| if m.gain > 0.0 { sigma / m.gain } else { 0.0 })
        .collect();
    let weights: Vec<f64> = modes
        .iter()
        .map(|m| {
            if m.gain > 0.0 {
                (sigma * m.variance / m.gain).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let allocation = waterfill_weighted(&floors, &weights, problem.budget, tol)?;
    let bound_value = modes
        .iter()
        .zip(&allocation.levels)
        .map(|(m, p)| m.variance / (m.gain * p / sigma + 1.0))
        .sum();
    let mwd = problem.waveform_dim();
    let mut gram = CMatrix::zeros(mwd, mwd);
    for (m, &p) in modes.iter().zip(&allocation.levels) {
        if let (Some(d), true) = (&m.direction, p > 0.0) {
            gram += (d * C64::new(p, 0.0)) * d.adjoint();
        }
    }
    let gram = WaveformGram::new(
        hermitian_part(&gram),
        problem.budget,
        problem.factor_rows,
        tol,
    )?;
    let exact_mmse = semiglm_mmse_at(problem, &gram)?;
    let exact =
        alignment_residual(&problem.whitened_channel_gram()) <= CERTIFICATE_SCALE * tol.tol_rel;
    Ok(MmseOptimalWaveform {
        gram,
        bound_value,
        exact_mmse,
        exact,
        paired_gains: modes.iter().map(|m| m.gain).collect(),
        weights,
        allocation,
    })
}

/// Exact `tr((σ_z^{-2} F^H R_x F + Σ^{-1})^{-1})`.
pub fn semiglm_mmse_at(problem: &SemiGlmProblem, gram: &WaveformGram) -> Result<f64> {
    mmse_effective(&problem.prior, &problem.effective(gram)?, &problem.noise)
}

/// Exact `ln det(σ_z^{-2} F Σ F^H R_x + I)`.
pub fn semiglm_mi_at(problem: &SemiGlmProblem, gram: &WaveformGram) -> Result<f64> {
    mi_effective(&problem.prior, &problem.effective(gram)?, &problem.noise)
}

/// Residuals of the two conditions under which the MI-optimal and the
/// MMSE-optimal waveforms coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualityCertificate {
    /// Deviation of `U_R` from the identity, measured as the relative
    /// off-diagonal mass of `U_R Λ_F U_R^H` in the prior eigenbasis.
    pub alignment_residual: f64,
    /// `(s_max - s_min) / s_max` over the non-zero singular values of `F`.
    pub singular_spread: f64,
    /// `F` observes every prior mode.
    pub full_column_rank: bool,
    pub threshold: f64,
    pub passed: bool,
}

pub fn theorem2_certificate(problem: &SemiGlmProblem, tol: &Tolerances) -> EqualityCertificate {
    let threshold = CERTIFICATE_SCALE * tol.tol_rel;
    let alignment_residual = alignment_residual(&problem.whitened_channel_gram());
    let svd = SVD::new(problem.channel.clone(), false, false);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let nonzero: Vec<f64> = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&s| s > tol.tol_psd * s_max)
        .collect();
    let s_min = nonzero.iter().cloned().fold(f64::INFINITY, f64::min);
    let singular_spread = if nonzero.is_empty() {
        1.0
    } else {
        (s_max - s_min) / s_max
    };
    let full_column_rank = nonzero.len() == problem.prior.dim();
    EqualityCertificate {
        alignment_residual,
        singular_spread,
        full_column_rank,
        threshold,
        passed: alignment_residual <= threshold && singular_spread <= threshold && full_column_rank,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    /// `tr(A^{-1} Λ) - Σ Λ_ii / A_ii`.
    pub slack: f64,
    /// `A` has no off-diagonal mass beyond `tol_herm`.
    pub diagonal: bool,
    /// `slack >= -tol_rel`.
    pub holds: bool,
}

/// Evaluates `tr(A^{-1} Λ) ≥ Σ Λ_ii / A_ii` for Hermitian positive definite
/// `A` and positive diagonal `Λ`.
pub fn lemma1_check(a: &CMatrix, lambda: &[f64], tol: &Tolerances) -> Result<Lemma1Report> {
    let n = a.nrows();
    if a.ncols() != n || lambda.len() != n {
        return Err(Error::DimensionMismatch {
            context: "trace inequality inputs",
            expected: n,
            found: lambda.len(),
        });
    }
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument(
            "diagonal entries must be positive".into(),
        ));
    }
    let scale = a.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    if hermitian_asymmetry(a) > tol.tol_herm * scale {
        return Err(Error::NotPositiveDefinite);
    }
    let sym = hermitian_part(a);
    let inv = pd_cholesky(&sym)
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    let lhs: f64 = (0..n).map(|i| lambda[i] * inv[(i, i)].re).sum();
    let rhs: f64 = (0..n).map(|i| lambda[i] / sym[(i, i)].re).sum();
    let slack = lhs - rhs;
    let mut off = 0.0_f64;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                off = off.max(sym[(r, c)].norm());
            }
        }
    }
    Ok(Lemma1Report {
        slack,
        diagonal: off <= tol.tol_herm * scale,
        holds: slack >= -tol.tol_rel * (1.0 + lhs.abs()),
    })
}

/// Which waveform ended up achieving the reported minimum MMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmseWaveformSource {
    /// The weighted water-filling (bound-optimal) waveform.
    BoundOptimal,
    /// The bound-optimal waveform did worse than the MI-optimal one; only
    /// possible when `F` is misaligned with the prior.
    MiOptimal,
}

impl MmseWaveformSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BoundOptimal => "bound",
            Self::MiOptimal => "mi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiGlmAnalysis {
    /// `I(X*)`.
    pub mi_opt: f64,
    /// Exact MMSE at the MI-optimal waveform.
    pub mmse_mi_waveform: f64,
    /// `MMSE(X̃*)`: best exact MMSE among the candidate waveforms.
    pub mmse_opt: f64,
    /// `f(Λ_x*)` from the weighted water-filling.
    pub mmse_bound: f64,
    pub ser_mi: f64,
    pub ser_mmse: f64,
    pub mmse_source: MmseWaveformSource,
    pub equality_certificate: EqualityCertificate,
    pub mi_waveform: MiOptimalWaveform,
    pub mmse_waveform: MmseOptimalWaveform,
}

impl SemiGlmAnalysis {
    /// `I(X*) - R(MMSE(X̃*))`.
    pub fn gap(&self) -> f64 {
        self.mi_opt - self.ser_mmse
    }
}

/// Both optimal waveforms, both MMSEs, both estimation rates and the
/// equality certificate.
///
/// Fails with [`Error::NumericalFailure`] if the ordering
/// `ser_mi ≤ ser_mmse ≤ mi_opt` is violated beyond `tol_rel`.
pub fn semiglm_analyze(problem: &SemiGlmProblem, tol: &Tolerances) -> Result<SemiGlmAnalysis> {
    let mi_waveform = semiglm_mi_optimal(problem, tol)?;
    let mmse_waveform = semiglm_mmse_optimal(problem, tol)?;
    let mmse_mi_waveform = semiglm_mmse_at(problem, &mi_waveform.gram)?;
    // ties go to the bound-optimal waveform
    let margin = tol.tol_rel * (1.0 + mmse_mi_waveform);
    let (mmse_opt, mmse_source) = if mmse_waveform.exact_mmse <= mmse_mi_waveform + margin {
        (mmse_waveform.exact_mmse, MmseWaveformSource::BoundOptimal)
    } else {
        (mmse_mi_waveform, MmseWaveformSource::MiOptimal)
    };
    let variances = problem.prior.variances();
    let (ser_mi, _) = rate_distortion(variances, mmse_mi_waveform, tol)?;
    let (ser_mmse, _) = rate_distortion(variances, mmse_opt, tol)?;
    let mi_opt = mi_waveform.mi_nats;
    let slack = tol.tol_rel * (1.0 + mi_opt);
    if ser_mi > ser_mmse + slack || ser_mmse > mi_opt + slack {
        return Err(Error::NumericalFailure(format!(
            "rate ordering violated: ser_mi {ser_mi}, ser_mmse {ser_mmse}, mi_opt {mi_opt}"
        )));
    }
    Ok(SemiGlmAnalysis {
        mi_opt,
        mmse_mi_waveform,
        mmse_opt,
        mmse_bound: mmse_waveform.bound_value,
        ser_mi,
        ser_mmse,
        mmse_source,
        equality_certificate: theorem2_certificate(problem, tol),
        mi_waveform,
        mmse_waveform,
    })
}

/// `left · diag(singular_values) · right^H`: a channel map with prescribed
/// singular values and right singular vectors (columns of `right`).
pub fn channel_from_svd(
    left: &CMatrix,
    singular_values: &[f64],
    right: &CMatrix,
) -> Result<CMatrix> {
    let k = singular_values.len();
    if left.ncols() != k || right.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "singular factors",
            expected: k,
            found: left.ncols().min(right.ncols()),
        });
    }
    let scaled = CMatrix::from_fn(left.nrows(), k, |r, c| left[(r, c)] * singular_values[c]);
    Ok(scaled * right.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{glm_optimal_waveform, glm_ser};
    use crate::random::{random_covariance, random_gaussian_matrix, random_unitary};
    use crate::spectrum::diag_real;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn problem(f: CMatrix, prior: &GaussianPrior, sigma: f64, budget: f64) -> SemiGlmProblem {
        SemiGlmProblem::new(f, prior, NoiseModel::new(sigma).unwrap(), budget, &tol()).unwrap()
    }

    #[test]
    fn identity_channel_reduces_to_glm() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(4, 8, 1), &t).unwrap();
        let p = problem(CMatrix::identity(4, 4), &prior, 0.8, 3.0);
        let a = semiglm_analyze(&p, &t).unwrap();
        let w = glm_optimal_waveform(&prior, p.noise(), 3.0, 4, 0, &t).unwrap();
        let g = glm_ser(&prior, &w.gram, p.noise(), &t).unwrap();
        assert!((a.mi_opt - g.mi_nats).abs() <= t.tol_rel);
        assert!((a.mmse_opt - g.mmse).abs() <= t.tol_rel);
        assert!((a.mmse_mi_waveform - g.mmse).abs() <= t.tol_rel);
        assert!((a.ser_mmse - g.ser_nats).abs() <= t.tol_rel);
        assert!((a.mi_waveform.gram.matrix() - w.gram.matrix())
            .iter()
            .all(|z| z.norm() < 1e-9));
        assert!((a.mmse_waveform.gram.matrix() - w.gram.matrix())
            .iter()
            .all(|z| z.norm() < 1e-9));
        assert!(a.equality_certificate.passed);
        assert_eq!(a.mmse_source, MmseWaveformSource::BoundOptimal);
    }

    #[test]
    fn scaled_identity_scales_floors() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[2.0, 1.0], &t).unwrap();
        let c = 3.0;
        let p = problem(CMatrix::identity(2, 2) * C64::new(0.0, c), &prior, 1.0, 1.0);
        let mi = semiglm_mi_optimal(&p, &t).unwrap();
        assert!((mi.channel_gains[0] - c * c * 2.0).abs() < 1e-12);
        // equivalent to GLM with noise σ_z² / c²
        let w = glm_optimal_waveform(
            &prior,
            &NoiseModel::new(1.0 / (c * c)).unwrap(),
            1.0,
            2,
            0,
            &t,
        )
        .unwrap();
        for (x, y) in mi.allocation.levels.iter().zip(&w.allocation.levels) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_channel_rejected() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[2.0, 1.0], &t).unwrap();
        let p = problem(CMatrix::zeros(3, 2), &prior, 1.0, 1.0);
        assert_eq!(semiglm_mi_optimal(&p, &t).unwrap_err(), Error::ZeroChannel);
        assert_eq!(
            semiglm_mmse_optimal(&p, &t).unwrap_err(),
            Error::ZeroChannel
        );
    }

    #[test]
    fn diagonal_channel_weighted_split_matches_grid() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[1.0, 1.0], &t).unwrap();
        let p = problem(diag_real(&[2.0, 1.0]), &prior, 1.0, 2.0);
        let mi = semiglm_mi_optimal(&p, &t).unwrap();
        let mm = semiglm_mmse_optimal(&p, &t).unwrap();
        assert!((mi.allocation.levels[0] - 1.375).abs() < 1e-12);
        assert!((mm.allocation.levels[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!(mm.exact);
        // 2-D grid oracle on the budget simplex
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=200_000 {
            let p1 = 2.0 * k as f64 / 200_000.0;
            let v = 1.0 / (4.0 * p1 + 1.0) + 1.0 / ((2.0 - p1) + 1.0);
            if v < best.1 {
                best = (p1, v);
            }
        }
        assert!((best.0 - 5.0 / 6.0).abs() < 1e-4);
        assert!((mm.bound_value - best.1).abs() < 1e-9);
        assert!((mm.exact_mmse - mm.bound_value).abs() < 1e-12);
    }

    #[test]
    fn equality_construction_passes_certificate() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(4, 8, 3), &t).unwrap();
        let u = prior.covariance().eigenvectors().clone();
        let f = &u * &u.adjoint() * C64::new(3.0, 0.0);
        let p = problem(f, &prior, 1.0, 2.0);
        let cert = theorem2_certificate(&p, &t);
        assert!(cert.passed, "{cert:?}");
        assert!(cert.alignment_residual < 1e-12 && cert.singular_spread < 1e-12);
        let a = semiglm_analyze(&p, &t).unwrap();
        assert!((a.ser_mmse - a.mi_opt).abs() <= 1e-9 * (1.0 + a.mi_opt));
        assert!(
            (a.mi_waveform.gram.matrix() - a.mmse_waveform.gram.matrix())
                .iter()
                .all(|z| z.norm() < 1e-9)
        );
    }

    #[test]
    fn identical_singular_values_with_unitary_left_factor() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(5, 10, 8), &t).unwrap();
        let u = prior.covariance().eigenvectors().clone();
        let left = random_unitary(5, 99);
        let f = channel_from_svd(&left, &[1.7; 5], &u).unwrap();
        let p = problem(f, &prior, 0.5, 4.0);
        let a = semiglm_analyze(&p, &t).unwrap();
        assert!(a.equality_certificate.passed);
        assert!((a.ser_mmse - a.mi_opt).abs() <= 1e-9 * (1.0 + a.mi_opt));
    }

    #[test]
    fn distinct_singular_values_fail_certificate() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(3, 6, 4), &t).unwrap();
        let u = prior.covariance().eigenvectors().clone();
        let f = channel_from_svd(&random_unitary(3, 5), &[2.0, 1.0, 0.5], &u).unwrap();
        let p = problem(f, &prior, 1.0, 2.0);
        let cert = theorem2_certificate(&p, &t);
        assert!(cert.alignment_residual < 1e-12);
        assert!((cert.singular_spread - 0.75).abs() < 1e-12);
        assert!(!cert.passed);
        let a = semiglm_analyze(&p, &t).unwrap();
        assert!(a.mmse_waveform.exact);
        assert!(a.ser_mmse > a.ser_mi);
        assert!(a.ser_mmse < a.mi_opt - 1e-6);
    }

    #[test]
    fn misaligned_right_space_fails_and_loses_information() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(4, 8, 6), &t).unwrap();
        let u = prior.covariance().eigenvectors().clone();
        let left = random_unitary(4, 7);
        let s = [2.0, 1.5, 1.0, 0.6];
        let aligned = problem(channel_from_svd(&left, &s, &u).unwrap(), &prior, 1.0, 0.5);
        let q = random_unitary(4, 8);
        let misaligned = problem(channel_from_svd(&left, &s, &q).unwrap(), &prior, 1.0, 0.5);
        let cert = theorem2_certificate(&misaligned, &t);
        assert!(cert.alignment_residual > 1e-3);
        assert!(!cert.passed);
        let a = semiglm_mi_optimal(&aligned, &t).unwrap();
        let b = semiglm_mi_optimal(&misaligned, &t).unwrap();
        assert!(b.mi_nats < a.mi_nats);
    }

    #[test]
    fn rank_deficient_channel_never_certifies() {
        let t = tol();
        let prior = GaussianPrior::from_variances(&[1.0, 1.0], &t).unwrap();
        let f = CMatrix::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let p = problem(f, &prior, 1.0, 1.0);
        let cert = theorem2_certificate(&p, &t);
        assert!(!cert.full_column_rank);
        assert!(!cert.passed);
        let a = semiglm_analyze(&p, &t).unwrap();
        // unobserved mode keeps its full variance
        assert!((a.mmse_opt - (0.5 + 1.0)).abs() < 1e-12);
        assert!(a.ser_mmse < a.mi_opt);
    }

    #[test]
    fn trace_inequality_examples() {
        let t = tol();
        let d = lemma1_check(&diag_real(&[2.0, 3.0]), &[1.0, 5.0], &t).unwrap();
        assert!(d.slack.abs() < 1e-15 && d.diagonal && d.holds);
        let a = CMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0].map(|v| C64::new(v, 0.0)));
        let r = lemma1_check(&a, &[1.0, 1.0], &t).unwrap();
        assert!((r.slack - 1.0 / 3.0).abs() < 1e-14);
        assert!(!r.diagonal && r.holds);
        let bad = CMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0].map(|v| C64::new(v, 0.0)));
        assert_eq!(
            lemma1_check(&bad, &[1.0, 1.0], &t),
            Err(Error::NotPositiveDefinite)
        );
    }

    #[test]
    fn trace_inequality_random_sweep() {
        use rand::{Rng, SeedableRng};
        let t = tol();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for trial in 0..1000u64 {
            let n = rng.random_range(1..=8);
            let b = random_gaussian_matrix(n + 2, n, trial);
            let a = b.adjoint() * &b + CMatrix::identity(n, n) * C64::new(0.05, 0.0);
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
            let r = lemma1_check(&a, &lambda, &t).unwrap();
            assert!(r.slack >= -1e-10, "{r:?}");
        }
    }

    /// KKT gap of `R` for optimizing a smooth convex/concave objective over
    /// `{R ⪰ 0, tr R ≤ P}` with the budget active: with `ν` the extreme
    /// eigenvalue of the gradient `G`, `R` is optimal iff `tr(G R) = ν P`.
    fn kkt_gap(g: &CMatrix, r: &CMatrix, budget: f64, maximize: bool) -> f64 {
        let (vals, _) = sorted_eigen(&hermitian_part(g));
        let nu = if maximize {
            vals[0]
        } else {
            vals[vals.len() - 1]
        };
        let inner = (g * r).trace().re;
        (nu * budget - inner).abs() / (nu.abs() * budget)
    }

    fn direct_mi(p: &SemiGlmProblem, r: &CMatrix) -> f64 {
        let k = p.channel() * p.prior().covariance_matrix() * p.channel().adjoint();
        let n = r.nrows();
        let m = CMatrix::identity(n, n) + &k * r / C64::new(p.noise().variance(), 0.0);
        m.determinant().norm().ln()
    }

    fn direct_mmse(p: &SemiGlmProblem, r: &CMatrix) -> f64 {
        let sinv = p.prior().covariance_matrix().try_inverse().unwrap();
        let info =
            p.channel().adjoint() * r * p.channel() / C64::new(p.noise().variance(), 0.0) + sinv;
        info.try_inverse().unwrap().trace().re
    }

    #[test]
    fn mi_optimum_satisfies_kkt_and_beats_random_search() {
        use rand::{Rng, SeedableRng};
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(4, 8, 21), &t).unwrap();
        let f = random_gaussian_matrix(4, 4, 22);
        let p = problem(f, &prior, 1.0, 2.0);
        let opt = semiglm_mi_optimal(&p, &t).unwrap();
        assert!((semiglm_mi_at(&p, &opt.gram).unwrap() - opt.mi_nats).abs() < 1e-10);
        let k = p.channel() * p.prior().covariance_matrix() * p.channel().adjoint();
        let sigma = p.noise().variance();
        let r = opt.gram.matrix();
        let inner = CMatrix::identity(4, 4) + r * &k / C64::new(sigma, 0.0);
        let g = &k * inner.try_inverse().unwrap() / C64::new(sigma, 0.0);
        assert!(kkt_gap(&g, r, 2.0, true) < 1e-9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for s in 0..5_000u64 {
            let cols = rng.random_range(1..=4);
            let x = random_gaussian_matrix(cols, 4, 1000 + s);
            let e: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let r = x.adjoint() * x * C64::new(2.0 / e, 0.0);
            assert!(direct_mi(&p, &r) <= opt.mi_nats + 1e-9);
        }
    }

    #[test]
    fn aligned_bound_optimum_is_the_true_minimum() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(3, 6, 31), &t).unwrap();
        let u = prior.covariance().eigenvectors().clone();
        let f = channel_from_svd(&random_unitary(3, 32), &[1.8, 1.0, 0.7], &u).unwrap();
        let p = problem(f, &prior, 1.0, 3.0);
        let mm = semiglm_mmse_optimal(&p, &t).unwrap();
        assert!(mm.exact);
        assert!((mm.exact_mmse - mm.bound_value).abs() < 1e-10);
        let sinv = p.prior().covariance_matrix().try_inverse().unwrap();
        let sigma = p.noise().variance();
        let r = mm.gram.matrix();
        let info = p.channel().adjoint() * r * p.channel() / C64::new(sigma, 0.0) + sinv;
        let inv = info.try_inverse().unwrap();
        // d tr(J^{-1}) / dR = -F J^{-2} F^H / σ²
        let g = -(p.channel() * &inv * &inv * p.channel().adjoint()) / C64::new(sigma, 0.0);
        assert!(kkt_gap(&g, r, 3.0, false) < 1e-9);
        assert!((direct_mmse(&p, r) - mm.exact_mmse).abs() < 1e-10);
    }

    #[test]
    fn misaligned_bound_optimum_is_not_stationary() {
        let t = tol();
        let prior = GaussianPrior::from_covariance(&random_covariance(3, 6, 31), &t).unwrap();
        let p = problem(random_gaussian_matrix(3, 3, 33), &prior, 1.0, 3.0);
        let mm = semiglm_mmse_optimal(&p, &t).unwrap();
        assert!(!mm.exact);
        assert!(mm.exact_mmse > mm.bound_value);
        let sinv = p.prior().covariance_matrix().try_inverse().unwrap();
        let r = mm.gram.matrix();
        let info = p.channel().adjoint() * r * p.channel() + sinv;
        let inv = info.try_inverse().unwrap();
        let g = -(p.channel() * &inv * &inv * p.channel().adjoint());
        assert!(kkt_gap(&g, r, 3.0, false) > 1e-6);
    }

    #[test]
    fn ordering_over_random_instances() {
        let t = tol();
        for seed in 0..200u64 {
            let m = 2 + (seed % 5) as usize;
            let prior =
                GaussianPrior::from_covariance(&random_covariance(m, 2 * m, seed), &t).unwrap();
            let f = if seed % 2 == 0 {
                let u = prior.covariance().eigenvectors().clone();
                let s: Vec<f64> = (0..m)
                    .map(|i| 0.5 + 1.5 * ((seed as f64 * 0.37 + i as f64 * 0.61).sin().abs()))
                    .collect();
                channel_from_svd(&random_unitary(m, seed + 7), &s, &u).unwrap()
            } else {
                random_gaussian_matrix(m, m, seed + 11)
            };
            let p = problem(f, &prior, 1.0, 0.5 + (seed % 7) as f64);
            let a = semiglm_analyze(&p, &t).unwrap();
            let e = t.tol_rel * (1.0 + a.mi_opt);
            assert!(a.mmse_opt <= a.mmse_mi_waveform + e);
            assert!(a.mmse_mi_waveform <= prior.total_variance() * (1.0 + t.tol_rel));
            assert!(a.ser_mi <= a.ser_mmse + e);
            assert!(a.ser_mmse <= a.mi_opt + e);
            if a.equality_certificate.passed {
                assert!((a.ser_mmse - a.mi_opt).abs() <= 1e-7 * (1.0 + a.mi_opt));
            }
        }
    }

    #[test]
    fn degenerate_prior_with_commuting_channel_is_aligned() {
        let t = tol();
        // Σ = I: every basis is an eigenbasis, so any F is aligned
        let prior = GaussianPrior::from_variances(&[1.0; 3], &t).unwrap();
        let q = random_unitary(3, 40);
        let f = channel_from_svd(&random_unitary(3, 41), &[2.0, 1.0, 0.5], &q).unwrap();
        let p = problem(f, &prior, 1.0, 2.0);
        let cert = theorem2_certificate(&p, &t);
        assert!(cert.alignment_residual < 1e-10, "{cert:?}");
        let mm = semiglm_mmse_optimal(&p, &t).unwrap();
        assert!(mm.exact);
        assert!((mm.exact_mmse - mm.bound_value).abs() < 1e-10);
    }
}
