//! Bayesian Cramér-Rao bounds for nonlinear sensing channels `y = X h(η) + z`.
//!
//! The expected outer product of the vectorized Jacobian is reduced to its
//! dominant rank-1 term, which yields a fixed linear map `G` and turns the
//! BCRB minimization into a semi-controllable linear problem with prior
//! information `J_P`. The scalar time-delay model lives here as well.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GaussianPrior, NoiseModel, WaveformGram};
use crate::random::substream;
use crate::semiglm::{semiglm_mmse_optimal, SemiGlmProblem};
use crate::spectrum::{
    hermitian_part, sorted_eigen, spectrum_from_matrix, CMatrix, CVector, Tolerances, C64,
};
use crate::waterfill::rate_distortion;

/// Real parameter vector.
pub type RVector = DVector<f64>;
pub type HMap = Arc<dyn Fn(&RVector) -> CVector + Send + Sync>;
pub type JacobianMap = Arc<dyn Fn(&RVector) -> CMatrix + Send + Sync>;

/// Default number of prior samples for the Jacobian outer-product average.
pub const DEFAULT_CHOI_SAMPLES: usize = 10_000;

const CHUNK: usize = 256;

#[derive(Clone)]
pub enum Jacobian {
    /// `h` is linear; the Jacobian does not depend on `η`.
    Constant(CMatrix),
    Analytic(JacobianMap),
    /// Central differences with step `1e-5·(1 + |η_i|)`.
    FiniteDifference,
}

impl fmt::Debug for Jacobian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => f.debug_tuple("Constant").field(&m.shape()).finish(),
            Self::Analytic(_) => f.write_str("Analytic"),
            Self::FiniteDifference => f.write_str("FiniteDifference"),
        }
    }
}

/// `h(η)` with its Jacobian, a Gaussian prior on the real parameter `η`
/// centred at `mean`, and the prior Fisher information `J_P`.
#[derive(Clone)]
pub struct NonlinearChannel {
    h_map: HMap,
    jacobian: Jacobian,
    prior: GaussianPrior,
    mean: RVector,
    prior_fim: CMatrix,
    output_dim: usize,
}

impl fmt::Debug for NonlinearChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearChannel")
            .field("jacobian", &self.jacobian)
            .field("output_dim", &self.output_dim)
            .field("param_dim", &self.mean.len())
            .finish()
    }
}

impl NonlinearChannel {
    pub fn new(
        h_map: HMap,
        jacobian: Jacobian,
        prior: &GaussianPrior,
        mean: RVector,
        tol: &Tolerances,
    ) -> Result<Self> {
        let k = prior.dim();
        if mean.len() != k {
            return Err(Error::DimensionMismatch {
                context: "prior mean",
                expected: k,
                found: mean.len(),
            });
        }
        let output_dim = h_map(&mean).len();
        if output_dim == 0 {
            return Err(Error::EmptyInput);
        }
        let channel = Self {
            h_map,
            jacobian,
            prior_fim: prior_fim_gaussian(prior, tol)?,
            prior: prior.clone(),
            mean,
            output_dim,
        };
        let j = channel.jacobian_at(&channel.mean)?;
        if j.shape() != (output_dim, k) {
            return Err(Error::DimensionMismatch {
                context: "jacobian columns",
                expected: k,
                found: j.ncols(),
            });
        }
        Ok(channel)
    }

    /// `h(η) = F η` with a zero-mean prior.
    pub fn linear(f: CMatrix, prior: &GaussianPrior, tol: &Tolerances) -> Result<Self> {
        if f.ncols() != prior.dim() {
            return Err(Error::DimensionMismatch {
                context: "linear map columns",
                expected: prior.dim(),
                found: f.ncols(),
            });
        }
        let map = f.clone();
        let h: HMap = Arc::new(move |eta: &RVector| &map * eta.map(|v| C64::new(v, 0.0)));
        Self::new(
            h,
            Jacobian::Constant(f),
            prior,
            RVector::zeros(prior.dim()),
            tol,
        )
    }

    /// Replaces the prior information with an explicit PSD matrix.
    pub fn with_prior_fim(mut self, j_p: CMatrix, tol: &Tolerances) -> Result<Self> {
        let k = self.param_dim();
        if j_p.shape() != (k, k) {
            return Err(Error::DimensionMismatch {
                context: "prior information",
                expected: k,
                found: j_p.nrows(),
            });
        }
        spectrum_from_matrix(&j_p, tol)?;
        self.prior_fim = hermitian_part(&j_p);
        Ok(self)
    }

    pub fn param_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn mean(&self) -> &RVector {
        &self.mean
    }

    pub fn prior_fim(&self) -> &CMatrix {
        &self.prior_fim
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.jacobian, Jacobian::Constant(_))
    }

    pub fn h(&self, eta: &RVector) -> CVector {
        (self.h_map)(eta)
    }

    pub fn jacobian_at(&self, eta: &RVector) -> Result<CMatrix> {
        let j = match &self.jacobian {
            Jacobian::Constant(m) => m.clone(),
            Jacobian::Analytic(f) => f(eta),
            Jacobian::FiniteDifference => self.finite_difference(eta),
        };
        if j.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::JacobianFailure);
        }
        Ok(j)
    }

    fn finite_difference(&self, eta: &RVector) -> CMatrix {
        let k = eta.len();
        let mut j = CMatrix::zeros(self.output_dim, k);
        for i in 0..k {
            let step = 1e-5 * (1.0 + eta[i].abs());
            let mut up = eta.clone();
            let mut down = eta.clone();
            up[i] += step;
            down[i] -= step;
            let diff = (self.h(&up) - self.h(&down)) / C64::new(2.0 * step, 0.0);
            if diff.len() != self.output_dim {
                return CMatrix::from_element(self.output_dim, k, C64::new(f64::NAN, 0.0));
            }
            j.set_column(i, &diff);
        }
        j
    }

    /// Lower Cholesky factor of the real prior covariance.
    fn sampling_factor(&self) -> Result<DMatrix<f64>> {
        let cov = self.prior.covariance_matrix();
        let scale = cov.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
        if cov.iter().any(|z| z.im.abs() > 1e-12 * scale) {
            return Err(Error::InvalidArgument(
                "sampling a real parameter needs a real prior covariance".into(),
            ));
        }
        let real = cov.map(|z| z.re);
        nalgebra::Cholesky::new(real)
            .map(|c| c.l())
            .ok_or(Error::SingularPrior)
    }
}

/// `J_P = Σ_η^{-1}`.
pub fn prior_fim_gaussian(prior: &GaussianPrior, tol: &Tolerances) -> Result<CMatrix> {
    prior.covariance().inverse(tol)
}

/// Dominant rank-1 term of `Ψ = E[vec(F_η) vec(F_η)^H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiReduction {
    pub psi: CMatrix,
    pub lambda_psi: f64,
    /// Unit dominant eigenvector, phase fixed so its largest entry is real
    /// and positive.
    pub u: CVector,
    /// `sqrt(λ_Ψ)·mat(u)`, `M_h × K`, column-major.
    pub g: CMatrix,
    /// `1 - λ_Ψ / tr Ψ`.
    pub rank1_residual: f64,
    pub n_samples: usize,
}

fn vec_outer(f: &CMatrix) -> CMatrix {
    let v = CVector::from_column_slice(f.as_slice());
    &v * v.adjoint()
}

/// Estimates `Ψ` over `n_samples` prior draws (exact for constant
/// Jacobians) and extracts its dominant eigenpair. Sample `s` uses
/// substream `s` of `seed`, and partial sums are combined in a fixed order,
/// so the result does not depend on the thread count.
pub fn choi_reduce(
    channel: &NonlinearChannel,
    n_samples: usize,
    seed: u64,
) -> Result<ChoiReduction> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let (rows, k) = (channel.output_dim, channel.param_dim());
    let (psi, used) = match &channel.jacobian {
        Jacobian::Constant(f) => (vec_outer(f), 1),
        _ => {
            let l = channel.sampling_factor()?;
            let chunks: Vec<(usize, usize)> = (0..n_samples)
                .step_by(CHUNK)
                .map(|s| (s, (s + CHUNK).min(n_samples)))
                .collect();
            let partial: Vec<Result<CMatrix>> = chunks
                .par_iter()
                .map(|&(start, end)| {
                    let mut acc = CMatrix::zeros(rows * k, rows * k);
                    for s in start..end {
                        let mut rng = substream(seed, s as u64);
                        let w = RVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                        let eta = &channel.mean + &l * w;
                        acc += vec_outer(&channel.jacobian_at(&eta)?);
                    }
                    Ok(acc)
                })
                .collect();
            let mut psi = CMatrix::zeros(rows * k, rows * k);
            for p in partial {
                psi += p?;
            }
            (psi / C64::new(n_samples as f64, 0.0), n_samples)
        }
    };
    let psi = hermitian_part(&psi);
    let (values, vectors) = sorted_eigen(&psi);
    let lambda_psi = values[0].max(0.0);
    let trace = psi.trace().re;
    if !(trace > 0.0) {
        return Err(Error::ZeroChannel);
    }
    let mut u: CVector = vectors.column(0).into_owned();
    let (pivot, _) = u.iter().enumerate().fold((0, -1.0), |best, (i, z)| {
        if z.norm() > best.1 + 1e-12 {
            (i, z.norm())
        } else {
            best
        }
    });
    let phase = u[pivot] / u[pivot].norm();
    u /= phase;
    let g = CMatrix::from_column_slice(rows, k, u.as_slice()) * C64::new(lambda_psi.sqrt(), 0.0);
    Ok(ChoiReduction {
        rank1_residual: (1.0 - lambda_psi / trace).clamp(0.0, 1.0),
        psi,
        lambda_psi,
        u,
        g,
        n_samples: used,
    })
}

/// The linear problem `min tr((σ_z^{-2} G^H R G + J_P)^{-1})` as a
/// semi-controllable model with prior covariance `J_P^{-1}`.
fn reduced_problem(
    channel: &NonlinearChannel,
    reduction: &ChoiReduction,
    noise: &NoiseModel,
    budget: f64,
    tol: &Tolerances,
) -> Result<SemiGlmProblem> {
    let j = spectrum_from_matrix(&channel.prior_fim, tol)?;
    if !j.is_full_rank(tol) {
        return Err(Error::NotPositiveDefinite);
    }
    let prior = GaussianPrior::from_covariance(&j.inverse(tol)?, tol)?;
    SemiGlmProblem::new(reduction.g.clone(), &prior, *noise, budget, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcrbMinimum {
    /// Minimized trace lower bound `Σ Λ_J_i / (σ_z^{-2} Λ_G_i Λ_x_i + 1)`.
    pub bound_value: f64,
    /// Exact `tr((σ_z^{-2} G^H R G + J_P)^{-1})` at `gram`.
    pub bcrb: f64,
    pub gram: WaveformGram,
    /// Eigenvalues `Λ_J` of `J_P^{-1}`, descending.
    pub lambda_j: Vec<f64>,
    /// Channel gains paired with each `Λ_J_i`.
    pub lambda_g: Vec<f64>,
    pub water_level: f64,
    pub powers: Vec<f64>,
    /// `G`'s right singular space is aligned with `U_J`, so `bcrb` is the
    /// true minimum.
    pub exact: bool,
}

/// Weighted water-filling with `F → G` and `Σ_η^{-1} → J_P`.
pub fn bcrb_min(
    channel: &NonlinearChannel,
    reduction: &ChoiReduction,
    noise: &NoiseModel,
    budget: f64,
    tol: &Tolerances,
) -> Result<BcrbMinimum> {
    if reduction.g.shape() != (channel.output_dim, channel.param_dim()) {
        return Err(Error::DimensionMismatch {
            context: "reduced map vs channel",
            expected: channel.output_dim * channel.param_dim(),
            found: reduction.g.len(),
        });
    }
    let problem = reduced_problem(channel, reduction, noise, budget, tol)?;
    let w = semiglm_mmse_optimal(&problem, tol)?;
    Ok(BcrbMinimum {
        bound_value: w.bound_value,
        bcrb: w.exact_mmse,
        lambda_j: problem.prior().variances().to_vec(),
        lambda_g: w.paired_gains.clone(),
        water_level: w.allocation.water_level,
        powers: w.allocation.levels.clone(),
        exact: w.exact,
        gram: w.gram,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerUpperBound {
    /// `Σ ln(1 + Λ_G_i Λ_x_i / σ_z²)` with `Λ_x_i = (a_i λ - σ_z²/Λ_G_i)⁺`.
    pub bound: f64,
    /// `R_E(BCRB)` at the water-filling gram, by reverse water-filling.
    pub ser_bcrb: f64,
    pub minimum: BcrbMinimum,
}

impl SerUpperBound {
    pub fn slack(&self) -> f64 {
        self.bound - self.ser_bcrb
    }
}

/// Computable upper bound on the estimation rate of the BCRB-optimal
/// waveform.
///
/// Fails with [`Error::NumericalFailure`] if `R_E(BCRB) > bound + tol_rel`.
pub fn ser_upper_bound(
    channel: &NonlinearChannel,
    reduction: &ChoiReduction,
    noise: &NoiseModel,
    budget: f64,
    tol: &Tolerances,
) -> Result<SerUpperBound> {
    let minimum = bcrb_min(channel, reduction, noise, budget, tol)?;
    let sigma = noise.variance();
    let bound: f64 = minimum
        .lambda_g
        .iter()
        .zip(&minimum.powers)
        .map(|(g, p)| (g * p / sigma).ln_1p())
        .sum();
    let (ser_bcrb, _) = rate_distortion(&minimum.lambda_j, minimum.bcrb, tol)?;
    if ser_bcrb > bound + tol.tol_rel * (1.0 + bound) {
        return Err(Error::NumericalFailure(format!(
            "estimation rate {ser_bcrb} exceeds its bound {bound}"
        )));
    }
    Ok(SerUpperBound {
        bound,
        ser_bcrb,
        minimum,
    })
}

/// `∫ f² S(f) df / ∫ S(f) df` by the trapezoid rule on a uniform grid.
pub fn effective_bandwidth(frequencies: &[f64], spectrum: &[f64]) -> Result<f64> {
    let n = frequencies.len();
    if spectrum.len() != n {
        return Err(Error::DimensionMismatch {
            context: "spectrum samples",
            expected: n,
            found: spectrum.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    if frequencies.iter().chain(spectrum).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    if spectrum.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidArgument(
            "spectrum samples must be non-negative".into(),
        ));
    }
    let df = (frequencies[n - 1] - frequencies[0]) / (n - 1) as f64;
    let uniform = frequencies
        .windows(2)
        .all(|w| ((w[1] - w[0]) - df).abs() <= 1e-9 * df.abs().max(f64::MIN_POSITIVE));
    if !(df > 0.0) || !uniform {
        return Err(Error::InvalidArgument(
            "frequency grid must be uniform and increasing".into(),
        ));
    }
    let trapezoid = |g: &dyn Fn(usize) -> f64| -> f64 {
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.5 * g(i)
                } else {
                    g(i)
                }
            })
            .sum::<f64>()
            * df
    };
    let energy = trapezoid(&|i| spectrum[i]);
    if !(energy > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok(trapezoid(&|i| frequencies[i] * frequencies[i] * spectrum[i]) / energy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBounds {
    pub sigma_crb_sq: f64,
    pub bcrb: f64,
    pub ser: f64,
}

/// CRB, BCRB and estimation rate of the scalar delay model. `snr = 0` is
/// the no-information limit.
pub fn delay_bounds(sigma_eta_sq: f64, b_rms_sq: f64, snr: f64) -> Result<DelayBounds> {
    if !(sigma_eta_sq.is_finite() && sigma_eta_sq > 0.0) {
        return Err(Error::NonPositiveInput("delay prior variance"));
    }
    if !(b_rms_sq.is_finite() && b_rms_sq > 0.0) {
        return Err(Error::NonPositiveInput("effective bandwidth"));
    }
    if !(snr.is_finite() && snr >= 0.0) {
        return Err(Error::NonPositiveInput("snr"));
    }
    if snr == 0.0 {
        return Ok(DelayBounds {
            sigma_crb_sq: f64::INFINITY,
            bcrb: sigma_eta_sq,
            ser: 0.0,
        });
    }
    let info = 8.0 * PI * PI * b_rms_sq * snr;
    let bcrb = 1.0 / (info + 1.0 / sigma_eta_sq);
    let ser = (sigma_eta_sq * info).ln_1p();
    let via_bcrb = (sigma_eta_sq / bcrb).ln().max(0.0);
    if (ser - via_bcrb).abs() > 1e-12 * (1.0 + ser) {
        return Err(Error::NumericalFailure(format!(
            "delay rate forms disagree: {ser} vs {via_bcrb}"
        )));
    }
    Ok(DelayBounds {
        sigma_crb_sq: 1.0 / info,
        bcrb,
        ser,
    })
}

/// `ln(1 + σ²_η / σ²_CRB)` with `σ²_CRB = 1/(8π² B²_rms SNR)`.
pub fn delay_ser(sigma_eta_sq: f64, b_rms_sq: f64, snr: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::NonPositiveInput("snr"));
    }
    Ok(delay_bounds(sigma_eta_sq, b_rms_sq, snr)?.ser)
}

/// Linearized delay model as a constant-Jacobian channel: with unit noise
/// and unit budget, `G^H G = 1/σ²_CRB`.
pub fn delay_channel(
    sigma_eta_sq: f64,
    b_rms_sq: f64,
    snr: f64,
    tol: &Tolerances,
) -> Result<NonlinearChannel> {
    let bounds = delay_bounds(sigma_eta_sq, b_rms_sq, snr)?;
    let prior = GaussianPrior::from_variances(&[sigma_eta_sq], tol)?;
    let g = (1.0 / bounds.sigma_crb_sq).sqrt();
    NonlinearChannel::linear(CMatrix::from_element(1, 1, C64::new(g, 0.0)), &prior, tol)
}

/// `max |G^H R G - F^H R F|` over a few Hermitian probes `R`, used to
/// check that a reduction reproduces a constant Jacobian up to phase.
pub fn reduction_mismatch(reduction: &ChoiReduction, f: &CMatrix, probes: &[CMatrix]) -> f64 {
    probes
        .iter()
        .map(|r| {
            let a = reduction.g.adjoint() * r * &reduction.g;
            let b = f.adjoint() * r * f;
            (a - b).iter().fold(0.0_f64, |m, z| m.max(z.norm()))
        })
        .fold(0.0, f64::max)
}
