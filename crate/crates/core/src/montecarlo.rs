//! Monte Carlo oracles for the closed forms: sample `y = X F η + z`, apply
//! the LMMSE estimator and average the squared error.
//!
//! Trial `t` always draws from substream `t` of the seed, and per-chunk
//! sums are combined in chunk order, so results are independent of the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GaussianPrior, NoiseModel};
use crate::random::{complex_normal_vector, substream};
use crate::spectrum::{hermitian_part, pd_cholesky, CMatrix, CVector, Tolerances, C64};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_trials: usize,
    pub seed: u64,
    /// When false the result carries `stderr = 0`.
    pub report_stderr: bool,
}

impl McConfig {
    pub fn new(n_trials: usize, seed: u64) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        Ok(Self {
            n_trials,
            seed,
            report_stderr: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub empirical_mmse: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

impl McResult {
    /// `|empirical - value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.empirical_mmse - value).abs() / self.stderr
    }
}

/// `A = X F`, checking that the factor has `M_h` columns.
fn effective_map(x: &CMatrix, f: &CMatrix, prior: &GaussianPrior) -> Result<CMatrix> {
    if x.ncols() != f.nrows() {
        return Err(Error::DimensionMismatch {
            context: "waveform columns vs channel rows",
            expected: f.nrows(),
            found: x.ncols(),
        });
    }
    if f.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "channel columns vs prior",
            expected: prior.dim(),
            found: f.ncols(),
        });
    }
    Ok(x * f)
}

/// One draw `(η, y)` for trial `trial`. `noise_variance` may be 0.
pub fn sample_model(
    x: &CMatrix,
    f: &CMatrix,
    prior: &GaussianPrior,
    noise_variance: f64,
    seed: u64,
    trial: u64,
) -> Result<(CVector, CVector)> {
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(Error::NonPositiveInput("noise variance"));
    }
    let a = effective_map(x, f, prior)?;
    let root = prior.covariance().sqrt();
    Ok(draw(&a, &root, noise_variance.sqrt(), seed, trial))
}

fn draw(a: &CMatrix, root: &CMatrix, noise_std: f64, seed: u64, trial: u64) -> (CVector, CVector) {
    let mut rng = substream(seed, trial);
    let eta = root * complex_normal_vector(&mut rng, root.ncols());
    let z = complex_normal_vector(&mut rng, a.nrows());
    let y = a * &eta + z * C64::new(noise_std, 0.0);
    (eta, y)
}

/// Posterior-mean estimator `η̂ = Σ A^H (A Σ A^H + σ_z² I)^{-1} y` for a
/// fixed model, with the gain precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseEstimator {
    gain: CMatrix,
}

impl LmmseEstimator {
    pub fn new(
        x: &CMatrix,
        f: &CMatrix,
        prior: &GaussianPrior,
        noise: &NoiseModel,
    ) -> Result<Self> {
        let a = effective_map(x, f, prior)?;
        Self::from_map(&a, prior, noise)
    }

    fn from_map(a: &CMatrix, prior: &GaussianPrior, noise: &NoiseModel) -> Result<Self> {
        prior.require_full_rank(&Tolerances::default())?;
        let sigma = prior.covariance_matrix();
        let a_sigma = a * &sigma;
        let n = a.nrows();
        let innovation = hermitian_part(
            &(&a_sigma * a.adjoint() + CMatrix::identity(n, n) * C64::new(noise.variance(), 0.0)),
        );
        let chol = pd_cholesky(&innovation).ok_or(Error::SingularGram)?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| {
            (lo.min(d.re), hi.max(d.re))
        });
        // squared ratio of Cholesky diagonals bounds the condition number from below
        if (lo / hi).powi(2) < 1e3 * f64::EPSILON {
            return Err(Error::SingularGram);
        }
        // K^H = C^{-1} A Σ
        let gain = chol.solve(&a_sigma).adjoint();
        Ok(Self { gain })
    }

    pub fn gain(&self) -> &CMatrix {
        &self.gain
    }

    pub fn estimate(&self, y: &CVector) -> CVector {
        &self.gain * y
    }
}

pub fn lmmse_estimate(
    y: &CVector,
    x: &CMatrix,
    f: &CMatrix,
    prior: &GaussianPrior,
    noise: &NoiseModel,
) -> Result<CVector> {
    let est = LmmseEstimator::new(x, f, prior, noise)?;
    if y.len() != est.gain.ncols() {
        return Err(Error::DimensionMismatch {
            context: "observation length",
            expected: est.gain.ncols(),
            found: y.len(),
        });
    }
    Ok(est.estimate(y))
}

/// Runs `f` on every trial index and folds the per-trial values in fixed
/// chunks, combining chunks in order.
fn chunked_sum<T, F>(n_trials: usize, zero: T, per_trial: F, add: fn(&mut T, T)) -> T
where
    T: Send + Sync + Clone,
    F: Fn(u64) -> T + Sync,
{
    let chunks: Vec<(usize, usize)> = (0..n_trials)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n_trials)))
        .collect();
    let partial: Vec<T> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut acc = zero.clone();
            for t in start..end {
                add(&mut acc, per_trial(t as u64));
            }
            acc
        })
        .collect();
    let mut total = zero;
    for p in partial {
        add(&mut total, p);
    }
    total
}

/// Mean of `‖η - η̂‖²` over `cfg.n_trials` independent draws.
pub fn empirical_mmse(
    x: &CMatrix,
    f: &CMatrix,
    prior: &GaussianPrior,
    noise: &NoiseModel,
    cfg: &McConfig,
) -> Result<McResult> {
    if cfg.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let a = effective_map(x, f, prior)?;
    let est = LmmseEstimator::from_map(&a, prior, noise)?;
    let root = prior.covariance().sqrt();
    let noise_std = noise.variance().sqrt();
    let (sum, sum_sq) = chunked_sum(
        cfg.n_trials,
        (0.0, 0.0),
        |t| {
            let (eta, y) = draw(&a, &root, noise_std, cfg.seed, t);
            let e = (eta - est.estimate(&y)).norm_squared();
            (e, e * e)
        },
        |acc, v| {
            acc.0 += v.0;
            acc.1 += v.1;
        },
    );
    let n = cfg.n_trials as f64;
    let mean = sum / n;
    let stderr = if cfg.report_stderr && cfg.n_trials > 1 {
        ((sum_sq - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(McResult {
        empirical_mmse: mean,
        stderr,
        n_trials: cfg.n_trials,
    })
}

/// Largest sample correlation magnitude between an error component
/// `η_i - η̂_i` and an observation component `y_j`. The LMMSE error is
/// uncorrelated with the data, so this shrinks like `1/√n`.
pub fn orthogonality_residual(
    x: &CMatrix,
    f: &CMatrix,
    prior: &GaussianPrior,
    noise: &NoiseModel,
    cfg: &McConfig,
) -> Result<f64> {
    let a = effective_map(x, f, prior)?;
    let est = LmmseEstimator::from_map(&a, prior, noise)?;
    let root = prior.covariance().sqrt();
    let noise_std = noise.variance().sqrt();
    let (k, n) = (prior.dim(), a.nrows());
    let zero = (CMatrix::zeros(k, n), vec![0.0; k], vec![0.0; n]);
    let (cross, e_pow, y_pow) = chunked_sum(
        cfg.n_trials,
        zero,
        |t| {
            let (eta, y) = draw(&a, &root, noise_std, cfg.seed, t);
            let e = eta - est.estimate(&y);
            let cross = &e * y.adjoint();
            let ep = e.iter().map(|z| z.norm_sqr()).collect();
            let yp = y.iter().map(|z| z.norm_sqr()).collect();
            (cross, ep, yp)
        },
        |acc, v| {
            acc.0 += v.0;
            acc.1.iter_mut().zip(v.1).for_each(|(a, b)| *a += b);
            acc.2.iter_mut().zip(v.2).for_each(|(a, b)| *a += b);
        },
    );
    let mut worst = 0.0_f64;
    for i in 0..k {
        for j in 0..n {
            let denom = (e_pow[i] * y_pow[j]).sqrt();
            if denom > 0.0 {
                worst = worst.max(cross[(i, j)].norm() / denom);
            }
        }
    }
    Ok(worst)
}
