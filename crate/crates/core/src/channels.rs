//! Concrete sensing channels: collocated MIMO radar with a uniform linear
//! array, and a time/frequency-selective OFDM channel impulse response.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::bcrb::{HMap, Jacobian, JacobianMap, NonlinearChannel, RVector};
use crate::error::{Error, Result};
use crate::model::GaussianPrior;
use crate::spectrum::{CMatrix, CVector, Tolerances, C64};

/// Point targets seen by a collocated MIMO radar.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoRadarScene {
    pub alphas: Vec<C64>,
    /// Radians, in `(-π/2, π/2)`.
    pub thetas: Vec<f64>,
    pub m_t: usize,
    pub m_r: usize,
    /// In wavelengths.
    pub element_spacing: f64,
}

impl MimoRadarScene {
    /// Half-wavelength array.
    pub fn new(alphas: Vec<C64>, thetas: Vec<f64>, m_t: usize, m_r: usize) -> Result<Self> {
        let scene = Self {
            alphas,
            thetas,
            m_t,
            m_r,
            element_spacing: 0.5,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.len() != self.thetas.len() {
            return Err(Error::DimensionMismatch {
                context: "target gains vs angles",
                expected: self.thetas.len(),
                found: self.alphas.len(),
            });
        }
        if self.m_t == 0 || self.m_r == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(t) = self.thetas.iter().find(|t| !(t.abs() < FRAC_PI_2)) {
            return Err(Error::InvalidArgument(format!(
                "target angle {t} outside (-pi/2, pi/2)"
            )));
        }
        if !(self.element_spacing.is_finite() && self.element_spacing > 0.0) {
            return Err(Error::NonPositiveInput("element spacing"));
        }
        Ok(())
    }

    pub fn targets(&self) -> usize {
        self.thetas.len()
    }

    /// `[θ_1..θ_L, Re α_1..Re α_L, Im α_1..Im α_L]`.
    pub fn eta(&self) -> RVector {
        let l = self.targets();
        RVector::from_fn(3 * l, |i, _| match i / l.max(1) {
            0 => self.thetas[i],
            1 => self.alphas[i - l].re,
            _ => self.alphas[i - 2 * l].im,
        })
    }

    /// Same array, targets taken from a parameter vector laid out as
    /// [`MimoRadarScene::eta`].
    pub fn with_eta(&self, eta: &RVector) -> Self {
        let l = self.targets();
        Self {
            thetas: (0..l).map(|i| eta[i]).collect(),
            alphas: (0..l)
                .map(|i| C64::new(eta[l + i], eta[2 * l + i]))
                .collect(),
            ..self.clone()
        }
    }

    fn phase(&self, k: f64, theta: f64) -> C64 {
        C64::from_polar(1.0, 2.0 * PI * self.element_spacing * k * theta.sin())
    }
}

/// Receive steering vector `a(θ)`; element 0 is the phase reference.
pub fn steering_vector(n: usize, spacing: f64, theta: f64) -> CVector {
    CVector::from_fn(n, |k, _| {
        C64::from_polar(1.0, 2.0 * PI * spacing * k as f64 * theta.sin())
    })
}

/// `H = Σ α_l a(θ_l) b(θ_l)^H`, `M_r × M_t`.
pub fn mimo_channel(scene: &MimoRadarScene) -> Result<CMatrix> {
    scene.validate()?;
    let mut h = CMatrix::zeros(scene.m_r, scene.m_t);
    for (alpha, &theta) in scene.alphas.iter().zip(&scene.thetas) {
        let a = steering_vector(scene.m_r, scene.element_spacing, theta);
        let b = steering_vector(scene.m_t, scene.element_spacing, theta);
        h += (a * b.adjoint()) * *alpha;
    }
    Ok(h)
}

/// Jacobian of `vec(H)` (column-major) with respect to
/// [`MimoRadarScene::eta`], `M_r M_t × 3L`.
pub fn mimo_jacobian(scene: &MimoRadarScene) -> Result<CMatrix> {
    scene.validate()?;
    let l = scene.targets();
    let (m_r, m_t) = (scene.m_r, scene.m_t);
    let mut j = CMatrix::zeros(m_r * m_t, 3 * l);
    for (i, (alpha, &theta)) in scene.alphas.iter().zip(&scene.thetas).enumerate() {
        for t in 0..m_t {
            for r in 0..m_r {
                let k = r as f64 - t as f64;
                let e = scene.phase(k, theta);
                let row = t * m_r + r;
                let dphase = C64::new(0.0, 2.0 * PI * scene.element_spacing * k * theta.cos());
                j[(row, i)] = alpha * dphase * e;
                j[(row, l + i)] = e;
                j[(row, 2 * l + i)] = C64::new(0.0, 1.0) * e;
            }
        }
    }
    Ok(j)
}

/// `η ↦ vec(H(η))` as a nonlinear channel with the analytic Jacobian. The
/// prior is centred on the scene's own parameters.
pub fn mimo_nonlinear_channel(
    scene: &MimoRadarScene,
    prior: &GaussianPrior,
    tol: &Tolerances,
) -> Result<NonlinearChannel> {
    scene.validate()?;
    let base = scene.clone();
    let h: HMap = {
        let base = base.clone();
        Arc::new(move |eta: &RVector| {
            let s = base.with_eta(eta);
            let m = mimo_channel(&s).unwrap_or_else(|_| nan_matrix(s.m_r, s.m_t));
            CVector::from_column_slice(m.as_slice())
        })
    };
    let jac: JacobianMap = Arc::new(move |eta: &RVector| {
        let s = base.with_eta(eta);
        mimo_jacobian(&s).unwrap_or_else(|_| nan_matrix(s.m_r * s.m_t, 3 * s.targets()))
    });
    NonlinearChannel::new(h, Jacobian::Analytic(jac), prior, scene.eta(), tol)
}

fn nan_matrix(r: usize, c: usize) -> CMatrix {
    CMatrix::from_element(r, c, C64::new(f64::NAN, f64::NAN))
}

/// Multipath channel with integer delays and per-path Doppler.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmScene {
    pub n: usize,
    pub path_gains: Vec<C64>,
    /// Samples, distinct, `0 ≤ τ < N`.
    pub delays: Vec<usize>,
    /// Cycles per sample.
    pub dopplers: Vec<f64>,
}

impl OfdmScene {
    pub fn new(
        n: usize,
        path_gains: Vec<C64>,
        delays: Vec<usize>,
        dopplers: Vec<f64>,
    ) -> Result<Self> {
        let scene = Self {
            n,
            path_gains,
            delays,
            dopplers,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.delays.len();
        if self.path_gains.len() != l || self.dopplers.len() != l {
            return Err(Error::DimensionMismatch {
                context: "path parameters",
                expected: l,
                found: self.path_gains.len().min(self.dopplers.len()),
            });
        }
        if self.n == 0 {
            return Err(Error::EmptyInput);
        }
        if l > self.n {
            return Err(Error::InvalidArgument(format!(
                "{l} paths exceed {} subcarriers",
                self.n
            )));
        }
        for (i, &d) in self.delays.iter().enumerate() {
            if d >= self.n {
                return Err(Error::DelayOutOfRange {
                    delay: d,
                    n: self.n,
                });
            }
            if self.delays[..i].contains(&d) {
                return Err(Error::DuplicateDelay(d));
            }
        }
        if self.dopplers.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("doppler"));
        }
        Ok(())
    }
}

/// `N × N` time-varying circulant: entry `(n, (n - τ_i) mod N)` accumulates
/// `α_i e^{j2π f_{D_i} n}`.
pub fn ofdm_cir(scene: &OfdmScene) -> Result<CMatrix> {
    scene.validate()?;
    let n = scene.n;
    let mut h = CMatrix::zeros(n, n);
    for ((alpha, &tau), &fd) in scene
        .path_gains
        .iter()
        .zip(&scene.delays)
        .zip(&scene.dopplers)
    {
        for row in 0..n {
            let col = (row + n - tau) % n;
            h[(row, col)] += alpha * C64::from_polar(1.0, 2.0 * PI * fd * row as f64);
        }
    }
    Ok(h)
}
