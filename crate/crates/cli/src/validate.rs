//! One-shot invariant suite behind `ser validate`.

use std::fmt;

use rand::Rng;

use sensing_rate::bcrb::{choi_reduce, delay_bounds, ser_upper_bound, NonlinearChannel};
use sensing_rate::glm::{glm_optimal_waveform, glm_ser};
use sensing_rate::montecarlo::{empirical_mmse, McConfig};
use sensing_rate::random::{random_covariance, random_gaussian_matrix, random_unitary, substream};
use sensing_rate::semiglm::{channel_from_svd, lemma1_check, semiglm_analyze, SemiGlmProblem};
use sensing_rate::{
    waterfill_direct, waterfill_inverse, waterfill_weighted, CMatrix, GaussianPrior, NoiseModel,
    Tolerances, WaveformGram, C64,
};

use crate::sweep::sub_seed;
use crate::RunError;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} {}  residual={:.6e}  threshold={:.3e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.residual,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

type Num = Result<f64, sensing_rate::Error>;

fn prior(m: usize, seed: u64, tol: &Tolerances) -> Result<GaussianPrior, sensing_rate::Error> {
    GaussianPrior::from_covariance(&random_covariance(m, 2 * m, seed), tol)
}

fn glm_equality(sizes: &[usize], seed: u64, tol: &Tolerances) -> Num {
    let mut worst = 0.0_f64;
    for &m in sizes {
        for k in 0..10u64 {
            let p = prior(m, sub_seed(seed, 100 + k * 31 + m as u64), tol)?;
            let noise = NoiseModel::new(1.0)?;
            for &budget in &[0.1, 1.0, 10.0] {
                let w = glm_optimal_waveform(&p, &noise, budget, m, k, tol)?;
                let a = glm_ser(&p, &w.gram, &noise, tol)?;
                worst = worst.max((a.ser_nats - a.mi_nats).abs() / (1.0 + a.mi_nats));
            }
        }
    }
    Ok(worst)
}

fn bound_chain(sizes: &[usize], seed: u64, tol: &Tolerances) -> Num {
    let mut worst = 0.0_f64;
    for &m in sizes {
        for k in 0..5u64 {
            let p = prior(m, sub_seed(seed, 200 + k * 31 + m as u64), tol)?;
            let noise = NoiseModel::new(1.0)?;
            let budget = m as f64;
            let w = glm_optimal_waveform(&p, &noise, budget, m, k, tol)?;
            let best = glm_ser(&p, &w.gram, &noise, tol)?.mi_nats;
            for j in 0..50u64 {
                let x = random_gaussian_matrix(m, m, sub_seed(seed, 10_000 + k * 1000 + j));
                let e: f64 = x.iter().map(|z| z.norm_sqr()).sum();
                let x = x * C64::new((budget / e).sqrt(), 0.0);
                let a = glm_ser(
                    &p,
                    &WaveformGram::from_factor(&x, budget, tol)?,
                    &noise,
                    tol,
                )?;
                let v = (a.ser_nats - a.mi_nats).max(a.mi_nats - best) / (1.0 + best);
                worst = worst.max(v.max(0.0));
            }
        }
    }
    Ok(worst)
}

fn semiglm_equality(sizes: &[usize], seed: u64, tol: &Tolerances) -> Num {
    let mut worst = 0.0_f64;
    for &m in sizes {
        let p = prior(m, sub_seed(seed, 300 + m as u64), tol)?;
        let u = p.covariance().eigenvectors().clone();
        let f = channel_from_svd(
            &random_unitary(m, sub_seed(seed, 301 + m as u64)),
            &vec![1.5; m],
            &u,
        )?;
        let problem = SemiGlmProblem::new(f, &p, NoiseModel::new(1.0)?, m as f64, tol)?;
        let a = semiglm_analyze(&problem, tol)?;
        worst = worst.max((a.ser_mmse - a.mi_opt).abs() / (1.0 + a.mi_opt));
    }
    Ok(worst)
}

fn semiglm_ordering(sizes: &[usize], seed: u64, tol: &Tolerances) -> Num {
    let mut worst = 0.0_f64;
    for &m in sizes {
        for k in 0..20u64 {
            let p = prior(m, sub_seed(seed, 400 + k * 31 + m as u64), tol)?;
            let f = random_gaussian_matrix(m, m, sub_seed(seed, 5_000 + k * 31 + m as u64));
            let problem = SemiGlmProblem::new(f, &p, NoiseModel::new(1.0)?, m as f64, tol)?;
            // semiglm_analyze refuses to return a violating ordering
            let a = semiglm_analyze(&problem, tol)?;
            let v = (a.ser_mi - a.ser_mmse).max(a.ser_mmse - a.mi_opt) / (1.0 + a.mi_opt);
            worst = worst.max(v.max(0.0));
        }
    }
    Ok(worst)
}

fn trace_inequality(seed: u64, tol: &Tolerances) -> Num {
    let mut rng = substream(sub_seed(seed, 500), 0);
    let mut worst = 0.0_f64;
    for k in 0..200u64 {
        let n = rng.random_range(1..=8);
        let b = random_gaussian_matrix(n + 2, n, sub_seed(seed, 6_000 + k));
        let a = b.adjoint() * &b + CMatrix::identity(n, n) * C64::new(0.05, 0.0);
        let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let r = lemma1_check(&a, &lambda, tol)?;
        worst = worst.max(-r.slack);
    }
    Ok(worst.max(0.0))
}

fn mc_oracle(m: usize, seed: u64, tol: &Tolerances) -> Num {
    let p = prior(m, sub_seed(seed, 600), tol)?;
    let noise = NoiseModel::new(0.5)?;
    let w = glm_optimal_waveform(&p, &noise, m as f64, m, 1, tol)?;
    let exact = glm_ser(&p, &w.gram, &noise, tol)?.mmse;
    let r = empirical_mmse(
        &w.factor,
        &CMatrix::identity(m, m),
        &p,
        &noise,
        &McConfig::new(20_000, sub_seed(seed, 601))?,
    )?;
    Ok(r.z_score(exact))
}

fn waterfill_closure(seed: u64, tol: &Tolerances) -> Num {
    let mut rng = substream(sub_seed(seed, 700), 0);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let floors: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let budget = rng.random_range(0.1..10.0);
        let d = waterfill_direct(&floors, budget, tol)?;
        let w = waterfill_weighted(&floors, &weights, budget, tol)?;
        let total: f64 = floors.iter().sum();
        let target = rng.random_range(0.01..1.0) * total;
        let inv = waterfill_inverse(&floors, target, tol)?;
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        worst = worst
            .max((sum(&d.levels) - budget).abs() / budget)
            .max((sum(&w.levels) - budget).abs() / budget)
            .max((sum(&inv.levels) - target).abs() / target);
    }
    Ok(worst)
}

fn delay_identity() -> Num {
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let snr = 10f64.powf(-3.0 + 6.0 * k as f64 / 49.0);
        let d = delay_bounds(0.7, 0.3, snr)?;
        let direct = (0.7 / d.bcrb).ln().max(0.0);
        worst = worst.max((d.ser - direct).abs());
    }
    Ok(worst)
}

fn bcrb_bound(sizes: &[usize], seed: u64, tol: &Tolerances) -> Num {
    let mut worst = 0.0_f64;
    for &m in sizes {
        for k in 0..10u64 {
            let p = prior(m, sub_seed(seed, 800 + k * 31 + m as u64), tol)?;
            let g = random_gaussian_matrix(m + 1, m, sub_seed(seed, 8_000 + k * 31 + m as u64));
            let ch = NonlinearChannel::linear(g, &p, tol)?;
            let red = choi_reduce(&ch, 1, 0)?;
            let b = ser_upper_bound(&ch, &red, &NoiseModel::new(1.0)?, m as f64, tol)?;
            worst = worst.max((-b.slack() / (1.0 + b.bound)).max(0.0));
        }
    }
    Ok(worst)
}

/// Runs every check. `threshold_override` replaces the identity-check
/// thresholds (not the 3-sigma Monte Carlo band).
pub fn run_validate(
    seed: u64,
    sizes: &[usize],
    threshold_override: Option<f64>,
) -> Result<ValidationReport, RunError> {
    if sizes.is_empty() || sizes.iter().any(|&m| m == 0 || m > 64) {
        return Err(RunError::Config("sizes must be between 1 and 64".into()));
    }
    if let Some(t) = threshold_override {
        if !(t.is_finite() && t >= 0.0) {
            return Err(RunError::Config(format!(
                "threshold override {t} must be non-negative"
            )));
        }
    }
    let tol = Tolerances::default();
    let thr = |default: f64| threshold_override.unwrap_or(default);
    let smallest = *sizes.iter().min().unwrap_or(&2);
    let runs: Vec<(&'static str, Num, f64)> = vec![
        (
            "glm_ser_equality",
            glm_equality(sizes, seed, &tol),
            thr(1e-8),
        ),
        ("bound_chain", bound_chain(sizes, seed, &tol), thr(1e-9)),
        (
            "semiglm_equality",
            semiglm_equality(sizes, seed, &tol),
            thr(1e-7),
        ),
        (
            "semiglm_ordering",
            semiglm_ordering(sizes, seed, &tol),
            thr(1e-9),
        ),
        ("trace_inequality", trace_inequality(seed, &tol), thr(1e-10)),
        (
            "mc_oracle_zscore",
            mc_oracle(smallest.max(2), seed, &tol),
            3.0,
        ),
        (
            "waterfill_closure",
            waterfill_closure(seed, &tol),
            thr(1e-12),
        ),
        ("delay_identity", delay_identity(), thr(1e-12)),
        ("bcrb_bound", bcrb_bound(sizes, seed, &tol), thr(1e-9)),
    ];
    let checks = runs
        .into_iter()
        .map(|(name, value, threshold)| match value {
            Ok(residual) => CheckResult {
                name,
                residual,
                threshold,
                passed: residual <= threshold,
            },
            Err(_) => CheckResult {
                name,
                residual: f64::NAN,
                threshold,
                passed: false,
            },
        })
        .collect();
    Ok(ValidationReport { checks })
}
