//! Water-filling solvers.
//!
//! * [`waterfill_direct`]: `p_i = (λ - f_i)⁺` with `Σ p_i = P`, the
//!   MI-maximizing power split over parallel Gaussian modes.
//! * [`waterfill_weighted`]: `p_i = (a_i μ - f_i)⁺`, the minimizer of
//!   `Σ σ²_i / (c_i p_i + 1)` when `a_i = sqrt(σ²_i / c_i)`, `f_i = 1/c_i`.
//! * [`waterfill_inverse`]: reverse water-filling `D_i = min(ξ, σ²_i)` with
//!   `Σ D_i = D`, the Gaussian rate-distortion allocation.

use crate::error::{Error, Result};
use crate::spectrum::Tolerances;

/// Per-mode levels together with the water level that produced them.
///
/// For the direct and weighted solvers `levels` are powers and
/// `water_level` is `λ` (resp. `μ`); for the inverse solver `levels` are
/// per-mode distortions and `water_level` is `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillAllocation {
    pub levels: Vec<f64>,
    pub water_level: f64,
    pub budget_used: f64,
}

impl WaterfillAllocation {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Indices of modes receiving strictly positive level.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::NegativeBudget(budget));
    }
    if !budget.is_finite() {
        return Err(Error::NonFinite("budget"));
    }
    Ok(())
}

fn check_floors(floors: &[f64]) -> Result<()> {
    if floors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if floors.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("noise floors"));
    }
    if floors.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidArgument(
            "noise floors must be non-negative".into(),
        ));
    }
    Ok(())
}

/// Classic water-filling: `levels_i = (λ - floors_i)⁺` with
/// `Σ levels = budget`.
///
/// Solved exactly by sorting the floors and walking the piecewise-linear
/// budget curve.
pub fn waterfill_direct(
    floors: &[f64],
    budget: f64,
    tol: &Tolerances,
) -> Result<WaterfillAllocation> {
    check_floors(floors)?;
    check_budget(budget)?;
    tol.validate()?;
    let mut sorted = floors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut prefix = 0.0;
    let mut level = sorted[0];
    for k in 1..=n {
        prefix += sorted[k - 1];
        level = (budget + prefix) / k as f64;
        if k == n || level <= sorted[k] {
            break;
        }
    }
    let levels: Vec<f64> = floors.iter().map(|&f| (level - f).max(0.0)).collect();
    let budget_used = levels.iter().sum();
    Ok(WaterfillAllocation {
        levels,
        water_level: level,
        budget_used,
    })
}

/// Weighted water-filling: `levels_i = (weights_i · μ - floors_i)⁺` with
/// `Σ levels = budget`. Modes with zero weight are switched off.
///
/// Solved exactly by sorting the activation thresholds `floors_i / weights_i`.
pub fn waterfill_weighted(
    floors: &[f64],
    weights: &[f64],
    budget: f64,
    tol: &Tolerances,
) -> Result<WaterfillAllocation> {
    check_floors(floors)?;
    check_budget(budget)?;
    tol.validate()?;
    if weights.len() != floors.len() {
        return Err(Error::DimensionMismatch {
            context: "water-filling weights",
            expected: floors.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    let enabled: Vec<usize> = (0..floors.len()).filter(|&i| weights[i] > 0.0).collect();
    if enabled.is_empty() {
        return Err(Error::AllModesDisabled);
    }

    // walk the sorted activation thresholds f_i / a_i; the budget curve is
    // linear between consecutive thresholds
    let mut order = enabled.clone();
    order.sort_by(|&i, &j| (floors[i] / weights[i]).total_cmp(&(floors[j] / weights[j])));
    let threshold = |i: usize| floors[i] / weights[i];
    let mut mu = threshold(order[0]);
    if budget > 0.0 {
        let (mut weight_sum, mut floor_sum) = (0.0, 0.0);
        for (k, &i) in order.iter().enumerate() {
            weight_sum += weights[i];
            floor_sum += floors[i];
            mu = (budget + floor_sum) / weight_sum;
            if k + 1 == order.len() || mu <= threshold(order[k + 1]) {
                break;
            }
        }
    }
    let levels: Vec<f64> = (0..floors.len())
        .map(|i| {
            if weights[i] > 0.0 {
                (weights[i] * mu - floors[i]).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let budget_used = levels.iter().sum();
    Ok(WaterfillAllocation {
        levels,
        water_level: mu,
        budget_used,
    })
}

/// Reverse water-filling: `D_i = min(ξ, variances_i)` with
/// `Σ D_i = target_distortion`.
///
/// Zero-variance modes take `D_i = 0` and carry no rate.
pub fn waterfill_inverse(
    variances: &[f64],
    target_distortion: f64,
    tol: &Tolerances,
) -> Result<WaterfillAllocation> {
    if variances.is_empty() {
        return Err(Error::EmptyInput);
    }
    if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "variances must be finite and non-negative".into(),
        ));
    }
    tol.validate()?;
    let total: f64 = variances.iter().sum();
    if !(target_distortion > 0.0) || target_distortion > total * (1.0 + tol.tol_rel) {
        return Err(Error::DistortionOutOfRange {
            target: target_distortion,
            max: total,
        });
    }
    let target = target_distortion.min(total);
    let mut sorted: Vec<f64> = variances.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut saturated = 0.0;
    let mut xi = sorted[n - 1];
    for (k, &v) in sorted.iter().enumerate() {
        let candidate = (target - saturated) / (n - k) as f64;
        if candidate <= v {
            xi = candidate;
            break;
        }
        saturated += v;
    }
    let levels: Vec<f64> = variances.iter().map(|&v| v.min(xi)).collect();
    let budget_used = levels.iter().sum();
    Ok(WaterfillAllocation {
        levels,
        water_level: xi,
        budget_used,
    })
}

/// `Σ ln(σ²_i / D_i)` over modes with `D_i < σ²_i`, in nats.
pub fn rate_from_allocation(variances: &[f64], alloc: &WaterfillAllocation) -> Result<f64> {
    if variances.len() != alloc.levels.len() {
        return Err(Error::DimensionMismatch {
            context: "rate allocation",
            expected: variances.len(),
            found: alloc.levels.len(),
        });
    }
    Ok(variances
        .iter()
        .zip(&alloc.levels)
        .filter(|(&v, _)| v > 0.0)
        .map(|(&v, &d)| (v / d).ln().max(0.0))
        .sum())
}

/// Gaussian rate-distortion function `R(D)` for independent modes with the
/// given variances, together with the distortion split achieving it.
pub fn rate_distortion(
    variances: &[f64],
    distortion: f64,
    tol: &Tolerances,
) -> Result<(f64, WaterfillAllocation)> {
    let alloc = waterfill_inverse(variances, distortion, tol)?;
    let rate = rate_from_allocation(variances, &alloc)?;
    Ok((rate, alloc))
}
