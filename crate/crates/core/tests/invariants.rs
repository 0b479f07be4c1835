use proptest::prelude::*;

use sensing_rate::bcrb::{choi_reduce, delay_bounds, ser_upper_bound, NonlinearChannel};
use sensing_rate::glm::{glm_optimal_waveform, glm_ser};
use sensing_rate::random::{random_covariance, random_gaussian_matrix};
use sensing_rate::semiglm::{lemma1_check, semiglm_analyze, SemiGlmProblem};
use sensing_rate::{
    rate_distortion, waterfill_direct, waterfill_inverse, waterfill_weighted, CMatrix,
    GaussianPrior, NoiseModel, Tolerances, WaveformGram, C64,
};

fn prior(m: usize, seed: u64) -> GaussianPrior {
    GaussianPrior::from_covariance(
        &random_covariance(m, 2 * m + 1, seed),
        &Tolerances::default(),
    )
    .unwrap()
}

fn floors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..5.0, 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn direct_waterfill_kkt(f in floors(), budget in 0.0f64..20.0) {
        let t = Tolerances::default();
        let a = waterfill_direct(&f, budget, &t).unwrap();
        let used: f64 = a.levels.iter().sum();
        prop_assert!((used - budget).abs() <= 1e-12 * (1.0 + budget));
        for (p, fl) in a.levels.iter().zip(&f) {
            prop_assert!(*p >= 0.0);
            if *p > 0.0 {
                prop_assert!((p + fl - a.water_level).abs() <= 1e-12 * (1.0 + a.water_level));
            } else {
                prop_assert!(*fl >= a.water_level - 1e-12 * (1.0 + a.water_level));
            }
        }
    }

    #[test]
    fn weighted_waterfill_uses_budget(
        pairs in prop::collection::vec((0.01f64..5.0, 0.05f64..3.0), 1..10),
        budget in 0.01f64..20.0,
    ) {
        let t = Tolerances::default();
        let (f, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = waterfill_weighted(&f, &w, budget, &t).unwrap();
        let used: f64 = a.levels.iter().sum();
        prop_assert!((used - budget).abs() <= 1e-12 * (1.0 + budget));
        for i in 0..f.len() {
            let expect = (w[i] * a.water_level - f[i]).max(0.0);
            prop_assert!((a.levels[i] - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }

    #[test]
    fn inverse_waterfill_closes(v in floors(), frac in 0.001f64..1.0) {
        let t = Tolerances::default();
        let d = frac * v.iter().sum::<f64>();
        let a = waterfill_inverse(&v, d, &t).unwrap();
        prop_assert!((a.levels.iter().sum::<f64>() - d).abs() <= 1e-12 * (1.0 + d));
        prop_assert!(a.levels.iter().zip(&v).all(|(l, s)| *l <= *s && *l > 0.0));
        let (rate, _) = rate_distortion(&v, d, &t).unwrap();
        prop_assert!(rate >= 0.0);
    }

    #[test]
    fn glm_bound_chain(m in 1usize..7, seed in 0u64..10_000, budget in 0.01f64..20.0, noise in 0.05f64..5.0) {
        let t = Tolerances::default();
        let p = prior(m, seed);
        let noise = NoiseModel::new(noise).unwrap();
        let w = glm_optimal_waveform(&p, &noise, budget, m, seed, &t).unwrap();
        let best = glm_ser(&p, &w.gram, &noise, &t).unwrap();
        prop_assert!((best.ser_nats - best.mi_nats).abs() <= 1e-8 * (1.0 + best.mi_nats));
        let x = random_gaussian_matrix(m + 1, m, seed ^ 0xabcd);
        let e: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let x = x * C64::new((budget / e).sqrt(), 0.0);
        let a = glm_ser(&p, &WaveformGram::from_factor(&x, budget, &t).unwrap(), &noise, &t).unwrap();
        let slack = 1e-9 * (1.0 + best.mi_nats);
        prop_assert!(a.ser_nats <= a.mi_nats + slack);
        prop_assert!(a.mi_nats <= best.mi_nats + slack);
        prop_assert!(a.mmse >= best.mmse - slack);
    }

    #[test]
    fn semiglm_ordering(m in 1usize..6, extra in 0usize..3, seed in 0u64..10_000, budget in 0.1f64..10.0) {
        let t = Tolerances::default();
        let p = prior(m, seed);
        let f = random_gaussian_matrix(m + extra, m, seed.wrapping_add(17));
        let problem = SemiGlmProblem::new(f, &p, NoiseModel::new(1.0).unwrap(), budget, &t).unwrap();
        let a = semiglm_analyze(&problem, &t).unwrap();
        let slack = 1e-9 * (1.0 + a.mi_opt);
        prop_assert!(a.ser_mi <= a.ser_mmse + slack);
        prop_assert!(a.ser_mmse <= a.mi_opt + slack);
        prop_assert!(a.mmse_opt <= a.mmse_mi_waveform + slack);
    }

    #[test]
    fn trace_inequality_slack(n in 1usize..8, seed in 0u64..10_000, shift in 0.001f64..1.0, lam in prop::collection::vec(0.01f64..10.0, 8)) {
        let t = Tolerances::default();
        let b = random_gaussian_matrix(n + 1, n, seed);
        let a = b.adjoint() * &b + CMatrix::identity(n, n) * C64::new(shift, 0.0);
        let r = lemma1_check(&a, &lam[..n], &t).unwrap();
        prop_assert!(r.slack >= -1e-10);
        prop_assert!(r.holds);
    }

    #[test]
    fn bcrb_rate_below_bound(m in 1usize..5, rows in 1usize..5, seed in 0u64..10_000, budget in 0.1f64..10.0) {
        let t = Tolerances::default();
        let p = prior(m, seed);
        let ch = NonlinearChannel::linear(random_gaussian_matrix(rows, m, seed + 3), &p, &t).unwrap();
        let red = choi_reduce(&ch, 1, 0).unwrap();
        let b = ser_upper_bound(&ch, &red, &NoiseModel::new(1.0).unwrap(), budget, &t).unwrap();
        prop_assert!(b.slack() >= -1e-9 * (1.0 + b.bound));
        prop_assert!(red.rank1_residual <= 1e-12);
    }

    #[test]
    fn delay_rate_forms_agree(var in 0.01f64..10.0, b2 in 0.01f64..100.0, log_snr in -4.0f64..4.0) {
        let d = delay_bounds(var, b2, 10f64.powf(log_snr)).unwrap();
        let lhs = (var / d.sigma_crb_sq).ln_1p();
        let rhs = (var / d.bcrb).ln().max(0.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs));
        prop_assert!(d.bcrb <= var && d.bcrb <= d.sigma_crb_sq);
    }
}
