//! SNR sweeps for the three models and their CSV tables.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use sensing_rate::bcrb::delay_bounds;
use sensing_rate::glm::{glm_optimal_waveform, glm_ser};
use sensing_rate::montecarlo::{empirical_mmse, McConfig};
use sensing_rate::random::{
    random_covariance, random_gaussian_matrix, random_orthonormal_columns, random_unitary,
    substream,
};
use sensing_rate::semiglm::{semiglm_analyze, SemiGlmProblem};
use sensing_rate::{CMatrix, GaussianPrior, NoiseModel, Tolerances, WaveformGram, C64};

use crate::config::{ExperimentConfig, FMode, LogBase, Model};
use crate::RunError;

/// Independent seed for a named purpose, so changing one draw never shifts
/// another.
pub fn sub_seed(seed: u64, purpose: u64) -> u64 {
    substream(seed, purpose).next_u64()
}

const PRIOR: u64 = 1;
const ARBITRARY: u64 = 2;
const LEFT: u64 = 3;
const SINGULAR: u64 = 4;
const RIGHT: u64 = 5;
const PHI: u64 = 6;
const MONTE_CARLO: u64 = 7;

/// `10^(dB/10)`, with `-inf` mapping to 0.
pub fn db_to_linear(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

/// Noise variance giving `SNR = budget / (M σ_z²)`; the configured value is
/// used when the budget is zero.
pub fn noise_for_snr(cfg: &ExperimentConfig, snr_db: f64) -> f64 {
    let budget = cfg.budget();
    if budget > 0.0 {
        budget / (cfg.m as f64 * db_to_linear(snr_db))
    } else {
        cfg.sigma_z_sq
    }
}

/// Seeded prior `B^H B / T` with `B` a `T × M` Gaussian matrix.
pub fn seeded_prior(cfg: &ExperimentConfig, tol: &Tolerances) -> Result<GaussianPrior, RunError> {
    let cov = random_covariance(cfg.m, cfg.t, sub_seed(cfg.seed, PRIOR));
    GaussianPrior::from_covariance(&cov, tol).map_err(|e| {
        RunError::Config(format!(
            "seeded prior is singular ({e}); increase t to at least m"
        ))
    })
}

/// Seeded `T × M` Gaussian waveform scaled to use the whole budget.
pub fn arbitrary_waveform(cfg: &ExperimentConfig) -> CMatrix {
    let x = random_gaussian_matrix(cfg.t, cfg.m, sub_seed(cfg.seed, ARBITRARY));
    let energy: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    if cfg.budget() > 0.0 {
        x * C64::new((cfg.budget() / energy).sqrt(), 0.0)
    } else {
        CMatrix::zeros(cfg.t, cfg.m)
    }
}

fn numerical(row: usize) -> impl Fn(sensing_rate::Error) -> RunError {
    move |source| RunError::Numerical {
        row: Some(row),
        source,
    }
}

fn violation(row: usize, detail: String) -> RunError {
    RunError::Invariant {
        row: Some(row),
        detail,
    }
}

/// Runs grid points concurrently and returns them in grid order; the first
/// failing row (in grid order) is reported.
fn run_grid<T: Send>(
    n: usize,
    point: impl Fn(usize) -> Result<T, RunError> + Sync + Send,
) -> Result<Vec<T>, RunError> {
    let results: Vec<Result<T, RunError>> = (0..n).into_par_iter().map(point).collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMmse {
    pub mmse: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmRecord {
    pub snr_db: f64,
    pub sigma_z_sq: f64,
    pub mi: f64,
    pub mmse: f64,
    pub ser: f64,
    pub gap: f64,
    pub mi_arbitrary: f64,
    pub mmse_arbitrary: f64,
    pub ser_arbitrary: f64,
    pub gap_arbitrary: f64,
    pub empirical: Option<EmpiricalMmse>,
}

pub fn run_glm_sweep(cfg: &ExperimentConfig) -> Result<Vec<GlmRecord>, RunError> {
    expect_model(cfg, Model::Glm)?;
    let tol = Tolerances::default();
    let prior = seeded_prior(cfg, &tol)?;
    let budget = cfg.budget();
    let x_arb = arbitrary_waveform(cfg);
    let arb_gram = WaveformGram::from_factor(&x_arb, budget, &tol).map_err(numerical(0))?;
    run_grid(cfg.snr_grid_db.len(), |row| {
        let snr_db = cfg.snr_grid_db[row];
        let sigma = noise_for_snr(cfg, snr_db);
        let err = numerical(row);
        let noise = NoiseModel::new(sigma).map_err(&err)?;
        let w = glm_optimal_waveform(&prior, &noise, budget, cfg.t, sub_seed(cfg.seed, PHI), &tol)
            .map_err(&err)?;
        let opt = glm_ser(&prior, &w.gram, &noise, &tol).map_err(&err)?;
        let arb = glm_ser(&prior, &arb_gram, &noise, &tol).map_err(&err)?;
        let empirical = if cfg.mc_trials > 0 {
            let mc = McConfig::new(cfg.mc_trials, sub_seed(cfg.seed, MONTE_CARLO) ^ row as u64)
                .map_err(&err)?;
            let id = CMatrix::identity(cfg.m, cfg.m);
            let r = empirical_mmse(&w.factor, &id, &prior, &noise, &mc).map_err(&err)?;
            Some(EmpiricalMmse {
                mmse: r.empirical_mmse,
                stderr: r.stderr,
            })
        } else {
            None
        };
        let rec = GlmRecord {
            snr_db,
            sigma_z_sq: sigma,
            mi: opt.mi_nats,
            mmse: opt.mmse,
            ser: opt.ser_nats,
            gap: opt.gap(),
            mi_arbitrary: arb.mi_nats,
            mmse_arbitrary: arb.mmse,
            ser_arbitrary: arb.ser_nats,
            gap_arbitrary: arb.gap(),
            empirical,
        };
        check_glm_row(row, &rec, &tol)?;
        Ok(rec)
    })
}

fn check_glm_row(row: usize, r: &GlmRecord, tol: &Tolerances) -> Result<(), RunError> {
    let e = tol.tol_rel * (1.0 + r.mi);
    if (r.ser - r.mi).abs() > 1e-8 * (1.0 + r.mi) {
        return Err(violation(
            row,
            format!("optimal waveform: ser {} differs from mi {}", r.ser, r.mi),
        ));
    }
    if r.ser_arbitrary > r.mi_arbitrary + e || r.mi_arbitrary > r.mi + e {
        return Err(violation(
            row,
            format!(
                "bound chain: ser {} <= mi {} <= mi* {} violated",
                r.ser_arbitrary, r.mi_arbitrary, r.mi
            ),
        ));
    }
    Ok(())
}

/// Channel map for the semi-controllable sweep, `M_h × M`.
pub fn build_channel(cfg: &ExperimentConfig, prior: &GaussianPrior) -> Result<CMatrix, RunError> {
    let (m, m_h) = (cfg.m, cfg.channel_rows());
    if cfg.f_mode == FMode::Identity {
        if m_h != m {
            return Err(RunError::Config("f_mode = identity needs m_h = m".into()));
        }
        return Ok(CMatrix::identity(m, m));
    }
    let k = m.min(m_h);
    let left = random_orthonormal_columns(m_h, k, sub_seed(cfg.seed, LEFT));
    let mut s: Vec<f64> = match cfg.f_mode {
        FMode::EqualEigsAligned => vec![1.0; k],
        _ => {
            let mut rng = substream(sub_seed(cfg.seed, SINGULAR), 0);
            (0..k).map(|_| rng.random_range(0.5..2.0)).collect()
        }
    };
    s.sort_by(|a, b| b.total_cmp(a));
    let right_full = match cfg.f_mode {
        FMode::RandomEigsRandomUr => random_unitary(m, sub_seed(cfg.seed, RIGHT)),
        _ => prior.covariance().eigenvectors().clone(),
    };
    let right = right_full.columns(0, k).into_owned();
    sensing_rate::semiglm::channel_from_svd(&left, &s, &right).map_err(|e| RunError::Numerical {
        row: None,
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiGlmRecord {
    pub snr_db: f64,
    pub sigma_z_sq: f64,
    pub mi_opt: f64,
    pub mmse_mi_waveform: f64,
    pub mmse_opt: f64,
    pub mmse_bound: f64,
    pub ser_mi: f64,
    pub ser_mmse: f64,
    pub gap: f64,
    pub mmse_source: &'static str,
    pub alignment_residual: f64,
    pub singular_spread: f64,
    pub certificate_pass: bool,
    pub empirical: Option<EmpiricalMmse>,
}

pub fn run_semiglm_sweep(cfg: &ExperimentConfig) -> Result<Vec<SemiGlmRecord>, RunError> {
    expect_model(cfg, Model::Semiglm)?;
    let tol = Tolerances::default();
    let prior = seeded_prior(cfg, &tol)?;
    let f = build_channel(cfg, &prior)?;
    let budget = cfg.budget();
    run_grid(cfg.snr_grid_db.len(), |row| {
        let snr_db = cfg.snr_grid_db[row];
        let sigma = noise_for_snr(cfg, snr_db);
        let err = numerical(row);
        let noise = NoiseModel::new(sigma).map_err(&err)?;
        let problem = SemiGlmProblem::new(f.clone(), &prior, noise, budget, &tol)
            .map_err(&err)?
            .with_factor_rows(cfg.t);
        let a = semiglm_analyze(&problem, &tol).map_err(&err)?;
        let empirical = if cfg.mc_trials > 0 {
            let mc = McConfig::new(cfg.mc_trials, sub_seed(cfg.seed, MONTE_CARLO) ^ row as u64)
                .map_err(&err)?;
            let x = a
                .mi_waveform
                .factor(sub_seed(cfg.seed, PHI))
                .map_err(&err)?;
            let r = empirical_mmse(&x, &f, &prior, &noise, &mc).map_err(&err)?;
            Some(EmpiricalMmse {
                mmse: r.empirical_mmse,
                stderr: r.stderr,
            })
        } else {
            None
        };
        let rec = SemiGlmRecord {
            snr_db,
            sigma_z_sq: sigma,
            mi_opt: a.mi_opt,
            mmse_mi_waveform: a.mmse_mi_waveform,
            mmse_opt: a.mmse_opt,
            mmse_bound: a.mmse_bound,
            ser_mi: a.ser_mi,
            ser_mmse: a.ser_mmse,
            gap: a.gap(),
            mmse_source: a.mmse_source.as_str(),
            alignment_residual: a.equality_certificate.alignment_residual,
            singular_spread: a.equality_certificate.singular_spread,
            certificate_pass: a.equality_certificate.passed,
            empirical,
        };
        check_semiglm_row(row, &rec, &tol)?;
        Ok(rec)
    })
}

fn check_semiglm_row(row: usize, r: &SemiGlmRecord, tol: &Tolerances) -> Result<(), RunError> {
    let e = tol.tol_rel * (1.0 + r.mi_opt);
    if r.ser_mi > r.ser_mmse + e || r.ser_mmse > r.mi_opt + e {
        return Err(violation(
            row,
            format!(
                "ordering ser_mi {} <= ser_mmse {} <= mi_opt {} violated",
                r.ser_mi, r.ser_mmse, r.mi_opt
            ),
        ));
    }
    if r.certificate_pass && (r.ser_mmse - r.mi_opt).abs() > 1e-7 * (1.0 + r.mi_opt) {
        return Err(violation(
            row,
            format!(
                "certificate passed but ser_mmse {} differs from mi_opt {}",
                r.ser_mmse, r.mi_opt
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRecord {
    pub snr_db: f64,
    pub b_rms_sq: f64,
    pub sigma_crb_sq: f64,
    pub bcrb: f64,
    pub ser: f64,
}

/// Rows in SNR-major order over `snr_grid_db × b_rms_sq_grid`; SNR is the
/// per-observation linear SNR in dB and `-inf` gives the no-information row.
pub fn run_delay_sweep(cfg: &ExperimentConfig) -> Result<Vec<DelayRecord>, RunError> {
    expect_model(cfg, Model::Delay)?;
    let nb = cfg.b_rms_sq_grid.len();
    run_grid(cfg.snr_grid_db.len() * nb, |row| {
        let snr_db = cfg.snr_grid_db[row / nb];
        let b = cfg.b_rms_sq_grid[row % nb];
        let d = delay_bounds(cfg.sigma_eta_sq, b, db_to_linear(snr_db)).map_err(numerical(row))?;
        let direct = (cfg.sigma_eta_sq / d.bcrb).ln().max(0.0);
        if (d.ser - direct).abs() > 1e-12 * (1.0 + d.ser) {
            return Err(violation(
                row,
                format!("rate {} differs from log(σ²/BCRB) {}", d.ser, direct),
            ));
        }
        Ok(DelayRecord {
            snr_db,
            b_rms_sq: b,
            sigma_crb_sq: d.sigma_crb_sq,
            bcrb: d.bcrb,
            ser: d.ser,
        })
    })
}

fn expect_model(cfg: &ExperimentConfig, model: Model) -> Result<(), RunError> {
    cfg.validate()?;
    if cfg.model != model {
        return Err(RunError::Config(format!(
            "config model is '{}', expected '{model}'",
            cfg.model
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: &'static str,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Flag(bool),
    Label(&'static str),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.12e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Flag(b) => (if *b { "true" } else { "false" }).to_string(),
            Cell::Label(s) => s.to_string(),
        }
    }
}

/// Header plus rows, ready for CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(spec: &[(&'static str, &str)]) -> Self {
        Self {
            columns: spec
                .iter()
                .map(|(name, unit)| Column {
                    name,
                    unit: unit.to_string(),
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
            w.write_record(self.columns.iter().map(|c| c.name))?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).expect("writing to memory");
        String::from_utf8(w.into_inner().expect("in-memory buffer")).expect("csv output is utf-8")
    }
}

pub fn glm_table(records: &[GlmRecord], base: LogBase) -> Table {
    let r = base.unit();
    let with_mc = records.iter().any(|x| x.empirical.is_some());
    let mut spec = vec![
        ("snr_db", "dB"),
        ("sigma_z_sq", "power"),
        ("mi", r),
        ("mmse", "variance"),
        ("ser", r),
        ("gap", r),
        ("mi_arbitrary", r),
        ("mmse_arbitrary", "variance"),
        ("ser_arbitrary", r),
        ("gap_arbitrary", r),
    ];
    if with_mc {
        spec.extend([
            ("mmse_empirical", "variance"),
            ("mmse_empirical_stderr", "variance"),
        ]);
    }
    let mut t = Table::new(&spec);
    for x in records {
        let mut row = vec![
            Cell::Num(x.snr_db),
            Cell::Num(x.sigma_z_sq),
            Cell::Num(base.convert(x.mi)),
            Cell::Num(x.mmse),
            Cell::Num(base.convert(x.ser)),
            Cell::Num(base.convert(x.gap)),
            Cell::Num(base.convert(x.mi_arbitrary)),
            Cell::Num(x.mmse_arbitrary),
            Cell::Num(base.convert(x.ser_arbitrary)),
            Cell::Num(base.convert(x.gap_arbitrary)),
        ];
        if let Some(e) = x.empirical {
            row.extend([Cell::Num(e.mmse), Cell::Num(e.stderr)]);
        }
        t.rows.push(row);
    }
    t
}

pub fn semiglm_table(records: &[SemiGlmRecord], base: LogBase) -> Table {
    let r = base.unit();
    let with_mc = records.iter().any(|x| x.empirical.is_some());
    let mut spec = vec![
        ("snr_db", "dB"),
        ("sigma_z_sq", "power"),
        ("mi_opt", r),
        ("mmse_mi_waveform", "variance"),
        ("mmse_opt", "variance"),
        ("mmse_bound", "variance"),
        ("ser_mi", r),
        ("ser_mmse", r),
        ("gap", r),
        ("mmse_source", "label"),
        ("alignment_residual", "ratio"),
        ("singular_spread", "ratio"),
        ("certificate_pass", "bool"),
    ];
    if with_mc {
        spec.extend([
            ("mmse_empirical_mi_waveform", "variance"),
            ("mmse_empirical_stderr", "variance"),
        ]);
    }
    let mut t = Table::new(&spec);
    for x in records {
        let mut row = vec![
            Cell::Num(x.snr_db),
            Cell::Num(x.sigma_z_sq),
            Cell::Num(base.convert(x.mi_opt)),
            Cell::Num(x.mmse_mi_waveform),
            Cell::Num(x.mmse_opt),
            Cell::Num(x.mmse_bound),
            Cell::Num(base.convert(x.ser_mi)),
            Cell::Num(base.convert(x.ser_mmse)),
            Cell::Num(base.convert(x.gap)),
            Cell::Label(x.mmse_source),
            Cell::Num(x.alignment_residual),
            Cell::Num(x.singular_spread),
            Cell::Flag(x.certificate_pass),
        ];
        if let Some(e) = x.empirical {
            row.extend([Cell::Num(e.mmse), Cell::Num(e.stderr)]);
        }
        t.rows.push(row);
    }
    t
}

pub fn delay_table(records: &[DelayRecord], base: LogBase) -> Table {
    let mut t = Table::new(&[
        ("snr_db", "dB"),
        ("b_rms_sq", "Hz^2"),
        ("sigma_crb_sq", "s^2"),
        ("bcrb", "s^2"),
        ("ser", base.unit()),
    ]);
    for x in records {
        t.rows.push(vec![
            Cell::Num(x.snr_db),
            Cell::Num(x.b_rms_sq),
            Cell::Num(x.sigma_crb_sq),
            Cell::Num(x.bcrb),
            Cell::Num(base.convert(x.ser)),
        ]);
    }
    t
}
