use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensing_rate::{
    rate_from_allocation, waterfill_direct, waterfill_inverse, waterfill_weighted, Tolerances,
};
use sensing_rate_cli::config::{parse_grid, ExperimentConfig, LogBase, Model};
use sensing_rate_cli::manifest::{manifest_text, write_outputs};
use sensing_rate_cli::sweep::{
    delay_table, glm_table, run_delay_sweep, run_glm_sweep, run_semiglm_sweep, semiglm_table, Cell,
    Table,
};
use sensing_rate_cli::validate::run_validate;
use sensing_rate_cli::RunError;

/// Sensing estimation rate, MI, MMSE and BCRB experiments.
#[derive(Parser, Debug)]
#[command(name = "ser", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; the manifest goes to `<PATH>.manifest`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "nats|bits")]
    log_base: Option<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Grid in dB: comma list and/or start:step:stop ranges, `-inf` allowed.
    #[arg(long, allow_hyphen_values = true)]
    snr_grid: Option<String>,
    #[arg(long)]
    mc_trials: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct SemiglmArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(
        long,
        value_name = "identity|equal_eigs_aligned|random_eigs_aligned|random_eigs_random_ur"
    )]
    f_mode: Option<String>,
}

#[derive(Args, Debug)]
struct WaterfillArgs {
    #[command(flatten)]
    common: Common,
    /// Direct/weighted mode: noise floors per channel.
    #[arg(long, allow_hyphen_values = true)]
    floors: Option<String>,
    /// Weights for weighted water-filling.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    budget: Option<f64>,
    /// Inverse mode: source variances.
    #[arg(long)]
    variances: Option<String>,
    /// Inverse mode: total distortion.
    #[arg(long)]
    distortion: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter dimensions to test.
    #[arg(long, default_value = "2,4,8")]
    sizes: String,
    /// Replaces the identity-check thresholds.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal vs arbitrary waveform over an SNR grid.
    GlmSweep(SweepArgs),
    /// MI- vs MMSE-optimal waveforms with a fixed channel map.
    SemiglmSweep(SemiglmArgs),
    /// Scalar delay estimation: CRB, BCRB and rate.
    DelaySweep(SweepArgs),
    /// Direct, weighted or inverse water-filling.
    Waterfill(WaterfillArgs),
    /// Runs the invariant suite.
    Validate(ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::GlmSweep(a) => sweep(Model::Glm, &a, None),
        Command::SemiglmSweep(a) => sweep(Model::Semiglm, &a.sweep, a.f_mode.as_deref()),
        Command::DelaySweep(a) => sweep(Model::Delay, &a, None),
        Command::Waterfill(a) => waterfill(&a),
        Command::Validate(a) => validate(&a),
    }
}

fn load_config(model: Model, common: &Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(model, path)?,
        None => ExperimentConfig::defaults(model),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(base) = &common.log_base {
        cfg.log_base = base.parse()?;
    }
    Ok(cfg)
}

fn sweep(model: Model, args: &SweepArgs, f_mode: Option<&str>) -> Result<(), RunError> {
    let mut cfg = load_config(model, &args.common)?;
    if let Some(grid) = &args.snr_grid {
        cfg.snr_grid_db = parse_grid(grid)?;
    }
    if let Some(n) = args.mc_trials {
        cfg.mc_trials = n;
    }
    if let Some(mode) = f_mode {
        cfg.f_mode = mode.parse()?;
    }
    for pair in &args.set {
        cfg.apply_override(pair)?;
    }
    cfg.validate()?;
    let (name, table) = match model {
        Model::Glm => ("glm-sweep", glm_table(&run_glm_sweep(&cfg)?, cfg.log_base)),
        Model::Semiglm => (
            "semiglm-sweep",
            semiglm_table(&run_semiglm_sweep(&cfg)?, cfg.log_base),
        ),
        Model::Delay => (
            "delay-sweep",
            delay_table(&run_delay_sweep(&cfg)?, cfg.log_base),
        ),
    };
    let out = output_path(&args.common, name);
    emit(&out, name, &cfg.to_pairs(), &table, cfg.log_base, &[])
}

fn output_path(common: &Common, name: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")))
}

fn emit(
    out: &Path,
    name: &str,
    config: &[(&str, String)],
    table: &Table,
    base: LogBase,
    extra: &[(&str, String)],
) -> Result<(), RunError> {
    let csv_name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = manifest_text(name, config, table, base, &csv_name, extra);
    write_outputs(out, &table.to_csv(), &manifest)?;
    eprintln!(
        "{name}: wrote {} rows to {}",
        table.rows.len(),
        out.display()
    );
    Ok(())
}

/// Flat `key = value` file for the waterfill subcommand.
fn waterfill_file(path: &Path) -> Result<Vec<(String, String)>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for line in text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("expected 'key = value', got '{line}'")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn waterfill(args: &WaterfillArgs) -> Result<(), RunError> {
    let mut floors = None;
    let mut weights = None;
    let mut variances = None;
    let mut budget = None;
    let mut distortion = None;
    let number = |k: &str, v: &str| -> Result<f64, RunError> {
        v.parse()
            .map_err(|_| RunError::Config(format!("invalid value '{v}' for '{k}'")))
    };
    if let Some(path) = &args.common.config {
        for (k, v) in waterfill_file(path)? {
            match k.as_str() {
                "floors" => floors = Some(v),
                "weights" => weights = Some(v),
                "variances" => variances = Some(v),
                "budget" => budget = Some(number(&k, &v)?),
                "distortion" => distortion = Some(number(&k, &v)?),
                "log_base" | "seed" => {}
                other => return Err(RunError::Config(format!("unknown waterfill key '{other}'"))),
            }
        }
    }
    floors = args.floors.clone().or(floors);
    weights = args.weights.clone().or(weights);
    variances = args.variances.clone().or(variances);
    budget = args.budget.or(budget);
    distortion = args.distortion.or(distortion);
    let base: LogBase = match &args.common.log_base {
        Some(b) => b.parse()?,
        None => LogBase::Nats,
    };
    let tol = Tolerances::default();
    let numerical = |source| RunError::Numerical { row: None, source };
    let mut echo: Vec<(&str, String)> = Vec::new();
    let (mode, inputs, alloc, rate) = match (floors, variances) {
        (Some(f), None) => {
            let f = parse_grid(&f)?;
            let p = budget
                .ok_or_else(|| RunError::Config("--budget is required with --floors".into()))?;
            echo.push(("budget", p.to_string()));
            echo.push(("floors", join(&f)));
            match weights {
                Some(w) => {
                    let w = parse_grid(&w)?;
                    echo.push(("weights", join(&w)));
                    (
                        "weighted",
                        f.clone(),
                        waterfill_weighted(&f, &w, p, &tol).map_err(numerical)?,
                        None,
                    )
                }
                None => (
                    "direct",
                    f.clone(),
                    waterfill_direct(&f, p, &tol).map_err(numerical)?,
                    None,
                ),
            }
        }
        (None, Some(v)) => {
            let v = parse_grid(&v)?;
            let d = distortion.ok_or_else(|| {
                RunError::Config("--distortion is required with --variances".into())
            })?;
            echo.push(("distortion", d.to_string()));
            echo.push(("variances", join(&v)));
            let alloc = waterfill_inverse(&v, d, &tol).map_err(numerical)?;
            let rate = rate_from_allocation(&v, &alloc).map_err(numerical)?;
            ("inverse", v, alloc, Some(rate))
        }
        _ => {
            return Err(RunError::Config(
                "give either --floors (with --budget) or --variances (with --distortion)".into(),
            ))
        }
    };
    let mut table = Table {
        columns: vec![
            sensing_rate_cli::sweep::Column {
                name: "mode_index",
                unit: "index".into(),
            },
            sensing_rate_cli::sweep::Column {
                name: "input",
                unit: if mode == "inverse" {
                    "variance"
                } else {
                    "floor"
                }
                .into(),
            },
            sensing_rate_cli::sweep::Column {
                name: "level",
                unit: if mode == "inverse" {
                    "distortion"
                } else {
                    "power"
                }
                .into(),
            },
        ],
        rows: Vec::new(),
    };
    for (i, (x, l)) in inputs.iter().zip(&alloc.levels).enumerate() {
        table
            .rows
            .push(vec![Cell::Int(i), Cell::Num(*x), Cell::Num(*l)]);
    }
    let mut extra = vec![
        ("mode", mode.to_string()),
        ("water_level", format!("{:.12e}", alloc.water_level)),
        ("budget_used", format!("{:.12e}", alloc.budget_used)),
    ];
    if let Some(r) = rate {
        extra.push(("rate", format!("{:.12e}", base.convert(r))));
    }
    for (k, v) in &extra {
        println!("{k} = {v}");
    }
    let out = output_path(&args.common, "waterfill");
    emit(&out, "waterfill", &echo, &table, base, &extra)
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn validate(args: &ValidateArgs) -> Result<(), RunError> {
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| RunError::Config(format!("bad size '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let seed = args.common.seed.unwrap_or(1);
    let report = run_validate(seed, &sizes, args.tol)?;
    println!("{report}");
    if let Some(out) = &args.common.out {
        let mut table = Table {
            columns: ["check", "residual", "threshold", "passed"]
                .iter()
                .zip(["label", "ratio", "ratio", "bool"])
                .map(|(n, u)| sensing_rate_cli::sweep::Column {
                    name: n,
                    unit: u.into(),
                })
                .collect(),
            rows: Vec::new(),
        };
        for c in &report.checks {
            table.rows.push(vec![
                Cell::Label(c.name),
                Cell::Num(c.residual),
                Cell::Num(c.threshold),
                Cell::Flag(c.passed),
            ]);
        }
        let echo = vec![("seed", seed.to_string()), ("sizes", args.sizes.clone())];
        emit(out, "validate", &echo, &table, LogBase::Nats, &[])?;
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(RunError::Invariant {
            row: None,
            detail: format!("failed checks: {}", names.join(", ")),
        })
    }
}
