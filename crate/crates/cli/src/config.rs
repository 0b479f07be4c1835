//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Glm,
    Semiglm,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FMode {
    Identity,
    EqualEigsAligned,
    RandomEigsAligned,
    RandomEigsRandomUr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Nats,
    Bits,
}

impl LogBase {
    /// Converts a rate in nats.
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Self::Nats => nats,
            Self::Bits => nats / std::f64::consts::LN_2,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Nats => "nats",
            Self::Bits => "bits",
        }
    }
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = RunError;
            fn from_str(s: &str) -> Result<Self, RunError> {
                match s.trim() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(RunError::Config(format!(
                        "unknown {} '{other}' (expected one of: {})",
                        stringify!($ty),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text,)+ })
            }
        }
    };
}

keyword_enum!(Model { Glm => "glm", Semiglm => "semiglm", Delay => "delay" });
keyword_enum!(FMode {
    Identity => "identity",
    EqualEigsAligned => "equal_eigs_aligned",
    RandomEigsAligned => "random_eigs_aligned",
    RandomEigsRandomUr => "random_eigs_random_ur",
});
keyword_enum!(LogBase { Nats => "nats", Bits => "bits" });

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    /// Parameter dimension.
    pub m: usize,
    /// Waveform length (rows of `X`), also the sample count behind the
    /// seeded prior covariance.
    pub t: usize,
    /// Per-sample transmit power; the energy budget is `t · power`.
    pub power: f64,
    pub snr_grid_db: Vec<f64>,
    /// Noise variance used when the budget is zero and SNR cannot set it.
    pub sigma_z_sq: f64,
    pub seed: u64,
    pub f_mode: FMode,
    /// Rows of the channel map in the semi-controllable model (0 means `m`).
    pub m_h: usize,
    /// Monte Carlo trials per grid point; 0 disables the empirical columns.
    pub mc_trials: usize,
    pub log_base: LogBase,
    pub sigma_eta_sq: f64,
    pub b_rms_sq_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn defaults(model: Model) -> Self {
        Self {
            model,
            m: 10,
            t: 20,
            power: 1.0,
            snr_grid_db: (0..=20).map(|k| -10.0 + 2.0 * k as f64).collect(),
            sigma_z_sq: 1.0,
            seed: 1,
            f_mode: FMode::RandomEigsAligned,
            m_h: 0,
            mc_trials: 0,
            log_base: LogBase::Nats,
            sigma_eta_sq: 1.0,
            b_rms_sq_grid: vec![1.0],
        }
    }

    pub fn budget(&self) -> f64 {
        self.t as f64 * self.power
    }

    pub fn channel_rows(&self) -> usize {
        if self.m_h == 0 {
            self.m
        } else {
            self.m_h
        }
    }

    /// Reads a config file on top of the defaults for `model`.
    pub fn from_file(model: Model, path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::defaults(model);
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), RunError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                RunError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| RunError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), RunError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("override '{pair}' is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        match key {
            "model" => {
                let model: Model = value.parse()?;
                if model != self.model {
                    return Err(RunError::Config(format!(
                        "config is for model '{model}' but the subcommand runs '{}'",
                        self.model
                    )));
                }
            }
            "m" | "M" => self.m = parse_num(key, value)?,
            "t" | "T" => self.t = parse_num(key, value)?,
            "power" => self.power = parse_num(key, value)?,
            "snr_grid_db" => self.snr_grid_db = parse_grid(value)?,
            "sigma_z_sq" => self.sigma_z_sq = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "f_mode" => self.f_mode = value.parse()?,
            "m_h" => self.m_h = parse_num(key, value)?,
            "mc_trials" => self.mc_trials = parse_num(key, value)?,
            "log_base" => self.log_base = value.parse()?,
            "sigma_eta_sq" => self.sigma_eta_sq = parse_num(key, value)?,
            "b_rms_sq_grid" => self.b_rms_sq_grid = parse_grid(value)?,
            other => return Err(RunError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.m == 0 || self.t == 0 {
            return bad("m and t must be at least 1".into());
        }
        if !(self.power.is_finite() && self.power >= 0.0) {
            return bad(format!(
                "power must be finite and non-negative, got {}",
                self.power
            ));
        }
        if !(self.sigma_z_sq.is_finite() && self.sigma_z_sq > 0.0) {
            return bad(format!(
                "sigma_z_sq must be positive, got {}",
                self.sigma_z_sq
            ));
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db is empty".into());
        }
        if self
            .snr_grid_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::INFINITY)
        {
            return bad("snr_grid_db entries must be finite or -inf".into());
        }
        match self.model {
            Model::Glm | Model::Semiglm => {
                if self.budget() > 0.0 && self.snr_grid_db.iter().any(|s| s.is_infinite()) {
                    return bad("-inf SNR needs power = 0 for glm/semiglm sweeps".into());
                }
            }
            Model::Delay => {
                if !(self.sigma_eta_sq.is_finite() && self.sigma_eta_sq > 0.0) {
                    return bad("sigma_eta_sq must be positive".into());
                }
                if self.b_rms_sq_grid.is_empty()
                    || self
                        .b_rms_sq_grid
                        .iter()
                        .any(|b| !(b.is_finite() && *b > 0.0))
                {
                    return bad("b_rms_sq_grid must be a non-empty list of positive values".into());
                }
            }
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` lines; feeding them back
    /// through [`ExperimentConfig::apply_text`] reproduces `self`.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let grid = |g: &[f64]| {
            g.iter()
                .map(|v| format_grid_value(*v))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut pairs = vec![
            ("model", self.model.to_string()),
            ("m", self.m.to_string()),
            ("t", self.t.to_string()),
            ("power", self.power.to_string()),
            ("snr_grid_db", grid(&self.snr_grid_db)),
            ("sigma_z_sq", self.sigma_z_sq.to_string()),
            ("seed", self.seed.to_string()),
            ("log_base", self.log_base.to_string()),
        ];
        match self.model {
            Model::Glm => pairs.push(("mc_trials", self.mc_trials.to_string())),
            Model::Semiglm => {
                pairs.push(("f_mode", self.f_mode.to_string()));
                pairs.push(("m_h", self.m_h.to_string()));
                pairs.push(("mc_trials", self.mc_trials.to_string()));
            }
            Model::Delay => {
                pairs.push(("sigma_eta_sq", self.sigma_eta_sq.to_string()));
                pairs.push(("b_rms_sq_grid", grid(&self.b_rms_sq_grid)));
            }
        }
        pairs
    }
}

fn format_grid_value(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, RunError> {
    value
        .parse()
        .map_err(|_| RunError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_value(token: &str) -> Result<f64, RunError> {
    match token {
        "-inf" => Ok(f64::NEG_INFINITY),
        t => parse_num("grid", t),
    }
}

/// Comma-separated values and inclusive `start:step:stop` ranges; `-inf`
/// is accepted as a value.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, RunError> {
    let mut out = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = token.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [v] => out.push(parse_value(v)?),
            [start, step, stop] => {
                let a: f64 = parse_num("grid", start)?;
                let h: f64 = parse_num("grid", step)?;
                let b: f64 = parse_num("grid", stop)?;
                if !(h > 0.0) || !a.is_finite() || !b.is_finite() || b < a {
                    return Err(RunError::Config(format!("bad range '{token}'")));
                }
                let count = ((b - a) / h + 1e-9).floor() as usize;
                if count > 1_000_000 {
                    return Err(RunError::Config(format!("range '{token}' is too long")));
                }
                // a + k·h rather than repeated addition, so endpoints are exact
                out.extend((0..=count).map(|k| a + k as f64 * h));
            }
            _ => return Err(RunError::Config(format!("bad grid token '{token}'"))),
        }
    }
    if out.is_empty() {
        return Err(RunError::Config("empty grid".into()));
    }
    Ok(out)
}
