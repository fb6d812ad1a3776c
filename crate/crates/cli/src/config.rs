//! Run configuration: `key = value` text files plus `--kebab-case` overrides.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Later assignments win, so flags are applied after the file.
//! `dt` and `n_boundary` default from the final `scheme` and `n_samples`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use teng_core::engine::Scheme;
use teng_core::sampling::default_boundary_count;
use thiserror::Error;

pub const DEFAULT_DT_EULER: f64 = 0.001;
pub const DEFAULT_DT_HEUN: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("malformed value for `{key}`: {value:?} ({reason})")]
    Malformed { key: String, value: String, reason: String },
    #[error("`{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },
}

impl ConfigError {
    /// The key the error is about, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::UnknownKey(k) | Self::Malformed { key: k, .. } | Self::OutOfRange { key: k, .. } => Some(k),
            Self::Syntax { .. } => None,
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Heat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Pretrained,
    FrozenDifference,
}

/// Initial condition `u₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// The eleven-mode expansion of the first benchmark.
    Experiment1,
    /// A single disk harmonic `Z_mn` with unit coefficient.
    Mode { m: u32, n: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub equation: Equation,
    pub nu: f64,
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
    pub n_it: usize,
    pub alpha: f64,
    pub ridge: f64,
    pub lambda_d: f64,
    pub n_samples: usize,
    pub n_boundary: usize,
    pub sampler_seed: u64,
    pub model_seed: u64,
    pub hidden_widths: Vec<usize>,
    pub init_mode: InitMode,
    pub grid_resolution: usize,
    pub output_dir: PathBuf,
    pub snapshot_path: Option<PathBuf>,
    pub initial_condition: InitialCondition,
    /// Pretraining target as a relative L² error on the interior samples.
    pub pretrain_tol: f64,
    pub pretrain_max_rounds: usize,
    pub pretrain_ridge: f64,
    /// Times at which field grids are written; empty means `0` and the final time.
    pub field_times: Vec<f64>,
    /// Replace the network by the exact solution (checks the metric plumbing).
    pub oracle_selftest: bool,
    /// Draw fresh collocation points every step.
    pub resample: bool,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "equation",
    "nu",
    "scheme",
    "dt",
    "n_steps",
    "n_it",
    "alpha",
    "ridge",
    "lambda_d",
    "n_samples",
    "n_boundary",
    "sampler_seed",
    "model_seed",
    "hidden_widths",
    "init_mode",
    "grid_resolution",
    "output_dir",
    "snapshot_path",
    "initial_condition",
    "pretrain_tol",
    "pretrain_max_rounds",
    "pretrain_ridge",
    "field_times",
    "oracle_selftest",
    "resample",
];

/// One-line descriptions used for `--help`.
pub fn describe(key: &str) -> &'static str {
    match key {
        "equation" => "PDE to solve (heat)",
        "nu" => "diffusivity [default 0.1]",
        "scheme" => "euler | heun [default heun]",
        "dt" => "time step [default 0.001 euler, 0.005 heun]",
        "n_steps" => "number of time steps [default 800]",
        "n_it" => "stepper iterations per solve [default 5]",
        "alpha" => "stepper step size in (0, 1] [default 1]",
        "ridge" => "relative ridge for time stepping [default 1e-5]",
        "lambda_d" => "Dirichlet penalty weight [default 1]",
        "n_samples" => "interior collocation points [default 65536]",
        "n_boundary" => "boundary collocation points [default n_samples/8]",
        "sampler_seed" => "collocation seed [default 4321]",
        "model_seed" => "network initialization seed [default 1234]",
        "hidden_widths" => "comma-separated hidden layer widths [default 32,32]",
        "init_mode" => "pretrained | frozen_difference [default pretrained]",
        "grid_resolution" => "evaluation lattice size R [default 64]",
        "output_dir" => "directory for outputs [default out]",
        "snapshot_path" => "parameter snapshot: loaded if present, written after pretraining otherwise",
        "initial_condition" => "experiment1 | mode:M:N [default experiment1]",
        "pretrain_tol" => "pretraining relative L2 target [default 1e-3]",
        "pretrain_max_rounds" => "pretraining stepper-call cap [default 2000]",
        "pretrain_ridge" => "relative ridge while pretraining [default 1e-3]",
        "field_times" => "comma-separated times for field grids [default 0 and final]",
        "oracle_selftest" => "use the exact solution as the prediction [default false]",
        "resample" => "fresh collocation points every step [default false]",
        _ => "",
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: V::Err| ConfigError::Malformed {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn malformed(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Malformed { key: key.into(), value: value.into(), reason: reason.into() }
}

fn out_of_range(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange { key: key.into(), reason: reason.into() }
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Euler => "euler",
        Scheme::Heun => "heun",
    }
}

/// Splits config text into ordered `(key, value)` pairs without
/// interpreting them.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.into() })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Maps a `--kebab-case` flag name to its key.
pub fn flag_to_key(flag: &str) -> String {
    flag.trim_start_matches("--").replace('-', "_")
}

pub fn key_to_flag(key: &str) -> String {
    key.replace('_', "-")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::resolve(&[]).expect("defaults are valid")
    }
}

impl RunConfig {
    /// Applies `pairs` in order over the defaults and validates the result.
    pub fn resolve(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self {
            equation: Equation::Heat,
            nu: 0.1,
            scheme: Scheme::Heun,
            dt: f64::NAN,
            n_steps: 800,
            n_it: 5,
            alpha: 1.0,
            ridge: 1e-5,
            lambda_d: 1.0,
            n_samples: 65536,
            n_boundary: 0,
            sampler_seed: 4321,
            model_seed: 1234,
            hidden_widths: vec![32, 32],
            init_mode: InitMode::Pretrained,
            grid_resolution: 64,
            output_dir: PathBuf::from("out"),
            snapshot_path: None,
            initial_condition: InitialCondition::Experiment1,
            pretrain_tol: 1e-3,
            pretrain_max_rounds: 2000,
            pretrain_ridge: 1e-3,
            field_times: Vec::new(),
            oracle_selftest: false,
            resample: false,
        };
        let (mut dt, mut n_boundary) = (None, None);
        for (k, v) in pairs {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "equation" => {
                    cfg.equation = match v {
                        "heat" => Equation::Heat,
                        _ => return Err(malformed(k, v, "expected heat")),
                    }
                }
                "nu" => cfg.nu = parse(k, v)?,
                "scheme" => {
                    cfg.scheme = match v {
                        "euler" => Scheme::Euler,
                        "heun" => Scheme::Heun,
                        _ => return Err(malformed(k, v, "expected euler or heun")),
                    }
                }
                "dt" => dt = Some(parse(k, v)?),
                "n_steps" => cfg.n_steps = parse(k, v)?,
                "n_it" => cfg.n_it = parse(k, v)?,
                "alpha" => cfg.alpha = parse(k, v)?,
                "ridge" => cfg.ridge = parse(k, v)?,
                "lambda_d" => cfg.lambda_d = parse(k, v)?,
                "n_samples" => cfg.n_samples = parse(k, v)?,
                "n_boundary" => n_boundary = Some(parse(k, v)?),
                "sampler_seed" => cfg.sampler_seed = parse(k, v)?,
                "model_seed" => cfg.model_seed = parse(k, v)?,
                "hidden_widths" => cfg.hidden_widths = parse_list(k, v)?,
                "init_mode" => {
                    cfg.init_mode = match v {
                        "pretrained" => InitMode::Pretrained,
                        "frozen_difference" => InitMode::FrozenDifference,
                        _ => return Err(malformed(k, v, "expected pretrained or frozen_difference")),
                    }
                }
                "grid_resolution" => cfg.grid_resolution = parse(k, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "snapshot_path" => cfg.snapshot_path = (!v.is_empty()).then(|| PathBuf::from(v)),
                "initial_condition" => cfg.initial_condition = parse_initial_condition(v)?,
                "pretrain_tol" => cfg.pretrain_tol = parse(k, v)?,
                "pretrain_max_rounds" => cfg.pretrain_max_rounds = parse(k, v)?,
                "pretrain_ridge" => cfg.pretrain_ridge = parse(k, v)?,
                "field_times" => cfg.field_times = parse_list(k, v)?,
                "oracle_selftest" => cfg.oracle_selftest = parse(k, v)?,
                "resample" => cfg.resample = parse(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.to_string())),
            }
        }
        cfg.dt = dt.unwrap_or(match cfg.scheme {
            Scheme::Euler => DEFAULT_DT_EULER,
            Scheme::Heun => DEFAULT_DT_HEUN,
        });
        cfg.n_boundary = n_boundary.unwrap_or_else(|| default_boundary_count(cfg.n_samples));
        cfg.validate()?;
        Ok(cfg)
    }

    /// File text first, then flag overrides.
    pub fn from_sources(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match file_text {
            Some(text) => parse_text(text)?,
            None => Vec::new(),
        };
        pairs.extend_from_slice(overrides);
        Self::resolve(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(out_of_range(key, format!("must be > 0, got {v}")))
            }
        };
        positive("nu", self.nu)?;
        positive("dt", self.dt)?;
        positive("pretrain_tol", self.pretrain_tol)?;
        if self.n_steps == 0 {
            return Err(out_of_range("n_steps", "must be >= 1"));
        }
        if self.n_it == 0 {
            return Err(out_of_range("n_it", "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(out_of_range("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        for (key, v) in [("ridge", self.ridge), ("pretrain_ridge", self.pretrain_ridge), ("lambda_d", self.lambda_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(out_of_range(key, format!("must be >= 0, got {v}")));
            }
        }
        if self.n_samples == 0 {
            return Err(out_of_range("n_samples", "must be >= 1"));
        }
        if self.n_boundary == 0 {
            return Err(out_of_range("n_boundary", "must be >= 1"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(out_of_range("hidden_widths", "need at least one layer, all widths >= 1"));
        }
        if self.grid_resolution < 2 {
            return Err(out_of_range("grid_resolution", "must be >= 2"));
        }
        if let InitialCondition::Mode { m, n } = self.initial_condition {
            if m > teng_core::special::MAX_ORDER || n == 0 || n > teng_core::special::MAX_ZERO_INDEX {
                return Err(out_of_range("initial_condition", format!("mode ({m},{n}) outside the supported table")));
            }
        }
        if let Some(t) = self.field_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_final() + 0.5 * self.dt)) {
            return Err(out_of_range("field_times", format!("{t} outside [0, {}]", self.t_final())));
        }
        Ok(())
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Field-grid step indices, sorted and deduplicated.
    pub fn field_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = if self.field_times.is_empty() {
            vec![0, self.n_steps]
        } else {
            self.field_times.iter().map(|t| ((t / self.dt).round() as usize).min(self.n_steps)).collect()
        };
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    /// Resolved configuration as parseable text (every key explicit).
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| v.join(",");
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "equation" => "heat".to_string(),
                "nu" => self.nu.to_string(),
                "scheme" => scheme_name(self.scheme).to_string(),
                "dt" => self.dt.to_string(),
                "n_steps" => self.n_steps.to_string(),
                "n_it" => self.n_it.to_string(),
                "alpha" => self.alpha.to_string(),
                "ridge" => self.ridge.to_string(),
                "lambda_d" => self.lambda_d.to_string(),
                "n_samples" => self.n_samples.to_string(),
                "n_boundary" => self.n_boundary.to_string(),
                "sampler_seed" => self.sampler_seed.to_string(),
                "model_seed" => self.model_seed.to_string(),
                "hidden_widths" => list(&self.hidden_widths.iter().map(usize::to_string).collect::<Vec<_>>()),
                "init_mode" => match self.init_mode {
                    InitMode::Pretrained => "pretrained".into(),
                    InitMode::FrozenDifference => "frozen_difference".into(),
                },
                "grid_resolution" => self.grid_resolution.to_string(),
                "output_dir" => self.output_dir.display().to_string(),
                "snapshot_path" => self.snapshot_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                "initial_condition" => match self.initial_condition {
                    InitialCondition::Experiment1 => "experiment1".into(),
                    InitialCondition::Mode { m, n } => format!("mode:{m}:{n}"),
                },
                "pretrain_tol" => self.pretrain_tol.to_string(),
                "pretrain_max_rounds" => self.pretrain_max_rounds.to_string(),
                "pretrain_ridge" => self.pretrain_ridge.to_string(),
                "field_times" => list(&self.field_times.iter().map(f64::to_string).collect::<Vec<_>>()),
                "oracle_selftest" => self.oracle_selftest.to_string(),
                "resample" => self.resample.to_string(),
                _ => unreachable!("every key is echoed"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}

fn parse_initial_condition(v: &str) -> Result<InitialCondition> {
    const KEY: &str = "initial_condition";
    if v == "experiment1" {
        return Ok(InitialCondition::Experiment1);
    }
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["mode", m, n] => Ok(InitialCondition::Mode { m: parse(KEY, m)?, n: parse(KEY, n)? }),
        _ => Err(malformed(KEY, v, "expected experiment1 or mode:M:N")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_config_gives_table_defaults() {
        let c = RunConfig::from_sources(Some(""), &[]).unwrap();
        assert_eq!(c.scheme, Scheme::Heun);
        assert_eq!(c.dt, 0.005);
        assert_eq!((c.n_steps, c.n_it, c.n_samples), (800, 5, 65536));
        assert_eq!((c.sampler_seed, c.model_seed), (4321, 1234));
        assert_eq!(c.nu, 0.1);
        assert_eq!(c.n_boundary, 8192);
    }

    #[test]
    fn scheme_flag_switches_dt_default() {
        let c = RunConfig::from_sources(Some("n_it = 3\n"), &pairs(&[("scheme", "euler")])).unwrap();
        assert_eq!(c.dt, 0.001);
        assert_eq!(c.n_it, 3);
        let c = RunConfig::from_sources(Some("dt = 0.01"), &pairs(&[("scheme", "euler")])).unwrap();
        assert_eq!(c.dt, 0.01);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::resolve(&pairs(&[("dt", "-1")])).unwrap_err();
        assert_eq!(e.key(), Some("dt"));
        let e = RunConfig::resolve(&pairs(&[("bogus", "1")])).unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("bogus".into()));
        let e = RunConfig::resolve(&pairs(&[("n_it", "two")])).unwrap_err();
        assert_eq!(e.key(), Some("n_it"));
        let e = RunConfig::resolve(&pairs(&[("alpha", "1.5")])).unwrap_err();
        assert_eq!(e.key(), Some("alpha"));
        assert!(matches!(parse_text("no equals sign"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::resolve(&pairs(&[
            ("scheme", "euler"),
            ("hidden_widths", "16, 8"),
            ("snapshot_path", "/tmp/x.snap"),
            ("initial_condition", "mode:2:1"),
            ("field_times", "0,0.25"),
            ("resample", "true"),
        ]))
        .unwrap();
        let back = RunConfig::from_sources(Some(&c.to_text()), &[]).unwrap();
        assert_eq!(back, c);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_sources(Some(&d.to_text()), &[]).unwrap(), d);
    }

    #[test]
    fn field_steps_default_and_rounding() {
        let c = RunConfig::resolve(&pairs(&[("n_steps", "10"), ("dt", "0.1")])).unwrap();
        assert_eq!(c.field_steps(), vec![0, 10]);
        let c = RunConfig::resolve(&pairs(&[("n_steps", "10"), ("dt", "0.1"), ("field_times", "0.5,0.51,1")])).unwrap();
        assert_eq!(c.field_steps(), vec![5, 10]);
        assert!(RunConfig::resolve(&pairs(&[("n_steps", "10"), ("dt", "0.1"), ("field_times", "3")])).is_err());
    }

    #[test]
    fn flag_names() {
        assert_eq!(flag_to_key("--lambda-d"), "lambda_d");
        assert_eq!(key_to_flag("pretrain_max_rounds"), "pretrain-max-rounds");
    }
}
