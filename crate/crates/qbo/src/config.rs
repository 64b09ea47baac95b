//! Flat key = value experiment configuration.
//!
//! The format is a diff-friendly INI-style text file: one `key = value`
//! per line, `#` comments, no sections. Unknown keys are rejected so
//! typos fail loudly. `effective_text` emits the fully defaulted config,
//! which re-parses to an identical value.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{QboError, Result};
use crate::estimators::EmulationMode;
use crate::optimizer::BetaSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// Two active actuators on a discrete force grid.
    Discrete2,
    /// Eight actuators over the continuous force box.
    Continuous8,
}

impl ExperimentMode {
    fn as_str(&self) -> &'static str {
        match self {
            ExperimentMode::Discrete2 => "discrete2",
            ExperimentMode::Continuous8 => "continuous8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    /// Per-point measurement noise, inches.
    pub sigma: f64,
    /// Total query budget per run.
    pub budget: u64,
    /// Per-run seeds; one run per seed in every condition.
    pub seeds: Vec<u64>,
    pub n_conditions: usize,
    /// Base for deriving condition (environment) seeds.
    pub condition_seed_base: u64,
    pub n_points: usize,
    pub m_actuators: usize,
    /// Levels per active actuator in discrete mode.
    pub levels: usize,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub lengthscale: f64,
    pub rff_features: usize,
    pub beta: f64,
    pub beta_schedule: BetaScheduleKind,
    pub eta: f64,
    pub delta: f64,
    pub emulation: EmulationMode,
    pub epsilon0: Option<f64>,
    pub acq_restarts: usize,
    pub acq_sweeps: usize,
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaScheduleKind {
    Constant,
    Theory,
}

impl ExperimentConfig {
    pub fn runs_per_condition(&self) -> usize {
        self.seeds.len()
    }

    pub fn beta_schedule(&self) -> BetaSchedule {
        match self.beta_schedule {
            BetaScheduleKind::Constant => BetaSchedule::Constant(self.beta),
            BetaScheduleKind::Theory => BetaSchedule::Theory { b: self.beta },
        }
    }

    pub fn defaults(mode: ExperimentMode) -> Self {
        Self {
            mode,
            sigma: 0.1,
            budget: 20_000,
            seeds: vec![1, 2, 3, 4, 5],
            n_conditions: 10,
            condition_seed_base: 1,
            n_points: 177,
            m_actuators: 8,
            levels: 21,
            c1: 1.0,
            c2: 1.0,
            lambda: 1.0,
            lengthscale: 0.5,
            rff_features: 1024,
            beta: 2.0,
            beta_schedule: BetaScheduleKind::Constant,
            eta: 1.0,
            delta: 0.05,
            emulation: EmulationMode::Uniform,
            epsilon0: None,
            acq_restarts: 64,
            acq_sweeps: 3,
            out_dir: "out".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: String| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(QboError::Config(format!("{field}: {msg}")))
            }
        };
        check(self.sigma >= 0.0, "sigma", format!("must be >= 0, got {}", self.sigma))?;
        check(self.budget >= 1, "budget", "must be >= 1".into())?;
        check(!self.seeds.is_empty(), "seeds", "must be nonempty".into())?;
        check(self.n_conditions >= 1, "n_conditions", "must be >= 1".into())?;
        check(self.n_points >= 2, "n_points", format!("must be >= 2, got {}", self.n_points))?;
        check(self.m_actuators >= 1, "m_actuators", "must be >= 1".into())?;
        check(
            self.levels >= 2 || self.mode == ExperimentMode::Continuous8,
            "levels",
            format!("must be >= 2, got {}", self.levels),
        )?;
        check(
            self.mode != ExperimentMode::Discrete2 || self.m_actuators >= 2,
            "m_actuators",
            "discrete2 mode needs at least 2 actuators".into(),
        )?;
        check(self.c1 >= 1.0, "c1", format!("must be >= 1, got {}", self.c1))?;
        check(self.c2 >= 1.0, "c2", format!("must be >= 1, got {}", self.c2))?;
        check(self.lambda > 0.0, "lambda", format!("must be > 0, got {}", self.lambda))?;
        check(
            self.lengthscale > 0.0,
            "lengthscale",
            format!("must be > 0, got {}", self.lengthscale),
        )?;
        check(self.rff_features >= 1, "rff_features", "must be >= 1".into())?;
        check(self.beta >= 0.0, "beta", format!("must be >= 0, got {}", self.beta))?;
        check(self.eta > 0.0, "eta", format!("must be > 0, got {}", self.eta))?;
        check(
            self.delta > 0.0 && self.delta < 1.0,
            "delta",
            format!("must be in (0, 1), got {}", self.delta),
        )?;
        if let Some(e0) = self.epsilon0 {
            check(e0 > 0.0, "epsilon0", format!("must be > 0, got {e0}"))?;
        }
        check(self.acq_restarts >= 1, "acq_restarts", "must be >= 1".into())?;
        check(self.acq_sweeps >= 1, "acq_sweeps", "must be >= 1".into())?;
        check(!self.out_dir.is_empty(), "out_dir", "must be nonempty".into())?;
        Ok(())
    }

    /// Fully defaulted key = value form; re-parses to an equal config.
    pub fn effective_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "budget = {}", self.budget);
        let seeds: Vec<String> = self.seeds.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "n_conditions = {}", self.n_conditions);
        let _ = writeln!(s, "condition_seed_base = {}", self.condition_seed_base);
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "m_actuators = {}", self.m_actuators);
        let _ = writeln!(s, "levels = {}", self.levels);
        let _ = writeln!(s, "c1 = {}", self.c1);
        let _ = writeln!(s, "c2 = {}", self.c2);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "lengthscale = {}", self.lengthscale);
        let _ = writeln!(s, "rff_features = {}", self.rff_features);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(
            s,
            "beta_schedule = {}",
            match self.beta_schedule {
                BetaScheduleKind::Constant => "constant",
                BetaScheduleKind::Theory => "theory",
            }
        );
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(
            s,
            "emulation = {}",
            match self.emulation {
                EmulationMode::Uniform => "uniform",
                EmulationMode::WorstCase => "worst_case",
            }
        );
        if let Some(e0) = self.epsilon0 {
            let _ = writeln!(s, "epsilon0 = {e0}");
        }
        let _ = writeln!(s, "acq_restarts = {}", self.acq_restarts);
        let _ = writeln!(s, "acq_sweeps = {}", self.acq_sweeps);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        s
    }
}

/// Parses a config file; `mode` is the only required key.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        QboError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<ExperimentConfig> {
    let mut mode: Option<ExperimentMode> = None;
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            QboError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key == "mode" {
            mode = Some(match value.as_str() {
                "discrete2" => ExperimentMode::Discrete2,
                "continuous8" => ExperimentMode::Continuous8,
                other => {
                    return Err(QboError::Config(format!(
                        "line {}: mode must be discrete2 or continuous8, got `{other}`",
                        lineno + 1
                    )))
                }
            });
        } else {
            pairs.push((lineno + 1, key, value));
        }
    }
    let mode = mode.ok_or_else(|| QboError::Config("missing required key `mode`".into()))?;
    let mut cfg = ExperimentConfig::defaults(mode);
    for (lineno, key, value) in pairs {
        apply_key(&mut cfg, &key, &value)
            .map_err(|e| QboError::Config(format!("line {lineno}: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value
            .parse::<T>()
            .map_err(|_| format!("{key}: cannot parse `{value}`"))
    }
    match key {
        "sigma" => cfg.sigma = num(key, value)?,
        "budget" => cfg.budget = num(key, value)?,
        "seeds" => {
            let mut seeds = Vec::new();
            for part in value.split(',') {
                seeds.push(num::<u64>(key, part.trim())?);
            }
            cfg.seeds = seeds;
        }
        "n_conditions" => cfg.n_conditions = num(key, value)?,
        "condition_seed_base" => cfg.condition_seed_base = num(key, value)?,
        "n_points" => cfg.n_points = num(key, value)?,
        "m_actuators" => cfg.m_actuators = num(key, value)?,
        "levels" => cfg.levels = num(key, value)?,
        "c1" => cfg.c1 = num(key, value)?,
        "c2" => cfg.c2 = num(key, value)?,
        "lambda" => cfg.lambda = num(key, value)?,
        "lengthscale" => cfg.lengthscale = num(key, value)?,
        "rff_features" => cfg.rff_features = num(key, value)?,
        "beta" => cfg.beta = num(key, value)?,
        "beta_schedule" => {
            cfg.beta_schedule = match value {
                "constant" => BetaScheduleKind::Constant,
                "theory" => BetaScheduleKind::Theory,
                other => return Err(format!("beta_schedule: unknown value `{other}`")),
            }
        }
        "eta" => cfg.eta = num(key, value)?,
        "delta" => cfg.delta = num(key, value)?,
        "emulation" => {
            cfg.emulation = match value {
                "uniform" => EmulationMode::Uniform,
                "worst_case" => EmulationMode::WorstCase,
                other => return Err(format!("emulation: unknown value `{other}`")),
            }
        }
        "epsilon0" => cfg.epsilon0 = Some(num(key, value)?),
        "acq_restarts" => cfg.acq_restarts = num(key, value)?,
        "acq_sweeps" => cfg.acq_sweeps = num(key, value)?,
        "out_dir" => cfg.out_dir = value.to_string(),
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_defaults() {
        let cfg = parse_config_text("mode = continuous8\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(ExperimentMode::Continuous8));
        assert_eq!(cfg.rff_features, 1024);
        assert_eq!(cfg.n_conditions, 10);
        assert_eq!(cfg.runs_per_condition(), 5);
    }

    #[test]
    fn missing_mode_is_error() {
        assert!(parse_config_text("sigma = 0.1\n").is_err());
    }

    #[test]
    fn negative_sigma_names_the_field() {
        let err = parse_config_text("mode = discrete2\nsigma = -0.1\n").unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_line_number() {
        let err = parse_config_text("mode = discrete2\nsgima = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("sgima"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_config_text("mode = discrete2\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn effective_text_round_trips() {
        let text = "mode = discrete2\nsigma = 0.2\nseeds = 7, 8, 9\nrff_features = 256\n\
                    beta_schedule = theory\nemulation = worst_case\nepsilon0 = 0.05\n";
        let cfg = parse_config_text(text).unwrap();
        let reparsed = parse_config_text(&cfg.effective_text()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse_config_text("# experiment\n\nmode = continuous8\n# done\n").unwrap();
        assert_eq!(cfg.mode, ExperimentMode::Continuous8);
    }
}
