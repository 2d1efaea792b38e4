//! Flat JSON run configuration.

use std::path::{Path, PathBuf};

use choquard_core::solver::{validate_schedule, DEFAULT_SCHEDULE};
use choquard_core::{Params, SolveConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Groundstate,
    Nodal,
    Continuation,
    Levels,
    Validate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Groundstate => "groundstate",
            Mode::Nodal => "nodal",
            Mode::Continuation => "continuation",
            Mode::Levels => "levels",
            Mode::Validate => "validate",
        }
    }
}

pub const DEFAULT_SEED: u64 = 0x5eed_c40e;

mod defaults {
    use choquard_core::SolveConfig;

    pub fn points() -> usize {
        64
    }

    pub fn seed() -> u64 {
        super::DEFAULT_SEED
    }

    pub fn max_iters() -> usize {
        SolveConfig::default().max_iters
    }

    pub fn grad_tol() -> f64 {
        SolveConfig::default().grad_tol
    }

    pub fn step_init() -> f64 {
        SolveConfig::default().step_init
    }

    pub fn backtrack_factor() -> f64 {
        SolveConfig::default().backtrack_factor
    }

    pub fn degenerate_tol() -> f64 {
        SolveConfig::default().degenerate_tol
    }
}

/// Every key is optional except `dim` and `alpha`; which of `p`,
/// `p_schedule`, `p_values` and `field` are needed depends on the mode.
/// A missing `box_length` means it is chosen by doubling from 16 until the
/// groundstate carries less than `1e-8` of its mass outside `|x| > L/4`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub dim: usize,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[serde(default = "defaults::points")]
    pub points_per_axis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_length: Option<f64>,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "defaults::step_init")]
    pub step_init: f64,
    #[serde(default = "defaults::backtrack_factor")]
    pub backtrack_factor: f64,
    #[serde(default = "defaults::degenerate_tol")]
    pub degenerate_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_offset: Option<f64>,
    /// CHQF field: the input of `validate`, or a warm start for `nodal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
}

/// Box length search: first length and the tolerated tail mass.
pub const AUTO_BOX_START: f64 = 16.0;
pub const AUTO_BOX_TAIL: f64 = 1e-8;

impl RunConfig {
    pub fn solver(&self) -> SolveConfig {
        SolveConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            step_init: self.step_init,
            backtrack_factor: self.backtrack_factor,
            degenerate_tol: self.degenerate_tol,
            seed_offset: self.seed_offset,
        }
    }

    pub fn params(&self, p: f64) -> Result<Params, CliError> {
        Params::new(self.dim, self.alpha, p).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Vec<f64> {
        self.p_schedule.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec())
    }

    fn require_p(&self, mode: Mode) -> Result<f64, CliError> {
        self.p.ok_or_else(|| CliError::Config(format!("mode {} needs `p`", mode.name())))
    }

    /// Checks everything `mode` will use, so that config problems surface
    /// before any solve starts.
    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let cfg_err = |m: String| Err(CliError::Config(m));
        if let Some(m) = self.mode {
            if m != mode {
                return cfg_err(format!("config is for mode {}, invoked as {}", m.name(), mode.name()));
            }
        }
        self.solver().validate().map_err(|e| CliError::Config(e.to_string()))?;
        choquard_core::Grid::new(self.dim, self.points_per_axis, self.box_length.unwrap_or(AUTO_BOX_START))
            .map_err(|e| CliError::Config(e.to_string()))?;
        match mode {
            Mode::Groundstate | Mode::Validate => {
                let params = self.params(self.require_p(mode)?)?;
                if params.p == 2.0 {
                    params.check_quadratic_regime().map_err(|e| CliError::Config(e.to_string()))?;
                }
                if mode == Mode::Validate && self.field.is_none() {
                    return cfg_err("mode validate needs `field`".into());
                }
            }
            Mode::Nodal => {
                let p = self.require_p(mode)?;
                self.params(p)?;
                if p <= 2.0 {
                    return cfg_err(format!("mode nodal needs p > 2, got {p}"));
                }
            }
            Mode::Continuation => {
                let schedule = self.schedule();
                validate_schedule(&schedule).map_err(|e| CliError::Config(e.to_string()))?;
                for &p in &schedule {
                    self.params(p)?;
                }
                self.params(2.0)?.check_quadratic_regime().map_err(|e| CliError::Config(e.to_string()))?;
            }
            Mode::Levels => {
                let values = self.p_values.as_deref().unwrap_or_default();
                if values.is_empty() {
                    return cfg_err("mode levels needs a non-empty `p_values`".into());
                }
                for &p in values {
                    self.params(p)?;
                }
            }
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path, mode: Mode) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    config.validate(mode)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(r#"{"dim": 3, "alpha": 2.0, "p": 2.5}"#).unwrap();
        assert_eq!(cfg.points_per_axis, 64);
        assert_eq!(cfg.solver(), SolveConfig::default());
        assert_eq!(cfg.seed, DEFAULT_SEED);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        cfg.validate(Mode::Groundstate).unwrap();
    }

    #[test]
    fn window_violation_names_the_window() {
        let cfg = parse_config(r#"{"dim": 3, "alpha": 2.0, "p": 5.0}"#).unwrap();
        let err = cfg.validate(Mode::Groundstate).unwrap_err().to_string();
        assert!(err.contains("(N+α)/N < p < (N+α)/(N-2)₊"), "{err}");
    }

    #[test]
    fn quadratic_case_is_accepted() {
        let cfg = parse_config(r#"{"dim": 3, "alpha": 2.0, "p": 2.0}"#).unwrap();
        cfg.validate(Mode::Groundstate).unwrap();
        cfg.validate(Mode::Continuation).unwrap();
        assert!(cfg.validate(Mode::Nodal).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_fields() {
        assert!(parse_config(r#"{"dim": 3, "alpha": 2.0, "q": 1}"#).is_err());
        assert!(parse_config(r#"{"dim": 3}"#).is_err());
        let cfg = parse_config(r#"{"dim": 3, "alpha": 2.0}"#).unwrap();
        assert!(cfg.validate(Mode::Groundstate).is_err());
        assert!(cfg.validate(Mode::Levels).is_err());
        assert!(cfg.validate(Mode::Validate).is_err());
    }

    #[test]
    fn mode_must_match_subcommand() {
        let cfg = parse_config(r#"{"mode": "levels", "dim": 3, "alpha": 2.0, "p_values": [2.0, 2.5]}"#).unwrap();
        cfg.validate(Mode::Levels).unwrap();
        assert!(cfg.validate(Mode::Groundstate).is_err());
    }

    #[test]
    fn bad_schedule_is_a_config_error() {
        let cfg = parse_config(r#"{"dim": 3, "alpha": 2.0, "p_schedule": [2.5, 2.6, 2.01]}"#).unwrap();
        assert!(matches!(cfg.validate(Mode::Continuation), Err(CliError::Config(_))));
    }
}
