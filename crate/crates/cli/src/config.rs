use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::Args;
use origami_core::collision::CONTACT_EPS;
use origami_core::constraints::RESIDUAL_TOL;
use origami_core::linalg::RANK_REL_TOL;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Settings shared by every command. Each value comes from the flag if
/// given, then the environment, then the config file, then the default.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML file with defaults for the settings below.
    #[arg(long, global = true, env = "ORIGAMI_CONFIG")]
    pub config: Option<PathBuf>,
    /// Max-norm residual at which a state counts as closed.
    #[arg(long, global = true, env = "ORIGAMI_RESIDUAL_TOL")]
    pub residual_tol: Option<f64>,
    /// Relative singular value cutoff for numerical rank.
    #[arg(long, global = true, env = "ORIGAMI_RANK_TOL")]
    pub rank_tol: Option<f64>,
    /// Separation below which panels are in contact rather than crossing.
    #[arg(long, global = true, env = "ORIGAMI_COLLISION_EPS")]
    pub collision_eps: Option<f64>,
    /// Continuation step in max-norm (radians).
    #[arg(long, global = true, env = "ORIGAMI_STEP")]
    pub step: Option<f64>,
    /// Step budget for trackTo and composed paths.
    #[arg(long, global = true, env = "ORIGAMI_MAX_STEPS")]
    pub max_steps: Option<usize>,
    /// Newton iterations per projection.
    #[arg(long, global = true, env = "ORIGAMI_MAX_ITER")]
    pub max_iter: Option<usize>,
    /// Read angles given on the command line as degrees.
    #[arg(long, global = true, env = "ORIGAMI_DEGREES", num_args = 0..=1, default_missing_value = "true")]
    pub degrees: Option<bool>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true, env = "ORIGAMI_OUTPUT")]
    pub output: Option<PathBuf>,
}

/// Config file contents; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub residual_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub collision_eps: Option<f64>,
    pub step: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_iter: Option<usize>,
    pub degrees: Option<bool>,
    pub output: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub residual_tol: f64,
    pub rank_tol: f64,
    pub collision_eps: f64,
    pub step: f64,
    pub max_steps: usize,
    pub max_iter: usize,
    pub degrees: bool,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            residual_tol: RESIDUAL_TOL,
            rank_tol: RANK_REL_TOL,
            collision_eps: CONTACT_EPS,
            step: PI / 200.0,
            max_steps: 2000,
            max_iter: 25,
            degrees: false,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn resolve(args: &ConfigArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(args, &file)
    }

    pub fn merge(args: &ConfigArgs, file: &FileConfig) -> Result<Self, CliError> {
        let d = Self::default();
        let cfg = Self {
            residual_tol: args.residual_tol.or(file.residual_tol).unwrap_or(d.residual_tol),
            rank_tol: args.rank_tol.or(file.rank_tol).unwrap_or(d.rank_tol),
            collision_eps: args.collision_eps.or(file.collision_eps).unwrap_or(d.collision_eps),
            step: args.step.or(file.step).unwrap_or(d.step),
            max_steps: args.max_steps.or(file.max_steps).unwrap_or(d.max_steps),
            max_iter: args.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
            degrees: args.degrees.or(file.degrees).unwrap_or(d.degrees),
            output: args.output.clone().or_else(|| file.output.clone()),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        for (name, v) in [
            ("residual_tol", self.residual_tol),
            ("rank_tol", self.rank_tol),
            ("collision_eps", self.collision_eps),
            ("step", self.step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.step >= PI {
            return Err(CliError::Config(format!("step must be below pi, got {}", self.step)));
        }
        if self.max_iter == 0 || self.max_steps == 0 {
            return Err(CliError::Config("max_iter and max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Angle value from user input, in radians.
    pub fn angle(&self, v: f64) -> f64 {
        if self.degrees {
            v.to_radians()
        } else {
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("residual_tol = 1e-7\nstep = 0.05\nmax_iter = 40\n").unwrap();
        let args = ConfigArgs {
            step: Some(0.01),
            ..Default::default()
        };
        let cfg = RunConfig::merge(&args, &file).unwrap();
        assert_eq!(cfg.step, 0.01);
        assert_eq!(cfg.residual_tol, 1e-7);
        assert_eq!(cfg.max_iter, 40);
        assert_eq!(cfg.rank_tol, RANK_REL_TOL);
    }

    #[test]
    fn rejects_bad_values() {
        let file = FileConfig::default();
        for args in [
            ConfigArgs { residual_tol: Some(0.0), ..Default::default() },
            ConfigArgs { step: Some(4.0), ..Default::default() },
            ConfigArgs { rank_tol: Some(f64::NAN), ..Default::default() },
        ] {
            assert!(matches!(RunConfig::merge(&args, &file), Err(CliError::Config(_))));
        }
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(toml::from_str::<FileConfig>("tolerance = 1").is_err());
    }
}
