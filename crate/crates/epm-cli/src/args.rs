//! Flag parsing and the run manifest.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nalgebra::DVector;

use epm_core::{EpmConfig, IcmConfig, ProblemInstance};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    /// Exterior penalty run with multiplier updates.
    Epm,
    /// Interior center-shift baseline.
    Icm,
    /// Run both and emit conditioning tables side by side.
    Compare,
}

#[derive(Debug, Parser)]
#[command(
    name = "epm",
    about = "Constrained convex solver: exterior penalty runs, an interior baseline, and conditioning comparisons",
    disable_help_subcommand = true
)]
pub struct Cli {
    /// Problem source: a TOML file path or builtin:NAME (toy1d, qp2d, qp5d, linbox).
    #[arg(long)]
    pub problem: String,

    #[arg(long, value_enum, default_value_t = SolverKind::Epm)]
    pub solver: SolverKind,

    /// Initial penalty level.
    #[arg(long)]
    pub k: Option<f64>,

    /// Penalty growth factor per outer step (1.0 keeps the level fixed).
    #[arg(long = "k-growth")]
    pub k_growth: Option<f64>,

    /// Gap rule coefficient for the inner stop.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Feasibility margin required of any center.
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Objective drop required before the center moves.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Outer merit tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Outer iteration cap; for the interior baseline this is the number of
    /// center shifts to attempt.
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,

    /// Inner iteration cap per subproblem.
    #[arg(long = "max-inner")]
    pub max_inner: Option<usize>,

    /// Starting center coordinates, comma separated (x1,x2,...).
    #[arg(long)]
    pub center: Option<String>,

    /// Keep the center fixed for the whole run.
    #[arg(long = "no-center-update")]
    pub no_center_update: bool,

    /// Grid resolution for the center line search.
    #[arg(long)]
    pub grid: Option<usize>,

    /// Absolute gradient tolerance for inner solves.
    #[arg(long = "inner-tol")]
    pub inner_tol: Option<f64>,

    /// Stop inner solves on the absolute tolerance only.
    #[arg(long = "no-gap-rule")]
    pub no_gap_rule: bool,

    /// Initial multipliers, comma separated; all ones when absent.
    #[arg(long)]
    pub lambda0: Option<String>,

    /// Directory receiving summary and trajectory files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// Seed for the randomized derivative spot check in the summary.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Where the problem comes from.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    Builtin(String),
    File(PathBuf),
}

/// Everything a run needs, resolved from the flags. Field defaults that
/// depend on the problem stay `None` here and are filled in by
/// [`RunManifest::epm_config`].
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub source: ProblemSource,
    pub solver: SolverKind,
    pub k: Option<f64>,
    pub k_growth: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub center: Option<DVector<f64>>,
    pub no_center_update: bool,
    pub grid: Option<usize>,
    pub inner_tol: Option<f64>,
    pub no_gap_rule: bool,
    pub lambda0: Option<DVector<f64>>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

/// Center shifts attempted by the interior baseline when --max-outer is
/// absent; deep enough to reach its precision floor on the corpus.
pub const DEFAULT_ICM_STEPS: usize = 30;

impl Cli {
    pub fn into_manifest(self) -> Result<RunManifest, CliError> {
        let source = match self.problem.strip_prefix("builtin:") {
            Some(name) => ProblemSource::Builtin(name.to_string()),
            None => ProblemSource::File(PathBuf::from(&self.problem)),
        };
        Ok(RunManifest {
            source,
            solver: self.solver,
            k: self.k,
            k_growth: self.k_growth,
            alpha: self.alpha,
            gamma: self.gamma,
            delta: self.delta,
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            center: self.center.map(|s| parse_vector(&s, "--center")).transpose()?,
            no_center_update: self.no_center_update,
            grid: self.grid,
            inner_tol: self.inner_tol,
            no_gap_rule: self.no_gap_rule,
            lambda0: self
                .lambda0
                .map(|s| parse_vector(&s, "--lambda0"))
                .transpose()?,
            out_dir: self.out,
            seed: self.seed,
        })
    }
}

impl RunManifest {
    /// Exterior solver configuration: problem-aware defaults overlaid with
    /// whatever flags were given.
    pub fn epm_config(&self, p: &ProblemInstance) -> Result<EpmConfig, CliError> {
        let mut cfg = EpmConfig::for_problem(p);
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.k_growth {
            cfg.k_growth = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.delta {
            cfg.delta_reduction = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            cfg.max_inner = v;
        }
        if let Some(v) = self.inner_tol {
            cfg.inner_grad_tol = v;
        }
        if self.no_gap_rule {
            cfg.use_gap_rule = false;
        }
        if self.no_center_update {
            cfg.center_update_enabled = false;
        }
        if let Some(v) = self.grid {
            cfg.linesearch_grid = v;
        }
        if let Some(c) = &self.center {
            if c.len() != p.n() {
                return Err(CliError::Usage(format!(
                    "--center has {} coordinates, problem {} needs {}",
                    c.len(),
                    p.name(),
                    p.n()
                )));
            }
            cfg.center_override = Some(c.clone());
        }
        if let Some(l) = &self.lambda0 {
            if l.len() != p.m() {
                return Err(CliError::Usage(format!(
                    "--lambda0 has {} entries, problem {} has {} constraints",
                    l.len(),
                    p.name(),
                    p.m()
                )));
            }
            cfg.lambda0 = Some(l.clone());
        }
        Ok(cfg)
    }

    /// Interior baseline configuration from the shared flags.
    pub fn icm_config(&self) -> IcmConfig {
        let mut cfg = IcmConfig::default();
        if let Some(v) = self.inner_tol {
            cfg.grad_tol = v;
        }
        if let Some(v) = self.max_inner {
            cfg.max_inner = v;
        }
        cfg
    }

    pub fn icm_steps(&self) -> usize {
        self.max_outer.unwrap_or(DEFAULT_ICM_STEPS)
    }

    /// Starting point for the interior baseline: the --center flag or the
    /// problem's stored interior point.
    pub fn start_point(&self, p: &ProblemInstance) -> Result<DVector<f64>, CliError> {
        if let Some(c) = &self.center {
            if c.len() != p.n() {
                return Err(CliError::Usage(format!(
                    "--center has {} coordinates, problem {} needs {}",
                    c.len(),
                    p.name(),
                    p.n()
                )));
            }
            return Ok(c.clone());
        }
        p.interior_point().cloned().ok_or_else(|| {
            CliError::Usage(format!(
                "problem {} declares no interior point; pass --center",
                p.name()
            ))
        })
    }
}

fn parse_vector(text: &str, flag: &str) -> Result<DVector<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => Err(CliError::Usage(format!(
            "{flag} expects comma separated numbers, got {text:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_from(args: &[&str]) -> RunManifest {
        Cli::try_parse_from(args).unwrap().into_manifest().unwrap()
    }

    #[test]
    fn defaults_leave_overrides_empty() {
        let m = manifest_from(&["epm", "--problem", "builtin:toy1d"]);
        assert!(matches!(m.source, ProblemSource::Builtin(ref n) if n == "toy1d"));
        assert!(m.k.is_none() && m.center.is_none() && !m.no_center_update);
        assert_eq!(m.seed, 42);
    }

    #[test]
    fn overrides_land_in_the_config() {
        let m = manifest_from(&[
            "epm",
            "--problem",
            "builtin:qp2d",
            "--k",
            "100",
            "--k-growth",
            "1.0",
            "--no-center-update",
            "--epsilon",
            "1e-6",
            "--center",
            "0.2,0.2",
            "--lambda0",
            "1,1,1",
        ]);
        let p = epm_core::builtin_by_name("qp2d").unwrap();
        let cfg = m.epm_config(&p).unwrap();
        assert_eq!(cfg.k, 100.0);
        assert_eq!(cfg.k_growth, 1.0);
        assert!(!cfg.center_update_enabled);
        assert_eq!(cfg.epsilon, 1e-6);
        assert_eq!(cfg.center_override.as_ref().unwrap().len(), 2);
        assert_eq!(cfg.lambda0.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn wrong_center_length_is_a_usage_error() {
        let m = manifest_from(&["epm", "--problem", "builtin:qp2d", "--center", "0.1"]);
        let p = epm_core::builtin_by_name("qp2d").unwrap();
        let err = m.epm_config(&p).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn malformed_vector_text_is_rejected() {
        let cli = Cli::try_parse_from(["epm", "--problem", "builtin:toy1d", "--center", "a,b"]);
        assert!(cli.unwrap().into_manifest().is_err());
    }

    #[test]
    fn unknown_flags_fail_to_parse() {
        assert!(Cli::try_parse_from(["epm", "--problem", "builtin:toy1d", "--kk", "1"]).is_err());
    }
}
