//! Shared run configuration for every subcommand.

use clap::Args;
use les_core::operator::OperatorMode;
use les_core::{LesError, Result};

/// Flags shared by the descriptor, distance, and benchmark commands.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Number of leading eigenvalues in a signature.
    #[arg(long, default_value_t = 200)]
    pub k: usize,

    /// Sketch size for the randomized eigensolver (default 2k).
    #[arg(long)]
    pub m: Option<usize>,

    /// Spectrum regularizer added before the log.
    #[arg(long, default_value_t = 1e-8)]
    pub gamma: f64,

    /// Kernel scale multiplier: sigma^2 = mult x median(d^2).
    #[arg(long = "sigma-mult", default_value_t = 2.0)]
    pub sigma_mult: f64,

    /// Seed for the randomized eigensolver.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Operator storage: auto, dense, or implicit.
    #[arg(long, default_value = "auto")]
    pub mode: String,

    /// Use the exact eigensolver at or below this many points.
    #[arg(long = "exact-threshold", default_value_t = 2048)]
    pub exact_threshold: usize,
}

/// Validated configuration used by the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub k: usize,
    pub m: usize,
    pub gamma: f64,
    pub sigma_multiplier: f64,
    pub seed: u64,
    pub mode: OperatorMode,
    pub exact_threshold: usize,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let k = self.k;
        if k == 0 {
            return Err(LesError::Config("--k must be positive".into()));
        }
        let m = self.m.unwrap_or(2 * k);
        if m < k + 2 {
            return Err(LesError::Config(format!(
                "--m must be at least k + 2 = {}, got {m}",
                k + 2
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LesError::Config(format!(
                "--gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.sigma_mult.is_finite() && self.sigma_mult > 0.0) {
            return Err(LesError::Config(format!(
                "--sigma-mult must be positive, got {}",
                self.sigma_mult
            )));
        }
        if self.exact_threshold == 0 {
            return Err(LesError::Config("--exact-threshold must be positive".into()));
        }
        let mode = match self.mode.as_str() {
            "auto" => OperatorMode::Auto,
            "dense" => OperatorMode::Dense,
            "implicit" => OperatorMode::Implicit,
            other => {
                return Err(LesError::Config(format!(
                    "--mode must be auto, dense, or implicit, got {other:?}"
                )))
            }
        };
        Ok(RunConfig {
            k,
            m,
            gamma: self.gamma,
            sigma_multiplier: self.sigma_mult,
            seed: self.seed,
            mode,
            exact_threshold: self.exact_threshold,
        })
    }
}
