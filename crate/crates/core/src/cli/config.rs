use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::VarianceProtocol;
use crate::error::{Error, Result};
use crate::optim::{LrSchedule, OptimizerConfig};
use crate::problems::{MlpConfig, NoisyQuadratic};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic(NoisyQuadratic),
    Mlp(MlpConfig),
}

fn d_warmup() -> f64 {
    0.1
}
fn d_floor() -> f64 {
    0.1
}

/// Cosine decay after linear warmup; the peak is the optimizer's `peak_lr`
/// and the horizon is `steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "d_warmup")]
    pub warmup_frac: f64,
    #[serde(default = "d_floor")]
    pub floor_frac: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            warmup_frac: d_warmup(),
            floor_frac: d_floor(),
        }
    }
}

fn d_seeds() -> Vec<u64> {
    vec![0]
}
fn d_draws() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub steps: u64,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Adds `<block>_fullgradnorm` columns to traces.
    #[serde(default)]
    pub record_full_gradients: bool,
    /// Used by the `variance` command.
    #[serde(default)]
    pub variance: VarianceProtocol,
    #[serde(default = "d_draws")]
    pub variance_draws: usize,
}

impl ExperimentConfig {
    pub fn lr_schedule(&self) -> Result<LrSchedule> {
        LrSchedule::with_fracs(
            self.steps,
            self.optimizer.peak_lr,
            self.schedule.warmup_frac,
            self.schedule.floor_frac,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        match &self.problem {
            ProblemSpec::Quadratic(q) => q.validate()?,
            ProblemSpec::Mlp(m) => m.validate()?,
        }
        self.optimizer.validate()?;
        self.lr_schedule()?;
        self.variance.validate()?;
        if self.variance_draws == 0 {
            return Err(Error::Config("variance_draws must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Byte offset of a JSON error within `text`.
pub fn json_error_offset(text: &str, err: &serde_json::Error) -> usize {
    let line = err.line();
    if line == 0 {
        return 0;
    }
    let start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (start + err.column().saturating_sub(1)).min(text.len())
}

/// Parses and validates; syntax and schema errors name the byte offset.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "invalid config at byte {} (line {}, column {}): {e}",
            json_error_offset(text, &e),
            e.line(),
            e.column()
        ))
    })?;
    cfg.validate()?;
    Ok(cfg)
}
