use std::path::Path;

use hybrid_sysid::baselines::BoConfig;
use hybrid_sysid::bench::BenchConfig;
use hybrid_sysid::dataset::Resolution;
use hybrid_sysid::interception::InterceptConfig;
use hybrid_sysid::smc::SmcConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 28×28 frames, 200 per clip.
    Small,
    /// 100×50 frames, 75 per clip, with blur, occlusion and table height.
    Wide,
}

impl Preset {
    pub fn resolution(self) -> Resolution {
        match self {
            Preset::Small => Resolution::SMALL,
            Preset::Wide => Resolution::WIDE,
        }
    }

    pub fn frames(self) -> usize {
        match self {
            Preset::Small => 200,
            Preset::Wide => 75,
        }
    }
}

/// Every setting a run depends on besides the subcommand's own arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub smc: SmcConfig,
    pub lsq_samples: usize,
    pub bo_evals: usize,
    pub bo: BoConfig,
    pub dmd_embed: usize,
    pub intercept: InterceptConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: Preset::Small,
            smc: SmcConfig::default(),
            lsq_samples: 2000,
            bo_evals: 20,
            bo: BoConfig::default(),
            dmd_embed: 8,
            intercept: InterceptConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.bench.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.smc.validate().map_err(|e| cfg(&e))?;
        self.intercept.validate().map_err(|e| cfg(&e))?;
        self.bench.validate().map_err(|e| cfg(&e))?;
        if self.lsq_samples == 0 {
            return Err(CliError::Config("lsq_samples must be positive".into()));
        }
        if self.bo_evals <= self.bo.n_init {
            return Err(CliError::Config(format!(
                "bo_evals ({}) must exceed the {} initial evaluations",
                self.bo_evals, self.bo.n_init
            )));
        }
        if self.dmd_embed == 0 {
            return Err(CliError::Config("dmd_embed must be positive".into()));
        }
        Ok(())
    }
}
