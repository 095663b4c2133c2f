use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qqual_core::bench::{ClassBenchConfig, RegBenchConfig};
use qqual_core::dvcs::CampaignConfig;
use qqual_core::geometry::{DEFAULT_RESOLUTION, DEFAULT_SMOOTHING};

/// One block per command. Every field has a default and unknown keys are
/// rejected, so a typo in a config file is an error rather than a silent
/// fallback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bench_class: BenchClassConfig,
    pub bench_reg: RegBenchConfig,
    pub qualify: QualifyConfig,
    pub dvcs: DvcsConfig,
    pub gen_data: GenDataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchClassConfig {
    /// Base dataset and training setup; the factor rows vary one field each.
    pub base: ClassBenchConfig,
    pub factor_table: bool,
}

impl Default for BenchClassConfig {
    fn default() -> Self {
        Self {
            base: ClassBenchConfig::default(),
            factor_table: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualifyConfig {
    /// CSV files with x and y columns. When empty, the six regression
    /// targets are sampled at `sigma` and characterized instead.
    pub inputs: Vec<PathBuf>,
    pub sigma: f64,
    pub seed: u64,
    /// Epoch at which Ξ̂ is evaluated.
    pub epoch: f64,
    /// A `bench-reg` ledger to refit the qualifier from.
    pub refit_ledger: Option<PathBuf>,
    /// Round-trip check on a corpus generated from the bundled table.
    pub self_check: bool,
}

impl Default for QualifyConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            sigma: 0.25,
            seed: 11,
            epoch: 50.0,
            refit_ledger: None,
            self_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvcsConfig {
    /// Point-per-row CSV; the bundled synthetic corpus when absent.
    pub data: Option<PathBuf>,
    pub campaign: CampaignConfig,
    pub resolution: usize,
    pub smoothing: f64,
    /// Equal-count uncertainty bins for the matched controls.
    pub control_quantiles: usize,
    /// Densest fraction of sets kept for the density control.
    pub control_density_fraction: f64,
}

impl Default for DvcsConfig {
    fn default() -> Self {
        Self {
            data: None,
            campaign: CampaignConfig::default(),
            resolution: DEFAULT_RESOLUTION,
            smoothing: DEFAULT_SMOOTHING,
            control_quantiles: 3,
            control_density_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub n_points: usize,
    pub class_samples: usize,
    pub seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            class_samples: 400,
            seed: 5,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// `--seed` replaces the base seed of every block.
    pub fn override_seed(&mut self, seed: u64) {
        self.bench_class.base.seed = seed;
        self.bench_reg.seed = seed;
        self.qualify.seed = seed;
        self.dvcs.campaign.seed = seed;
        self.gen_data.seed = seed;
    }

    pub fn validate(&self) -> Result<(), String> {
        let c = &self.bench_class.base;
        c.cdnn
            .validate()
            .and(c.qdnn.validate())
            .map_err(|e| format!("bench_class: {e}"))?;
        if c.ensemble == 0 {
            return Err("bench_class: ensemble must be ≥ 1".into());
        }
        let r = &self.bench_reg;
        r.cdnn
            .validate()
            .and(r.qdnn.validate())
            .map_err(|e| format!("bench_reg: {e}"))?;
        if r.checkpoints.is_empty() || r.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err("bench_reg: checkpoints must be non-empty and strictly increasing".into());
        }
        self.dvcs
            .campaign
            .validate()
            .map_err(|e| format!("dvcs: {e}"))?;
        if self.dvcs.resolution < 2 || !(self.dvcs.smoothing >= 0.0) {
            return Err("dvcs: resolution must be ≥ 2 and smoothing ≥ 0".into());
        }
        if self.dvcs.control_quantiles == 0
            || !(0.0 < self.dvcs.control_density_fraction
                && self.dvcs.control_density_fraction <= 1.0)
        {
            return Err(
                "dvcs: control_quantiles ≥ 1 and control_density_fraction in (0, 1]".into(),
            );
        }
        if !(self.qualify.sigma >= 0.0 && self.qualify.epoch >= 0.0) {
            return Err("qualify: sigma and epoch must be ≥ 0".into());
        }
        Ok(())
    }
}
