use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::featurize::{FeatureGroup, ALL_GROUPS};
use crate::ingest::{ColumnMapping, SplitSpec};
use crate::optimizer::DEFAULT_RANGE_QUANTILES;
use crate::tcn::{Architecture, TrainConfig};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Transaction log, relative to the workspace unless absolute.
    pub input: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { input: PathBuf::from("transactions.csv") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_lags: usize,
    pub groups: Vec<FeatureGroup>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { n_lags: 4, groups: ALL_GROUPS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticityConfig {
    /// Keep periods without a recorded offer among the fit points.
    pub include_zero_offers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Retention floor for categories without an entry in `category_floors`.
    pub retention_floor: f64,
    pub category_floors: BTreeMap<String, f64>,
    /// Percentiles of recent offers bounding the new offers.
    pub range_quantiles: (f64, f64),
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { retention_floor: 0.5, category_floors: BTreeMap::new(), range_quantiles: DEFAULT_RANGE_QUANTILES }
    }
}

impl OptimizeConfig {
    pub fn floor_for(&self, category: &str) -> f64 {
        self.category_floors.get(category).copied().unwrap_or(self.retention_floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Split the probability histograms are drawn from.
    pub histogram_split: SplitName,
    /// Split the accuracy columns are computed on.
    pub metrics_split: SplitName,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { histogram_split: SplitName::Validation, metrics_split: SplitName::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub columns: ColumnMapping,
    pub split: SplitSpec,
    pub features: FeatureConfig,
    pub network: Architecture,
    pub train: TrainConfig,
    pub elasticity: ElasticityConfig,
    pub optimize: OptimizeConfig,
    pub report: ReportConfig,
}

impl PipelineConfig {
    pub fn load(workspace: &Path) -> Result<Self, PipelineError> {
        let path = workspace.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Dependency {
            artifact: path.display().to_string(),
            message: e.to_string(),
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        self.split.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.features.n_lags == 0 {
            return fail("features.n_lags must be at least 1".into());
        }
        if self.features.n_lags >= self.split.train_periods {
            return fail(format!(
                "features.n_lags {} leaves no training targets in {} training periods",
                self.features.n_lags, self.split.train_periods
            ));
        }
        let floors = std::iter::once(self.optimize.retention_floor).chain(self.optimize.category_floors.values().copied());
        for f in floors {
            if !(0.0..=1.0).contains(&f) {
                return fail(format!("retention floor {f} outside [0, 1]"));
            }
        }
        let (lo, hi) = self.optimize.range_quantiles;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return fail(format!("range_quantiles ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"));
        }
        Ok(())
    }

    pub fn input_path(&self, workspace: &Path) -> PathBuf {
        if self.paths.input.is_absolute() {
            self.paths.input.clone()
        } else {
            workspace.join(&self.paths.input)
        }
    }
}
