//! Stage runner over an on-disk workspace.
//!
//! A workspace is a directory holding `config.toml` and one sub-directory
//! per stage. Each stage directory carries a `manifest.json` with the
//! stage's configuration hash and the SHA-256 of every file it wrote. The
//! hash chains the hashes of the upstream stages, so changing a config
//! section or the input log invalidates every stage downstream of it.

mod config;
mod report;
mod stages;
mod workspace;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    ElasticityConfig, FeatureConfig, OptimizeConfig, Paths, PipelineConfig, ReportConfig, SplitName, CONFIG_FILE,
};
pub use report::{CategoryReport, TABLE_COLUMNS};
pub use stages::{
    load_series, DecisionRow, ElasticityRow, ExcludedRow, FitRow, PredictionRow, SkippedRow, SummaryRow, ThresholdRow,
};
pub use workspace::{category_dir, read_csv, stage_hashes, Manifest, MANIFEST_FILE};

use crate::elasticity::ElasticityError;
use crate::featurize::FeatureError;
use crate::ingest::IngestError;
use crate::tcn::TcnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Featurize,
    Train,
    Predict,
    Thresholds,
    Elasticity,
    Optimize,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Featurize,
        Stage::Train,
        Stage::Predict,
        Stage::Thresholds,
        Stage::Elasticity,
        Stage::Optimize,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Thresholds => "thresholds",
            Stage::Elasticity => "elasticity",
            Stage::Optimize => "optimize",
            Stage::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Stages whose artifacts this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Featurize => &[Stage::Ingest],
            Stage::Train => &[Stage::Ingest, Stage::Featurize],
            Stage::Predict => &[Stage::Ingest, Stage::Featurize, Stage::Train],
            Stage::Thresholds => &[Stage::Predict],
            Stage::Elasticity => &[Stage::Ingest, Stage::Predict],
            Stage::Optimize => &[Stage::Ingest, Stage::Thresholds, Stage::Elasticity],
            Stage::Report => {
                &[Stage::Ingest, Stage::Predict, Stage::Thresholds, Stage::Elasticity, Stage::Optimize]
            }
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing {artifact}: {message}")]
    Dependency { artifact: String, message: String },
    #[error("{stage} artifacts are out of date: {message}")]
    Stale { stage: Stage, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("training: {0}")]
    Training(String),
    #[error("retention floor not met in {}", categories.join(", "))]
    Infeasible { categories: Vec<String> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Config(_) => 2,
            PipelineError::Dependency { .. } | PipelineError::Stale { .. } => 3,
            PipelineError::Schema(_) => 4,
            PipelineError::Training(_) => 5,
            PipelineError::Infeasible { .. } => 6,
            PipelineError::Io { .. } | PipelineError::Internal(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Schema(e.to_string())
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        PipelineError::Schema(e.to_string())
    }
}

impl From<ElasticityError> for PipelineError {
    fn from(e: ElasticityError) -> Self {
        PipelineError::Internal(e.to_string())
    }
}

impl From<TcnError> for PipelineError {
    fn from(e: TcnError) -> Self {
        match e {
            TcnError::Diverged { .. } | TcnError::EmptySplit => PipelineError::Training(e.to_string()),
            TcnError::Config(m) => PipelineError::Config(m),
            TcnError::Io(err) => PipelineError::Internal(err.to_string()),
            other => PipelineError::Schema(other.to_string()),
        }
    }
}

/// Writes the configuration with every default spelled out. Refuses to
/// overwrite an existing one unless `force`.
pub fn init_workspace(workspace: &Path, config: &PipelineConfig, force: bool) -> Result<PathBuf, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(workspace).map_err(|e| PipelineError::io(workspace, e))?;
    let path = workspace.join(CONFIG_FILE);
    if path.exists() && !force {
        return Err(PipelineError::Usage(format!("{} already exists", path.display())));
    }
    std::fs::write(&path, config.to_toml()?).map_err(|e| PipelineError::io(&path, e))?;
    Ok(path)
}

pub fn run_stage(workspace: &Path, stage: Stage) -> Result<(), PipelineError> {
    let config = PipelineConfig::load(workspace)?;
    let hashes = stage_hashes(workspace, &config)?;
    for &up in stage.upstream() {
        workspace::require(workspace, up, &hashes[&up])?;
    }
    log::info!("running {stage}");
    let ctx = stages::Context { workspace, config: &config, hash: &hashes[&stage] };
    match stage {
        Stage::Ingest => stages::ingest(&ctx),
        Stage::Featurize => stages::featurize(&ctx),
        Stage::Train => stages::train(&ctx),
        Stage::Predict => stages::predict(&ctx),
        Stage::Thresholds => stages::thresholds(&ctx),
        Stage::Elasticity => stages::elasticity(&ctx),
        Stage::Optimize => stages::optimize(&ctx),
        Stage::Report => report::report(&ctx),
    }
}

/// Every stage in order, stopping at the first failure.
pub fn run_all(workspace: &Path) -> Result<(), PipelineError> {
    Stage::ALL.into_iter().try_for_each(|s| run_stage(workspace, s))
}
