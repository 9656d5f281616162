//! Purchase-probability model: entity embeddings plus a temporal
//! convolutional network, trained on [`SampleRow`](crate::featurize::SampleRow)s.

mod conv;
mod network;
mod predict;
mod store;
mod train;

use thiserror::Error;

pub use conv::{causal_dilated_conv, receptive_field};
pub use network::{
    backward, bce_loss, check_sample, conv_activations, default_embedding_dim, forward, forward_trace, Architecture,
    ConvLayerConfig, Layout, NetworkConfig, NetworkParams, ParamClass, Trace, BCE_EPSILON,
};
pub use predict::{predict, Prediction, PredictionSet};
pub use store::{read_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use train::{
    average_checkpoints, cyclical_lr, train, EpochLog, OptimizerKind, PlateauState, Scheduler, SwaAverage,
    TrainConfig, TrainingLog,
};

#[derive(Debug, Error)]
pub enum TcnError {
    #[error("network configuration: {0}")]
    Config(String),
    #[error("input shape: {0}")]
    Shape(String),
    #[error("training needs non-empty train and validation splits")]
    EmptySplit,
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize, last_finite: Box<NetworkParams> },
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Feature(#[from] crate::featurize::FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
