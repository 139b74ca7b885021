//! Dataset collection with RD-oracle pair labels, the training objectives
//! and the training loop.

mod bank;
mod dataset;
mod loss;
mod pipeline;
mod trainer;

use thiserror::Error;

use crate::codec::CodecError;
use crate::nn::NnError;
use crate::transforms::TransformError;

pub use bank::{best_classic_mode, collect_bank_samples, BANK_BLOCK_SIZES};
pub use dataset::{
    argmin_lowest, batch_inputs, collect_contexts, collect_dataset, label_dataset, oracle_labels, CollectConfig,
    DataSource, Dataset, TrainingTriple, DATASET_MAGIC, TRAINING_QPS,
};
pub use loss::{classification_loss, prediction_loss};
pub use pipeline::{train_two_phase, PipelineConfig, PipelineReport};
pub use trainer::{batch_loss, head_accuracy, train, window_means, Checkpoint, Objective, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("configuration: {0}")]
    Config(&'static str),
    #[error("dataset file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
