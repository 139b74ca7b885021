//! Two-phase training of one network: prediction pretraining, oracle
//! relabeling with the pretrained predictions, then joint training.

use crate::nn::Network;
use crate::scalar::Scalar;
use crate::transforms::TransformBank;

use super::dataset::{label_dataset, Dataset};
use super::trainer::{head_accuracy, train, Checkpoint, Objective, TrainConfig, TrainReport};
use super::TrainingError;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Prediction-only iterations before the labels are computed.
    pub pretrain_iterations: usize,
    /// Joint phase; `objective` is forced to [`Objective::Joint`].
    pub joint: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    pub pretrain: TrainReport,
    pub joint: TrainReport,
    /// Held-out accuracy against labels recomputed with the final network.
    pub heldout_accuracy: Option<(f64, f64)>,
}

pub fn train_two_phase<T: Scalar>(
    net: &mut Network<T>,
    train_set: &mut Dataset,
    mut heldout: Option<&mut Dataset>,
    bank: &TransformBank,
    cfg: &PipelineConfig,
    mut on_checkpoint: impl FnMut(&str, &Checkpoint),
) -> Result<PipelineReport, TrainingError> {
    let pre_cfg = TrainConfig {
        iterations: cfg.pretrain_iterations,
        objective: Objective::Prediction,
        seed: cfg.joint.seed ^ 0x5eed,
        ..cfg.joint.clone()
    };
    let pretrain = if cfg.pretrain_iterations > 0 {
        train(net, train_set, None, &pre_cfg, |c| on_checkpoint("pretrain", c))?
    } else {
        TrainReport::default()
    };
    label_dataset(train_set, net, bank)?;
    if let Some(h) = heldout.as_deref_mut() {
        label_dataset(h, net, bank)?;
    }
    let joint_cfg = TrainConfig {
        objective: Objective::Joint,
        ..cfg.joint.clone()
    };
    let joint = train(net, train_set, heldout.as_deref(), &joint_cfg, |c| {
        on_checkpoint("joint", c)
    })?;
    let heldout_accuracy = match heldout {
        Some(h) if !h.is_empty() => {
            label_dataset(h, net, bank)?;
            Some(head_accuracy(net, h)?)
        }
        _ => None,
    };
    Ok(PipelineReport {
        pretrain,
        joint,
        heldout_accuracy,
    })
}
