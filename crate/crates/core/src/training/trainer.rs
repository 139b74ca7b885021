//! Minibatch ADAM training of one network on one dataset.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::arch::LOGIT_COUNT;
use crate::nn::{Adam, AdamConfig, Network, Tensor};
use crate::scalar::Scalar;
use crate::signaling::pair_from_logits;

use super::dataset::{batch_inputs, Dataset, TrainingTriple};
use super::loss::{classification_loss, prediction_loss};
use super::TrainingError;

/// Which heads receive gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Prediction head and trunk only; labels are ignored.
    Prediction,
    /// Prediction and both classification heads, equal weights.
    Joint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub objective: Objective,
    /// Held-out evaluation period in iterations (0 disables it).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 800_000,
            batch_size: 100,
            lr: 2e-4,
            seed: 0,
            objective: Objective::Joint,
            eval_every: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Mean total loss since the previous checkpoint.
    pub train_loss: f64,
    /// Held-out top-1 accuracy of the two heads.
    pub heldout_accuracy: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Total loss of every iteration's minibatch.
    pub losses: Vec<f64>,
    pub prediction_losses: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Loss and gradients of one minibatch; gradients are scaled by `1/batch`.
pub fn batch_loss<T: Scalar>(
    net: &Network<T>,
    batch: &[&TrainingTriple],
    bitdepth: u8,
    objective: Objective,
) -> Result<(f64, f64, crate::nn::Gradients<T>), TrainingError> {
    let out = net.forward(&batch_inputs(net, batch))?;
    let n = batch.len();
    let hw = out.prediction.shape()[1];
    let inv = T::from_f64_lossy(1.0 / n as f64);
    let mut gp = vec![T::zero(); n * hw];
    let mut gl = vec![T::zero(); n * LOGIT_COUNT];
    let (mut pred_sum, mut class_sum) = (0.0, 0.0);
    let mut target = vec![T::zero(); hw];
    for (i, t) in batch.iter().enumerate() {
        for (d, v) in target.iter_mut().zip(t.target(bitdepth)) {
            *d = T::from_f64_lossy(v);
        }
        let g = &mut gp[i * hw..(i + 1) * hw];
        pred_sum += prediction_loss(out.prediction.row(i), &target, g).to_f64_lossy();
        g.iter_mut().for_each(|v| *v = *v * inv);
        if objective == Objective::Joint {
            let g = &mut gl[i * LOGIT_COUNT..(i + 1) * LOGIT_COUNT];
            class_sum += classification_loss(out.logits.row(i), t.i1, t.i2, g).to_f64_lossy();
            g.iter_mut().for_each(|v| *v = *v * inv);
        }
    }
    let grads = net.backward(
        &out.cache,
        &Tensor::from_vec(&[n, hw], gp)?,
        &Tensor::from_vec(&[n, LOGIT_COUNT], gl)?,
    )?;
    Ok((pred_sum / n as f64, class_sum / n as f64, grads))
}

/// Top-1 accuracy of both heads against the dataset labels.
pub fn head_accuracy<T: Scalar>(net: &Network<T>, data: &Dataset) -> Result<(f64, f64), TrainingError> {
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let (mut a1, mut a2) = (0usize, 0usize);
    for chunk in data.triples.chunks(256) {
        let refs: Vec<&TrainingTriple> = chunk.iter().collect();
        let out = net.forward(&batch_inputs(net, &refs))?;
        for (i, t) in chunk.iter().enumerate() {
            let logits: Vec<f64> = out.logits.row(i).iter().map(|v| v.to_f64_lossy()).collect();
            a1 += (pair_from_logits(&logits, 1) == t.i1) as usize;
            a2 += (pair_from_logits(&logits, 2) == t.i2) as usize;
        }
    }
    let n = data.len() as f64;
    Ok((a1 as f64 / n, a2 as f64 / n))
}

/// Trains `net` in place. Minibatches walk seeded shuffles of the dataset;
/// the run is a pure function of its inputs.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &Dataset,
    heldout: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint),
) -> Result<TrainReport, TrainingError> {
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainingError::Config("zero batch size"));
    }
    let (h, w) = net.arch().block();
    if (h, w) != (data.size.h, data.size.w) {
        return Err(TrainingError::Config("dataset size does not match the network"));
    }
    let batch = cfg.batch_size.min(data.len());
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr)?, net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut report = TrainReport::default();
    let mut since = 0.0;
    for it in 1..=cfg.iterations {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let items: Vec<&TrainingTriple> = order[cursor..cursor + batch]
            .iter()
            .map(|&i| &data.triples[i])
            .collect();
        cursor += batch;
        let (pl, cl, grads) = batch_loss(net, &items, data.bitdepth, cfg.objective)?;
        if !(pl + cl).is_finite() {
            return Err(TrainingError::Diverged { iteration: it });
        }
        adam.step(net, &grads);
        report.losses.push(pl + cl);
        report.prediction_losses.push(pl);
        since += pl + cl;
        let eval = cfg.eval_every > 0 && (it % cfg.eval_every == 0 || it == cfg.iterations);
        if eval {
            let n = if it % cfg.eval_every == 0 {
                cfg.eval_every
            } else {
                it % cfg.eval_every
            };
            let acc = match heldout {
                Some(d) if cfg.objective == Objective::Joint && !d.is_empty() => Some(head_accuracy(net, d)?),
                _ => None,
            };
            let cp = Checkpoint {
                iteration: it,
                train_loss: since / n as f64,
                heldout_accuracy: acc,
            };
            on_checkpoint(&cp);
            report.checkpoints.push(cp);
            since = 0.0;
        }
    }
    Ok(report)
}

/// Means of consecutive non-overlapping windows (a trailing partial window
/// is dropped).
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks_exact(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
