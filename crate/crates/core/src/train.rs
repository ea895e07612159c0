//! The training loop: shuffled mini-batches, optional on-the-fly
//! augmentation, Adam updates, and per-epoch train/validation statistics.
//!
//! All randomness (shuffling, augmentation) derives from the run seed, so a
//! fixed configuration reproduces bit-identical weights.

use crate::data::{
    augment, derive_seed, fisher_yates, normalize, one_hot, sample_stream, stack_images,
    AugmentConfig, Dataset,
};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{cross_entropy, softmax, Reduction};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::{ReduceOp, Tensor};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub seed: u64,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 0.001,
            seed: 0,
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f32,
    pub train_acc: f32,
    /// `None` when there is no validation split.
    pub val_acc: Option<f32>,
}

/// Builds the `[N,H,W,3]` / `[N,K]` batch for the given sample indices,
/// augmenting (when configured) and normalizing each image.
fn prepare_batch(
    dataset: &Dataset,
    indices: &[usize],
    epoch: usize,
    cfg: &TrainConfig,
) -> Result<(Tensor, Tensor)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &idx in indices {
        let sample = &dataset.samples[idx];
        let raw = match &cfg.augment {
            Some(acfg) => {
                let mut stream = sample_stream(acfg.seed, epoch as u64, idx as u64);
                augment(&sample.image, acfg, &mut stream)?
            }
            None => sample.image.clone(),
        };
        images.push(normalize(&raw)?);
        labels.push(sample.label);
    }
    stack_images(
        images.iter().zip(labels.iter().copied()),
        indices.len(),
        dataset.num_classes,
    )
}

/// One optimizer step on a prepared batch. Returns (mean loss, correct count).
pub fn train_step(
    model: &mut Model,
    images: &Tensor,
    onehot: &Tensor,
    adam: &mut AdamState,
) -> Result<(f32, usize)> {
    let (logits, cache) = model.forward_train(images)?;
    let probs = softmax(&logits)?;
    let (loss, d_logits) = cross_entropy(&probs, onehot, Reduction::Mean)?;
    let correct = count_correct(&probs, onehot)?;
    let grads = model.backward(&cache, &d_logits)?;
    let mut params = model.trainable_params_mut();
    let mut param_refs: Vec<(&str, &mut Tensor)> = params
        .iter_mut()
        .map(|(n, t)| (n.as_str(), &mut **t))
        .collect();
    let grad_refs: Vec<(&str, &Tensor)> = grads.iter().map(|(n, t)| (n.as_str(), t)).collect();
    adam.step(&mut param_refs, &grad_refs)?;
    Ok((loss, correct))
}

fn count_correct(probs: &Tensor, onehot: &Tensor) -> Result<usize> {
    let pred = Tensor::reduce(ReduceOp::Argmax, probs, 1)?;
    let actual = Tensor::reduce(ReduceOp::Argmax, onehot, 1)?;
    Ok(pred
        .data()
        .iter()
        .zip(actual.data())
        .filter(|(a, b)| a == b)
        .count())
}

/// Eval-mode (actual, predicted) labels over a dataset. Images are
/// normalized, never augmented.
pub fn evaluate_predictions(model: &Model, dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut actual = Vec::with_capacity(dataset.len());
    let mut predicted = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(32) {
        let mut images = Vec::with_capacity(chunk.len());
        for &i in chunk {
            images.push(normalize(&dataset.samples[i].image)?);
        }
        let (batch, _) = stack_images(
            images
                .iter()
                .zip(chunk.iter().map(|&i| dataset.samples[i].label)),
            chunk.len(),
            dataset.num_classes,
        )?;
        let logits = model.infer(&batch)?;
        let probs = softmax(&logits)?;
        let pred = Tensor::reduce(ReduceOp::Argmax, &probs, 1)?;
        for (&i, &p) in chunk.iter().zip(pred.data()) {
            actual.push(dataset.samples[i].label);
            predicted.push(p as usize);
        }
    }
    Ok((actual, predicted))
}

/// Fraction of samples the model classifies correctly in eval mode.
pub fn evaluate_accuracy(model: &Model, dataset: &Dataset) -> Result<f32> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
    }
    let (actual, predicted) = evaluate_predictions(model, dataset)?;
    let hits = actual.iter().zip(&predicted).filter(|(a, p)| a == p).count();
    Ok(hits as f32 / actual.len() as f32)
}

/// Trains for up to `cfg.epochs` epochs, invoking `on_epoch` after each one;
/// returning `false` from the callback stops early. Training accuracy is
/// accumulated from the training batches themselves; validation accuracy is
/// an eval-mode pass over `val_set`.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats) -> bool,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut history = Vec::with_capacity(cfg.epochs);
    let n = train_set.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        fisher_yates(&mut order, derive_seed(cfg.seed, epoch as u64));
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (images, labels) = prepare_batch(train_set, chunk, epoch, cfg)?;
            let (loss, hits) = train_step(model, &images, &labels, &mut adam)?;
            loss_sum += loss as f64 * chunk.len() as f64;
            correct += hits;
        }
        let val_acc = match val_set {
            Some(v) if !v.is_empty() => Some(evaluate_accuracy(model, v)?),
            _ => None,
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: (loss_sum / n as f64) as f32,
            train_acc: correct as f32 / n as f32,
            val_acc,
        };
        let keep_going = on_epoch(&stats);
        history.push(stats);
        if !keep_going {
            break;
        }
    }
    Ok(history)
}

/// One-hot labels for a whole batch.
pub fn labels_to_onehot(labels: &[usize], k: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        let row = one_hot(l, k)?;
        out.data_mut()[i * k..(i + 1) * k].copy_from_slice(row.data());
    }
    Ok(out)
}
