use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backbone::Model;
use super::optim::{Adam, AdamConfig, StepSchedule};
use crate::dataset::{flip_horizontal, flip_vertical, MultiLabelDataset, Split};
use crate::metrics::{self, MetricReport};
use crate::numerics::{sigmoid, DiffGraph, Tensor};
use crate::params::ParamStore;
use crate::rng::{self, RngState};
use crate::{Error, Result};

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

/// Images per forward pass when only predictions are needed.
const INFERENCE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub bce_epsilon: f64,
    /// Per-sample probability of a left-right flip.
    pub hflip: f64,
    /// Per-sample probability of a top-bottom flip.
    pub vflip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            decay_factor: 0.1,
            decay_every: 25,
            batch_size: 16,
            epochs: 80,
            adam: AdamConfig::default(),
            seed: 0,
            bce_epsilon: 1e-7,
            hflip: 0.5,
            vflip: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.decay_factor, self.bce_epsilon, self.adam.eps];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite()))
            || self.decay_every == 0
            || self.batch_size == 0
            || self.epochs == 0
        {
            return Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")));
        }
        let unit = [self.hflip, self.vflip, self.adam.beta1, self.adam.beta2];
        if unit.iter().any(|v| !(0.0..=1.0).contains(v)) || self.adam.beta1 == 1.0 || self.adam.beta2 == 1.0 {
            return Err(Error::InvalidArgument("flip probabilities and betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule { base: self.lr, factor: self.decay_factor, every: self.decay_every }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_f1_example: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model carrying the parameters of the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub final_params: ParamStore,
    /// Shuffling/augmentation stream after the last epoch.
    pub rng_state: RngState,
}

pub fn train(model: Model, data: &MultiLabelDataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(model, data, tc, |_| {})
}

/// Like [`train`], calling `observe` after every epoch.
pub fn train_with_observer(
    mut model: Model,
    data: &MultiLabelDataset,
    tc: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    tc.validate()?;
    data.validate()?;
    if data.classes() != model.classes() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} labels, model predicts {}",
            data.classes(),
            model.classes()
        )));
    }
    let mut order = data.indices(Split::Train);
    let val = data.indices(Split::Val);
    if order.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    let val_targets = data.label_rows(&val);
    let schedule = tc.schedule();
    let mut adam = Adam::new(tc.adam);
    let mut r = rng::seeded(rng::derive_seed(tc.seed, "train"));
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 0..tc.epochs {
        let lr = schedule.lr(epoch);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(tc.batch_size).enumerate() {
            let mut images = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len() * data.classes());
            for &i in batch {
                let mut img = data.image_tensor(i);
                if r.random_bool(tc.hflip) {
                    img = flip_horizontal(&img);
                }
                if r.random_bool(tc.vflip) {
                    img = flip_vertical(&img);
                }
                images.push(img);
                targets.extend(data.labels[i].iter().map(|&v| f64::from(v)));
            }
            let mut g = DiffGraph::new();
            let (logits, bindings) = model.record(&mut g, &images)?;
            let loss = g.bce_loss(logits, &targets, tc.bce_epsilon)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, step, loss: value });
            }
            g.backward_scalar(loss)?;
            adam.step(&mut model.params, &bindings.gradients(&g), lr)?;
            loss_sum += value * batch.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_pred = predict_indices(&model, data, &val, DEFAULT_DECISION_THRESHOLD)?;
        let val_f1 = metrics::example_based_scores(&val_pred, &val_targets, 1)?.f_beta;
        let record = EpochRecord { epoch, lr, train_loss, val_f1_example: val_f1 };
        observe(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f) {
            best = Some((val_f1, epoch, model.params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    let final_params = core::mem::replace(&mut model.params, best_params);
    Ok(TrainOutcome { model, history, best_epoch, final_params, rng_state: RngState::capture(&r) })
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("decision threshold {threshold} outside (0, 1)")));
    }
    Ok(())
}

/// Logits of many images, evaluated in fixed-size chunks.
pub fn predict_logits(model: &Model, images: &[Tensor]) -> Result<Tensor> {
    let c = model.classes();
    let mut out = Vec::with_capacity(images.len() * c);
    for chunk in images.chunks(INFERENCE_CHUNK) {
        out.extend_from_slice(model.forward_images(chunk)?.data());
    }
    Tensor::new([images.len(), c], out)
}

/// Binary predictions: label present when `sigmoid(logit) >= threshold`.
pub fn predict(model: &Model, images: &[Tensor], threshold: f64) -> Result<Vec<Vec<u8>>> {
    check_threshold(threshold)?;
    let logits = predict_logits(model, images)?;
    Ok(logits
        .data()
        .chunks(model.classes())
        .map(|row| row.iter().map(|&z| u8::from(sigmoid(z) >= threshold)).collect())
        .collect())
}

fn predict_indices(model: &Model, data: &MultiLabelDataset, idx: &[usize], threshold: f64) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(INFERENCE_CHUNK) {
        let images: Vec<Tensor> = chunk.iter().map(|&i| data.image_tensor(i)).collect();
        out.extend(predict(model, &images, threshold)?);
    }
    Ok(out)
}

/// Predictions and metric report of `model` on one split.
pub fn evaluate_split(
    model: &Model,
    data: &MultiLabelDataset,
    split: Split,
    threshold: f64,
) -> Result<(Vec<Vec<u8>>, MetricReport)> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::EmptySplit(split.name()));
    }
    let pred = predict_indices(model, data, &idx, threshold)?;
    let report = metrics::evaluate(&pred, &data.label_rows(&idx), &data.vocabulary)?;
    Ok((pred, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, BackboneConfig};
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn zero_logits_predict_everything_at_half() {
        let mut m = build_model(BackboneConfig { stage_channels: [2, 2, 2, 2], ..BackboneConfig::new([1, 4, 4], 2) }, None, None, None, 0).unwrap();
        for (_, t) in m.params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let img = Tensor::zeros([1, 4, 4]);
        assert_eq!(predict(&m, &[img.clone()], 0.5).unwrap(), vec![vec![1, 1]]);
        m.params.get_mut("classifier.bias").unwrap().data_mut().copy_from_slice(&[10.0, -10.0]);
        assert_eq!(predict(&m, &[img.clone()], 0.5).unwrap(), vec![vec![1, 0]]);
        assert!(predict(&m, &[img.clone()], 0.0).is_err());
        assert!(predict(&m, &[img], 1.0).is_err());
    }

    #[test]
    fn empty_splits_are_rejected() {
        let data = MultiLabelDataset {
            image_shape: [1, 4, 4],
            images: vec![0.0; 32],
            labels: vec![vec![1, 0], vec![0, 1]],
            vocabulary: vec!["a".to_string(), "b".to_string()],
            image_ids: vec!["x".to_string(), "y".to_string()],
            groups: vec![0, 0],
            splits: vec![Split::Train, Split::Test],
        };
        let m = build_model(BackboneConfig { stage_channels: [2, 2, 2, 2], ..BackboneConfig::new([1, 4, 4], 2) }, None, None, None, 0).unwrap();
        let err = train(m, &data, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap_err();
        assert_eq!(err, Error::EmptySplit("val"));
    }
}
