//! The training loop: stratified split, shuffled mini-batches, Adam.
//!
//! Three independent RNG streams of the one training seed keep every source
//! of randomness separate: the train/test split, the parameter init, and the
//! epoch-time randomness (batch shuffling interleaved with dropout masks).
//! Reruns with the same dataset, configuration and seed are bit-identical.

use super::adam::{AdamConfig, AdamState};
use super::net::{
    accuracy, backward, batch_input, cross_entropy, forward_infer, forward_train,
    refresh_running_stats, NormMode, INFER_CHUNK,
};
use super::{init, ModelConfig, ModelParams, STREAM_SPLIT, STREAM_TRAIN};
use crate::error::{Error, Result};
use crate::labeling::Dataset;
use crate::node_gen::Stencil;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 1024,
            test_fraction: 0.2,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Contract("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Contract(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Contract("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Loss and accuracy after one epoch. Train metrics are the running average
/// over the epoch's mini-batches (each batch measured before its update);
/// test metrics are a full inference-mode pass over the held-out split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

/// Sorted record indices of the train and test halves.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub split: Split,
}

/// Splits record indices so every (size, class) group contributes the same
/// fraction to the test set. Group order and the draw sequence are fixed, so
/// the split depends only on the dataset and the seed.
pub fn stratified_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Contract(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        let q = r
            .quartile
            .ok_or_else(|| Error::Contract("record without a class label".into()))?;
        groups.entry((r.size_s, q.index())).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for indices in groups.values() {
        let mut order = indices.clone();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let n_test = ((order.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(order.len());
        test.extend_from_slice(&order[..n_test]);
        train.extend_from_slice(&order[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split left {} train and {} test records",
            train.len(),
            test.len()
        )));
    }
    Ok(Split { train, test })
}

/// Inference-mode loss and accuracy over a set of record indices.
pub fn evaluate_split(
    params: &ModelParams,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::InsufficientData("empty evaluation split".into()));
    }
    let s = params.config.input_size;
    let mut loss_sum = 0.0;
    let mut hit_sum = 0.0;
    for chunk in indices.chunks(INFER_CHUNK) {
        let stencils: Vec<&Stencil> = chunk.iter().map(|&i| &dataset.records[i].stencil).collect();
        let labels: Vec<usize> = chunk
            .iter()
            .map(|&i| dataset.records[i].quartile.expect("labeled").index())
            .collect();
        let x = batch_input(&stencils, s)?;
        let probs = forward_infer(params, &x)?;
        loss_sum += cross_entropy(&probs, &labels) * chunk.len() as f64;
        hit_sum += accuracy(&probs, &labels) * chunk.len() as f64;
    }
    let n = indices.len() as f64;
    Ok((loss_sum / n, hit_sum / n))
}

/// Trains a fresh model on the dataset. `progress` fires once per epoch with
/// the epoch's statistics. After the last epoch the running normalization
/// statistics are re-estimated over the training split, so the returned
/// model can score above the final history row when the statistics lagged.
pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    model_config.validate()?;
    if model_config.input_size < dataset.max_size {
        return Err(Error::Contract(format!(
            "model input size {} cannot hold size-{} stencils",
            model_config.input_size, dataset.max_size
        )));
    }
    let split = stratified_split(dataset, config.test_fraction, config.seed)?;
    let labels: Vec<usize> = dataset
        .records
        .iter()
        .map(|r| {
            r.quartile
                .map(|q| q.index())
                .ok_or_else(|| Error::Contract("record without a class label".into()))
        })
        .collect::<Result<_>>()?;

    let mut params = init(model_config, config.seed)?;
    let mut adam = AdamState::new(config.adam, &params);
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    epoch_rng.set_stream(STREAM_TRAIN);

    let s = model_config.input_size;
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        for i in (1..order.len()).rev() {
            let j = epoch_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut hit_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let stencils: Vec<&Stencil> =
                chunk.iter().map(|&i| &dataset.records[i].stencil).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let x = batch_input(&stencils, s)?;
            let cache = forward_train(&mut params, &x, Some(&mut epoch_rng), NormMode::Batch)?;
            loss_sum += cross_entropy(&cache.probs, &y) * chunk.len() as f64;
            hit_sum += accuracy(&cache.probs, &y) * chunk.len() as f64;
            let grads = backward(&params, cache, &y);
            adam.step(&mut params, &grads);
        }
        let n = order.len() as f64;
        let (test_loss, test_acc) = evaluate_split(&params, dataset, &split.test)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_acc: hit_sum / n,
            test_loss,
            test_acc,
        };
        progress(&stats);
        history.push(stats);
    }
    // The per-epoch test metrics above see the running statistics as they
    // stood mid-training, trailing the weights by up to 1/(1 - momentum)
    // batches. Re-estimate them over the training split under the final
    // weights, so the returned model normalizes the way it was last trained.
    let mut chunks = Vec::with_capacity(split.train.len().div_ceil(config.batch_size));
    for chunk in split.train.chunks(config.batch_size) {
        let stencils: Vec<&Stencil> = chunk.iter().map(|&i| &dataset.records[i].stencil).collect();
        chunks.push(batch_input(&stencils, s)?);
    }
    refresh_running_stats(&mut params, &chunks)?;
    Ok(TrainOutcome {
        params,
        history,
        split,
    })
}

const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

/// Renders the history as CSV with full-precision floats, so equal histories
/// produce byte-identical files.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for e in history {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc
        ));
    }
    out
}

pub fn history_from_csv(text: &str) -> Result<Vec<EpochStats>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HISTORY_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected history header `{HISTORY_HEADER}`, got {other:?}"
            )))
        }
    }
    let mut history = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "history line {}: expected 5 fields, got {}",
                k + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("history line {}: {e}", k + 2)))
        };
        history.push(EpochStats {
            epoch: fields[0]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("history line {}: {e}", k + 2)))?,
            train_loss: num(1)?,
            train_acc: num(2)?,
            test_loss: num(3)?,
            test_acc: num(4)?,
        });
    }
    Ok(history)
}
