//! A from-scratch point-cloud classifier over stencil coordinates.
//!
//! The network is deliberately simple: a stack of shared per-point blocks
//! (affine, batch norm, ReLU) lifts each 2-d node into a feature vector, a
//! global max-pool over the stencil's nodes makes the representation
//! order-independent, and a dense head (affine, batch norm, ReLU, dropout)
//! followed by a softmax layer predicts one of the four quality classes.
//! Everything runs in f64 and every random choice comes from a counter-based
//! stream of the training seed, so runs are bit-reproducible.

pub mod adam;
pub mod checkpoint;
pub mod net;
pub mod train;

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Streams carved out of the training seed: the split, the parameter init,
/// and the epoch-time randomness (shuffling and dropout) never share draws.
pub(crate) const STREAM_SPLIT: u64 = 1;
pub(crate) const STREAM_INIT: u64 = 2;
pub(crate) const STREAM_TRAIN: u64 = 3;

pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Architecture hyperparameters. `input_size` is the padded stencil size the
/// network expects; shorter stencils are padded with copies of the central
/// node, which cannot alter a max-pooled feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub point_widths: Vec<usize>,
    pub dense_widths: Vec<usize>,
    pub num_classes: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// The default architecture for a given padded stencil size.
    pub fn with_input_size(input_size: usize) -> Self {
        ModelConfig {
            input_size,
            point_widths: vec![128, 128, 128, 256, 2048],
            dense_widths: vec![1024, 512],
            num_classes: 4,
            dropout: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 2 {
            return Err(Error::Contract(format!(
                "input size must be at least 2, got {}",
                self.input_size
            )));
        }
        if self.point_widths.is_empty() || self.dense_widths.is_empty() {
            return Err(Error::Contract(
                "point and dense width lists must not be empty".into(),
            ));
        }
        if self
            .point_widths
            .iter()
            .chain(&self.dense_widths)
            .any(|&w| w == 0)
        {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        if self.num_classes != 4 {
            return Err(Error::Contract(format!(
                "the quartile classifier needs 4 classes, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One affine + batch-norm block. `w` is (fan_in, fan_out); the running
/// statistics feed normalization at inference time.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub run_mean: Array1<f64>,
    pub run_var: Array1<f64>,
}

impl DenseBlock {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseBlock {
        let bound = (6.0 / fan_in as f64).sqrt();
        DenseBlock {
            w: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound)),
            b: Array1::zeros(fan_out),
            gamma: Array1::ones(fan_out),
            beta: Array1::zeros(fan_out),
            run_mean: Array1::zeros(fan_out),
            run_var: Array1::ones(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// Full parameter set of the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub point: Vec<DenseBlock>,
    pub dense: Vec<DenseBlock>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

/// Fresh parameters: weights from the uniform He fan-in rule, biases and
/// batch-norm shifts at zero, scales and running variances at one. The init
/// stream of `seed` drives every draw in a fixed block order.
pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_INIT);
    let mut point = Vec::new();
    let mut fan_in = 2;
    for &w in &config.point_widths {
        point.push(DenseBlock::init(&mut rng, fan_in, w));
        fan_in = w;
    }
    let mut dense = Vec::new();
    for &w in &config.dense_widths {
        dense.push(DenseBlock::init(&mut rng, fan_in, w));
        fan_in = w;
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let out_w = Array2::from_shape_simple_fn((fan_in, config.num_classes), || {
        rng.random_range(-bound..bound)
    });
    Ok(ModelParams {
        config: config.clone(),
        point,
        dense,
        out_w,
        out_b: Array1::zeros(config.num_classes),
    })
}

/// Gradients for every trainable parameter, in the same block layout as
/// [`ModelParams`]. Running statistics are not trainable and have no slot.
#[derive(Clone, Debug)]
pub struct BlockGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub point: Vec<BlockGrad>,
    pub dense: Vec<BlockGrad>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        let zero = |blk: &DenseBlock| BlockGrad {
            w: Array2::zeros(blk.w.raw_dim()),
            b: Array1::zeros(blk.b.raw_dim()),
            gamma: Array1::zeros(blk.gamma.raw_dim()),
            beta: Array1::zeros(blk.beta.raw_dim()),
        };
        Gradients {
            point: params.point.iter().map(zero).collect(),
            dense: params.dense.iter().map(zero).collect(),
            out_w: Array2::zeros(params.out_w.raw_dim()),
            out_b: Array1::zeros(params.out_b.raw_dim()),
        }
    }

    /// Flat views in the canonical parameter order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for blk in self.point.iter().chain(&self.dense) {
            out.push(blk.w.as_slice().expect("standard layout"));
            out.push(blk.b.as_slice().expect("standard layout"));
            out.push(blk.gamma.as_slice().expect("standard layout"));
            out.push(blk.beta.as_slice().expect("standard layout"));
        }
        out.push(self.out_w.as_slice().expect("standard layout"));
        out.push(self.out_b.as_slice().expect("standard layout"));
        out
    }
}

impl ModelParams {
    /// Flat views of the trainable parameters. The canonical order is: every
    /// block contributes `[w, b, gamma, beta]`, point stack first, then the
    /// dense head, then the output affine `[w, b]`. The optimizer and the
    /// gradient check both rely on this order matching [`Gradients::slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for blk in self.point.iter().chain(&self.dense) {
            out.push(blk.w.as_slice().expect("standard layout"));
            out.push(blk.b.as_slice().expect("standard layout"));
            out.push(blk.gamma.as_slice().expect("standard layout"));
            out.push(blk.beta.as_slice().expect("standard layout"));
        }
        out.push(self.out_w.as_slice().expect("standard layout"));
        out.push(self.out_b.as_slice().expect("standard layout"));
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for blk in self.point.iter_mut().chain(self.dense.iter_mut()) {
            out.push(blk.w.as_slice_mut().expect("standard layout"));
            out.push(blk.b.as_slice_mut().expect("standard layout"));
            out.push(blk.gamma.as_slice_mut().expect("standard layout"));
            out.push(blk.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.out_w.as_slice_mut().expect("standard layout"));
        out.push(self.out_b.as_slice_mut().expect("standard layout"));
        out
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

#[cfg(test)]
pub(crate) fn tiny_config(input_size: usize) -> ModelConfig {
    ModelConfig {
        input_size,
        point_widths: vec![8, 16],
        dense_widths: vec![8],
        num_classes: 4,
        dropout: 0.3,
    }
}
