//! Forward and backward passes.
//!
//! Training-mode forward normalizes with batch statistics and applies
//! inverted dropout after the dense-head activations; inference-mode forward
//! uses the running statistics and no dropout, so a trained network is a
//! pure deterministic function of its input. All reductions are either
//! elementwise or fixed-order folds, which keeps the pooled features
//! bitwise identical under any permutation of a stencil's non-central rows.

use super::{BlockGrad, DenseBlock, Gradients, ModelParams, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::labeling::{pad_stencil, Quartile};
use crate::node_gen::Stencil;
use ndarray::{Array1, Array2, Array3, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Inference batches are processed in chunks of this many stencils to bound
/// peak memory independently of dataset size.
pub const INFER_CHUNK: usize = 1024;

/// How a training-mode forward pass normalizes each block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; running statistics are updated as a side effect.
    Batch,
    /// Running statistics treated as constants, with no update. Removes the
    /// batch-coupling terms from the loss, so gradients can be checked
    /// against finite differences parameter by parameter.
    Frozen,
}

/// Per-block tensors kept for the backward pass. `z` is the affine output,
/// `h` the batch-norm output before the activation; the normalized values
/// are recomputed from `z`, `mu`, `inv_std` instead of being stored.
pub(crate) struct BlockCache {
    x: Array2<f64>,
    z: Array2<f64>,
    mu: Array1<f64>,
    inv_std: Array1<f64>,
    h: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one training-mode forward pass.
pub struct Cache {
    batch: usize,
    size_s: usize,
    mode: NormMode,
    point: Vec<BlockCache>,
    argmax: Array2<usize>,
    dense: Vec<BlockCache>,
    head_x: Array2<f64>,
    pub probs: Array2<f64>,
}

fn check_input(params: &ModelParams, input: &Array3<f64>) -> Result<(usize, usize)> {
    let (b, s, c) = input.dim();
    if b == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if s != params.config.input_size || c != 2 {
        return Err(Error::Contract(format!(
            "input shape ({b}, {s}, {c}) does not match the model's ({}, 2) points",
            params.config.input_size
        )));
    }
    Ok((b, s))
}

/// Affine, normalization, scale-shift, ReLU, optional inverted dropout.
/// In batch mode the running statistics are updated (biased batch variance
/// normalizes, the Bessel-corrected one feeds the running average); in
/// frozen mode the stored running statistics normalize and nothing changes.
fn block_forward_train(
    blk: &mut DenseBlock,
    x: Array2<f64>,
    dropout: Option<(&mut ChaCha8Rng, f64)>,
    mode: NormMode,
) -> (BlockCache, Array2<f64>) {
    let z = x.dot(&blk.w) + &blk.b;
    let (mu, inv_std) = match mode {
        NormMode::Batch => {
            let n = z.nrows() as f64;
            let mu = z.mean_axis(Axis(0)).expect("non-empty batch");
            let var = z.var_axis(Axis(0), 0.0);
            let inv_std = (&var + BN_EPS).mapv(|v| 1.0 / v.sqrt());

            let bessel = if n > 1.5 { n / (n - 1.0) } else { 1.0 };
            Zip::from(&mut blk.run_mean)
                .and(&mu)
                .for_each(|r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
            Zip::from(&mut blk.run_var)
                .and(&var)
                .for_each(|r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * bessel);
            (mu, inv_std)
        }
        NormMode::Frozen => (
            blk.run_mean.clone(),
            (&blk.run_var + BN_EPS).mapv(|v| 1.0 / v.sqrt()),
        ),
    };

    let mut h = z.clone();
    for mut row in h.rows_mut() {
        row -= &mu;
        row *= &inv_std;
        row *= &blk.gamma;
        row += &blk.beta;
    }
    let mut a = h.mapv(|v| v.max(0.0));
    let mask = dropout.map(|(rng, p)| {
        let keep = 1.0 / (1.0 - p);
        let mask = Array2::from_shape_simple_fn(a.raw_dim(), || {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        a *= &mask;
        mask
    });
    (
        BlockCache {
            x,
            z,
            mu,
            inv_std,
            h,
            mask,
        },
        a,
    )
}

fn block_forward_infer(blk: &DenseBlock, x: &Array2<f64>) -> Array2<f64> {
    let inv_std = (&blk.run_var + BN_EPS).mapv(|v| 1.0 / v.sqrt());
    let mut h = x.dot(&blk.w) + &blk.b;
    for mut row in h.rows_mut() {
        row -= &blk.run_mean;
        row *= &inv_std;
        row *= &blk.gamma;
        row += &blk.beta;
    }
    h.mapv_inplace(|v| v.max(0.0));
    h
}

/// Global max over each sample's rows, with the winning row index per
/// feature. Strict comparison makes ties resolve to the lowest index, so
/// central-node padding (duplicate rows) never perturbs the result.
fn maxpool(a: Array2<f64>, b: usize, s: usize) -> (Array2<f64>, Array2<usize>) {
    let c = a.ncols();
    let a3 = a.into_shape_with_order((b, s, c)).expect("row-major stack");
    let mut pooled = a3.index_axis(Axis(1), 0).to_owned();
    let mut argmax = Array2::<usize>::zeros((b, c));
    for k in 1..s {
        Zip::from(&mut pooled)
            .and(&mut argmax)
            .and(a3.index_axis(Axis(1), k))
            .for_each(|p, idx, &v| {
                if v > *p {
                    *p = v;
                    *idx = k;
                }
            });
    }
    (pooled, argmax)
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    logits
}

/// Training-mode forward pass. `dropout_rng` enables inverted dropout on the
/// dense head; pass `None` for deterministic losses (e.g. gradient checks).
/// In [`NormMode::Batch`] running statistics are updated as a side effect.
pub fn forward_train(
    params: &mut ModelParams,
    input: &Array3<f64>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    mode: NormMode,
) -> Result<Cache> {
    let (b, s) = check_input(params, input)?;
    let rate = params.config.dropout;
    let mut x = input
        .to_owned()
        .into_shape_with_order((b * s, 2))
        .expect("row-major input");

    let mut point = Vec::with_capacity(params.point.len());
    for blk in params.point.iter_mut() {
        let (cache, a) = block_forward_train(blk, x, None, mode);
        point.push(cache);
        x = a;
    }
    let (pooled, argmax) = maxpool(x, b, s);

    let mut dense = Vec::with_capacity(params.dense.len());
    let mut x = pooled;
    for blk in params.dense.iter_mut() {
        let dropout = if rate > 0.0 {
            dropout_rng.as_deref_mut().map(|rng| (rng, rate))
        } else {
            None
        };
        let (cache, a) = block_forward_train(blk, x, dropout, mode);
        dense.push(cache);
        x = a;
    }
    let logits = x.dot(&params.out_w) + &params.out_b;
    let probs = softmax_rows(logits);
    Ok(Cache {
        batch: b,
        size_s: s,
        mode,
        point,
        argmax,
        dense,
        head_x: x,
        probs,
    })
}

/// Inference-mode forward pass: running statistics, no dropout. A pure
/// function of the parameters and the input.
pub fn forward_infer(params: &ModelParams, input: &Array3<f64>) -> Result<Array2<f64>> {
    let (b, s) = check_input(params, input)?;
    let flat = input
        .to_owned()
        .into_shape_with_order((b * s, 2))
        .expect("row-major input");
    let mut x = flat;
    for blk in &params.point {
        x = block_forward_infer(blk, &x);
    }
    let (pooled, _) = maxpool(x, b, s);
    let mut x = pooled;
    for blk in &params.dense {
        x = block_forward_infer(blk, &x);
    }
    Ok(softmax_rows(x.dot(&params.out_w) + &params.out_b))
}

/// Re-estimates every block's running statistics under the current weights:
/// one batch-mode pass over `chunks`, accumulating each block's affine
/// outputs, then one exact population estimate per block (the mean, and the
/// variance with the same Bessel correction the running update applies).
///
/// With few batches per epoch the momentum-0.99 running average trails the
/// weights by several epochs, so a freshly trained model can rank stencils
/// well yet normalize them badly at inference; refreshing after the last
/// update removes that mismatch. Deterministic: no dropout, fixed chunk
/// order, and the final values do not depend on the statistics the pass
/// started from.
pub fn refresh_running_stats(params: &mut ModelParams, chunks: &[Array3<f64>]) -> Result<()> {
    let dims: Vec<usize> = params
        .point
        .iter()
        .chain(&params.dense)
        .map(DenseBlock::fan_out)
        .collect();
    let mut count = vec![0.0f64; dims.len()];
    let mut sum: Vec<Array1<f64>> = dims.iter().map(|&d| Array1::zeros(d)).collect();
    let mut sumsq: Vec<Array1<f64>> = dims.iter().map(|&d| Array1::zeros(d)).collect();
    for chunk in chunks {
        let cache = forward_train(params, chunk, None, NormMode::Batch)?;
        for (i, bc) in cache.point.iter().chain(&cache.dense).enumerate() {
            count[i] += bc.z.nrows() as f64;
            sum[i] += &bc.z.sum_axis(Axis(0));
            sumsq[i] += &bc.z.mapv(|v| v * v).sum_axis(Axis(0));
        }
    }
    if count.iter().any(|&n| n < 2.0) {
        return Err(Error::InsufficientData(
            "statistics refresh needs at least two rows per block".into(),
        ));
    }
    let blocks = params.point.iter_mut().chain(params.dense.iter_mut());
    for (i, blk) in blocks.enumerate() {
        let n = count[i];
        let mean = &sum[i] / n;
        // Bessel-corrected population variance, clamped against rounding.
        blk.run_var = Zip::from(&sumsq[i])
            .and(&mean)
            .map_collect(|&sq, &m| ((sq - n * m * m) / (n - 1.0)).max(0.0));
        blk.run_mean = mean;
    }
    Ok(())
}

/// Mean cross-entropy with the probability clamped away from zero.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    assert_eq!(probs.nrows(), labels.len());
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[(i, y)].max(1e-12).ln())
        .sum();
    total / labels.len() as f64
}

/// Index of the row maximum, lowest index on ties.
pub fn argmax_row(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    assert_eq!(probs.nrows(), labels.len());
    let mut hits = 0usize;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if argmax_row(row) == y {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

fn block_backward(
    blk: &DenseBlock,
    bc: BlockCache,
    mut da: Array2<f64>,
    g: &mut BlockGrad,
    mode: NormMode,
) -> Array2<f64> {
    if let Some(mask) = &bc.mask {
        da *= mask;
    }
    Zip::from(&mut da).and(&bc.h).for_each(|d, &h| {
        if h <= 0.0 {
            *d = 0.0;
        }
    });
    let dh = da;

    let mut xhat = bc.z;
    for mut row in xhat.rows_mut() {
        row -= &bc.mu;
        row *= &bc.inv_std;
    }

    g.beta = dh.sum_axis(Axis(0));
    let mut dgamma = Array1::<f64>::zeros(dh.ncols());
    for (drow, xrow) in dh.rows().into_iter().zip(xhat.rows()) {
        Zip::from(&mut dgamma)
            .and(&drow)
            .and(&xrow)
            .for_each(|g, &d, &x| *g += d * x);
    }
    g.gamma = dgamma;

    let mut dxhat = dh;
    for mut row in dxhat.rows_mut() {
        row *= &blk.gamma;
    }
    match mode {
        NormMode::Batch => {
            let n = dxhat.nrows() as f64;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let mut sum_dxx = Array1::<f64>::zeros(dxhat.ncols());
            for (drow, xrow) in dxhat.rows().into_iter().zip(xhat.rows()) {
                Zip::from(&mut sum_dxx)
                    .and(&drow)
                    .and(&xrow)
                    .for_each(|s, &d, &x| *s += d * x);
            }
            // Batch-statistics chain rule: dz = inv_std/n * (n*dxhat
            // - sum(dxhat) - xhat * sum(dxhat*xhat)).
            for (mut drow, xrow) in dxhat.rows_mut().into_iter().zip(xhat.rows()) {
                Zip::from(&mut drow)
                    .and(&xrow)
                    .and(&sum_dxhat)
                    .and(&sum_dxx)
                    .and(&bc.inv_std)
                    .for_each(|d, &x, &sd, &sdx, &inv| {
                        *d = inv / n * (n * *d - sd - x * sdx);
                    });
            }
        }
        // Frozen statistics are constants, so the chain rule is elementwise.
        NormMode::Frozen => {
            for mut row in dxhat.rows_mut() {
                row *= &bc.inv_std;
            }
        }
    }
    let dz = dxhat;

    g.w = bc.x.t().dot(&dz);
    g.b = dz.sum_axis(Axis(0));
    dz.dot(&blk.w.t())
}

/// Backward pass for the mean cross-entropy loss of a training-mode forward.
pub fn backward(params: &ModelParams, cache: Cache, labels: &[usize]) -> Gradients {
    assert_eq!(cache.batch, labels.len());
    let mut grads = Gradients::zeros_like(params);
    let b = cache.batch;
    let s = cache.size_s;

    let mut dlogits = cache.probs;
    for (i, &y) in labels.iter().enumerate() {
        dlogits[(i, y)] -= 1.0;
    }
    dlogits.mapv_inplace(|v| v / b as f64);

    grads.out_w = cache.head_x.t().dot(&dlogits);
    grads.out_b = dlogits.sum_axis(Axis(0));
    let mut da = dlogits.dot(&params.out_w.t());

    for ((blk, bc), g) in params
        .dense
        .iter()
        .rev()
        .zip(cache.dense.into_iter().rev())
        .zip(grads.dense.iter_mut().rev())
    {
        da = block_backward(blk, bc, da, g, cache.mode);
    }

    let c = da.ncols();
    let mut dstack = Array2::zeros((b * s, c));
    for i in 0..b {
        for j in 0..c {
            dstack[(i * s + cache.argmax[(i, j)], j)] += da[(i, j)];
        }
    }
    let mut d = dstack;
    for ((blk, bc), g) in params
        .point
        .iter()
        .rev()
        .zip(cache.point.into_iter().rev())
        .zip(grads.point.iter_mut().rev())
    {
        d = block_backward(blk, bc, d, g, cache.mode);
    }
    grads
}

/// Stacks stencils into a padded `(batch, input_size, 2)` tensor.
pub fn batch_input(stencils: &[&Stencil], input_size: usize) -> Result<Array3<f64>> {
    let mut x = Array3::zeros((stencils.len(), input_size, 2));
    for (i, st) in stencils.iter().enumerate() {
        let padded = pad_stencil(st, input_size)?;
        for (k, p) in padded.iter().enumerate() {
            x[(i, k, 0)] = p.x;
            x[(i, k, 1)] = p.y;
        }
    }
    Ok(x)
}

/// Class probabilities and argmax classes for a stencil list, evaluated in
/// inference mode in fixed-size chunks.
pub fn predict_batch(
    params: &ModelParams,
    stencils: &[&Stencil],
) -> Result<(Vec<Quartile>, Array2<f64>)> {
    let mut probs = Array2::zeros((stencils.len(), params.config.num_classes));
    let mut classes = Vec::with_capacity(stencils.len());
    for (chunk_idx, chunk) in stencils.chunks(INFER_CHUNK).enumerate() {
        let x = batch_input(chunk, params.config.input_size)?;
        let p = forward_infer(params, &x)?;
        for (i, row) in p.rows().into_iter().enumerate() {
            let global = chunk_idx * INFER_CHUNK + i;
            probs.row_mut(global).assign(&row);
            classes.push(Quartile::from_index(argmax_row(row)).expect("4 classes"));
        }
    }
    Ok((classes, probs))
}

/// Class and probability vector for a single normalized stencil.
pub fn predict(params: &ModelParams, stencil: &Stencil) -> Result<(Quartile, [f64; 4])> {
    let (classes, probs) = predict_batch(params, &[stencil])?;
    let row = probs.row(0);
    Ok((classes[0], [row[0], row[1], row[2], row[3]]))
}
