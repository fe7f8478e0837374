//! Checkpoint file format, version 1.
//!
//! Layout: an 8-byte magic, a little-endian u64 length, a JSON manifest
//! (format name, version, model and training configuration, dataset
//! fingerprint, final metrics), then one block per tensor: `u32` name
//! length, the name, `u32` rank, `u64` dimensions, and the values as
//! little-endian f64. Running statistics are stored alongside the weights,
//! so a loaded model reproduces inference bit-for-bit. The reader rejects
//! unknown versions, unknown manifest fields, and unknown, duplicate,
//! missing, or misshapen tensors.

use super::train::{EpochStats, TrainConfig};
use super::{DenseBlock, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"STENLAB1";
const FORMAT_NAME: &str = "stencil-lab-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    model: ModelConfig,
    train: TrainConfig,
    dataset_fingerprint: String,
    label_shuffle: Option<u64>,
    epochs_completed: usize,
    #[serde(rename = "final")]
    final_stats: Option<EpochStats>,
}

/// A trained model with the context needed to evaluate it honestly: the
/// training configuration (whose seed reproduces the train/test split), the
/// fingerprint of the dataset it was trained on, and the shuffle seed when
/// the labels were deliberately scrambled for a null control.
#[derive(Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub train: TrainConfig,
    pub dataset_fingerprint: String,
    pub label_shuffle: Option<u64>,
    pub epochs_completed: usize,
    pub final_stats: Option<EpochStats>,
}

fn push_array(out: &mut Vec<u8>, name: &str, dims: &[u64], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    debug_assert_eq!(dims.iter().product::<u64>() as usize, data.len());
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_block(out: &mut Vec<u8>, prefix: &str, i: usize, blk: &DenseBlock) {
    let w_dims = [blk.w.nrows() as u64, blk.w.ncols() as u64];
    push_array(
        out,
        &format!("{prefix}{i}.w"),
        &w_dims,
        blk.w.as_slice().expect("layout"),
    );
    for (suffix, arr) in [
        ("b", &blk.b),
        ("gamma", &blk.gamma),
        ("beta", &blk.beta),
        ("run_mean", &blk.run_mean),
        ("run_var", &blk.run_var),
    ] {
        push_array(
            out,
            &format!("{prefix}{i}.{suffix}"),
            &[arr.len() as u64],
            arr.as_slice().expect("layout"),
        );
    }
}

/// Serializes a checkpoint. The byte stream is a pure function of its
/// contents, so identical runs produce identical files.
pub fn to_bytes(c: &Checkpoint) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: VERSION,
        model: c.params.config.clone(),
        train: c.train,
        dataset_fingerprint: c.dataset_fingerprint.clone(),
        label_shuffle: c.label_shuffle,
        epochs_completed: c.epochs_completed,
        final_stats: c.final_stats,
    };
    let mjson = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(mjson.len() as u64).to_le_bytes());
    out.extend_from_slice(&mjson);
    for (i, blk) in c.params.point.iter().enumerate() {
        push_block(&mut out, "point", i, blk);
    }
    for (i, blk) in c.params.dense.iter().enumerate() {
        push_block(&mut out, "dense", i, blk);
    }
    push_array(
        &mut out,
        "out.w",
        &[c.params.out_w.nrows() as u64, c.params.out_w.ncols() as u64],
        c.params.out_w.as_slice().expect("layout"),
    );
    push_array(
        &mut out,
        "out.b",
        &[c.params.out_b.len() as u64],
        c.params.out_b.as_slice().expect("layout"),
    );
    Ok(out)
}

pub fn save(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(c)?).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::Format("tensor size overflows".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

type ArrayMap = BTreeMap<String, (Vec<u64>, Vec<f64>)>;

fn take2(map: &mut ArrayMap, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
    if dims != [rows as u64, cols as u64] {
        return Err(Error::Format(format!(
            "tensor `{name}` has shape {dims:?}, expected [{rows}, {cols}]"
        )));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("validated shape"))
}

fn take1(map: &mut ArrayMap, name: &str, len: usize) -> Result<Array1<f64>> {
    let (dims, data) = map
        .remove(name)
        .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
    if dims != [len as u64] {
        return Err(Error::Format(format!(
            "tensor `{name}` has shape {dims:?}, expected [{len}]"
        )));
    }
    Ok(Array1::from_vec(data))
}

fn take_block(
    map: &mut ArrayMap,
    prefix: &str,
    i: usize,
    fan_in: usize,
    fan_out: usize,
) -> Result<DenseBlock> {
    Ok(DenseBlock {
        w: take2(map, &format!("{prefix}{i}.w"), fan_in, fan_out)?,
        b: take1(map, &format!("{prefix}{i}.b"), fan_out)?,
        gamma: take1(map, &format!("{prefix}{i}.gamma"), fan_out)?,
        beta: take1(map, &format!("{prefix}{i}.beta"), fan_out)?,
        run_mean: take1(map, &format!("{prefix}{i}.run_mean"), fan_out)?,
        run_var: take1(map, &format!("{prefix}{i}.run_var"), fan_out)?,
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(
            "not a stencil-lab checkpoint (bad magic)".into(),
        ));
    }
    let mlen = r.u64()? as usize;
    let manifest: Manifest = serde_json::from_slice(r.take(mlen)?)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.format != FORMAT_NAME {
        return Err(Error::Format(format!(
            "unknown checkpoint format `{}`",
            manifest.format
        )));
    }
    if manifest.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} (this build reads {VERSION})",
            manifest.version
        )));
    }
    manifest.model.validate()?;

    let mut arrays = ArrayMap::new();
    while !r.done() {
        let name_len = r.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::Format("tensor name too long".into()));
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Format(format!("tensor `{name}` has rank {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u64()?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::Format(format!("tensor `{name}` size overflows")))?;
        let data = r.f64_vec(count)?;
        if arrays.insert(name.clone(), (dims, data)).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
    }

    let config = manifest.model;
    let mut point = Vec::new();
    let mut fan_in = 2;
    for (i, &w) in config.point_widths.iter().enumerate() {
        point.push(take_block(&mut arrays, "point", i, fan_in, w)?);
        fan_in = w;
    }
    let mut dense = Vec::new();
    for (i, &w) in config.dense_widths.iter().enumerate() {
        dense.push(take_block(&mut arrays, "dense", i, fan_in, w)?);
        fan_in = w;
    }
    let out_w = take2(&mut arrays, "out.w", fan_in, config.num_classes)?;
    let out_b = take1(&mut arrays, "out.b", config.num_classes)?;
    if let Some((name, _)) = arrays.iter().next() {
        return Err(Error::Format(format!("unknown tensor `{name}`")));
    }

    Ok(Checkpoint {
        params: ModelParams {
            config,
            point,
            dense,
            out_w,
            out_b,
        },
        train: manifest.train,
        dataset_fingerprint: manifest.dataset_fingerprint,
        label_shuffle: manifest.label_shuffle,
        epochs_completed: manifest.epochs_completed,
        final_stats: manifest.final_stats,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
