//! Stencil quality labels and dataset assembly.
//!
//! Each stencil receives a scalar error `epsilon`: the sum of absolute
//! offsets between the RBF-FD approximation and the exact analytic value,
//! over both gradient components and the Laplacian, across the three default
//! test fields, all evaluated at the central node. Lower is better. The
//! continuous error is then discretized into four balanced quartile classes,
//! with borders computed separately for every stencil size.

pub mod io;

use crate::error::{Error, Result};
use crate::fields::{default_fields, TestField};
use crate::node_gen::{
    fill_nodes, normalize, recenter_variants, sample_stencil, GenConfig, NodeCloud, Point2, Rect,
    Stencil,
};
use crate::rbf_fd::{apply_weights, solve_weights_all, NUM_MONOMIALS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Quality class of a stencil: Q1 holds the best quarter (lowest epsilon),
/// Q4 the worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

pub const ALL_QUARTILES: [Quartile; 4] = [Quartile::Q1, Quartile::Q2, Quartile::Q3, Quartile::Q4];

impl Quartile {
    /// Zero-based class index, Q1 -> 0.
    pub fn index(self) -> usize {
        match self {
            Quartile::Q1 => 0,
            Quartile::Q2 => 1,
            Quartile::Q3 => 2,
            Quartile::Q4 => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Quartile> {
        ALL_QUARTILES.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Quartile::Q1 => "Q1",
            Quartile::Q2 => "Q2",
            Quartile::Q3 => "Q3",
            Quartile::Q4 => "Q4",
        }
    }
}

/// A stencil together with its error label and, once borders exist, its
/// quartile class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStencil {
    pub stencil: Stencil,
    pub epsilon: f64,
    pub size_s: usize,
    pub quartile: Option<Quartile>,
}

/// Three ascending quartile cut values per stencil size. The middle cut is
/// the size's median error, which the better-than-median analysis relies on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuartileBorders {
    per_size: BTreeMap<usize, [f64; 3]>,
}

impl QuartileBorders {
    pub fn insert(&mut self, size_s: usize, cuts: [f64; 3]) {
        self.per_size.insert(size_s, cuts);
    }

    pub fn get(&self, size_s: usize) -> Option<&[f64; 3]> {
        self.per_size.get(&size_s)
    }

    /// The median error of a size (the Q2/Q3 border).
    pub fn median(&self, size_s: usize) -> Option<f64> {
        self.per_size.get(&size_s).map(|c| c[1])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64; 3])> {
        self.per_size.iter().map(|(&s, c)| (s, c))
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_size.keys().copied()
    }
}

/// Everything that determines a dataset: the node-cloud domain and spacing,
/// the sizes and record counts, and the sampling parameters. The candidate
/// pool for a size-s stencil holds `pool_factor * s` nearest neighbors.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub domain: Rect,
    pub spacing_h: f64,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub pool_factor: f64,
    pub decay_beta: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            domain: Rect::unit(),
            spacing_h: 0.02,
            sizes: vec![15],
            count_per_size: 1000,
            pool_factor: 3.0,
            decay_beta: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Contract("at least one stencil size required".into()));
        }
        let mut uniq = self.sizes.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.sizes.len() {
            return Err(Error::Contract("duplicate stencil sizes".into()));
        }
        if let Some(&s) = self.sizes.iter().find(|&&s| s < NUM_MONOMIALS) {
            return Err(Error::Contract(format!(
                "stencil size {s} below the unisolvency minimum {NUM_MONOMIALS}"
            )));
        }
        if self.count_per_size < 4 {
            return Err(Error::InsufficientData(format!(
                "quartile borders need at least 4 records per size, got {}",
                self.count_per_size
            )));
        }
        if !(self.pool_factor.is_finite() && self.pool_factor >= 1.0) {
            return Err(Error::Contract(format!(
                "pool factor must be at least 1, got {}",
                self.pool_factor
            )));
        }
        if !(self.decay_beta.is_finite() && self.decay_beta >= 0.0) {
            return Err(Error::Contract(format!(
                "decay beta must be finite and non-negative, got {}",
                self.decay_beta
            )));
        }
        Ok(())
    }
}

/// Generation parameters recorded alongside a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub domain: Rect,
    pub spacing_h: f64,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    /// Candidate pool size per stencil size, as a multiple of the size.
    pub pool_factor: f64,
    pub decay_beta: f64,
    pub fields: [TestField; 3],
}

/// A labeled stencil collection with its per-size quartile borders and the
/// configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<LabeledStencil>,
    pub max_size: usize,
    pub borders: QuartileBorders,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Record count per (size, class); every count is within 1 of a quarter
    /// of the size's total by construction.
    pub fn class_counts(&self) -> BTreeMap<(usize, Quartile), usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            if let Some(q) = r.quartile {
                *counts.entry((r.size_s, q)).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// The scalar quality error of a stencil: for each default test field,
/// the absolute offsets of both gradient components and of the Laplacian
/// between the weighted sum and the exact value at the central node, all
/// summed. Componentwise, unnormalized; always non-negative.
pub fn error_measure(stencil: &Stencil) -> Result<f64> {
    let [dx, dy, lap] = solve_weights_all(stencil)?;
    let origin = Point2::new(0.0, 0.0);
    let mut eps = 0.0;
    for field in default_fields() {
        let vals: Vec<f64> = stencil.coords().iter().map(|&p| field.value(p)).collect();
        let (gx, gy) = field.gradient(origin);
        eps += (apply_weights(&dx, &vals)? - gx).abs();
        eps += (apply_weights(&dy, &vals)? - gy).abs();
        eps += (apply_weights(&lap, &vals)? - field.laplacian(origin)).abs();
    }
    Ok(eps)
}

/// Quartile cut values at the 25th, 50th and 75th percentiles using the
/// sorted-rank convention: cut k sits at index `ceil(k*N/4) - 1`.
pub fn compute_borders(epsilons: &[f64], size_s: usize) -> Result<[f64; 3]> {
    let n = epsilons.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "size {size_s}: quartile borders need at least 4 samples, got {n}"
        )));
    }
    if epsilons.iter().any(|e| !e.is_finite()) {
        return Err(Error::Contract("non-finite epsilon".into()));
    }
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let cut = |k: usize| sorted[(k * n).div_ceil(4) - 1];
    Ok([cut(1), cut(2), cut(3)])
}

/// Class of an error value under the given borders. A value exactly equal to
/// a cut goes to the lower class.
pub fn assign_class(epsilon: f64, size_s: usize, borders: &QuartileBorders) -> Result<Quartile> {
    let cuts = borders.get(size_s).ok_or(Error::MissingBorders(size_s))?;
    Ok(if epsilon <= cuts[0] {
        Quartile::Q1
    } else if epsilon <= cuts[1] {
        Quartile::Q2
    } else if epsilon <= cuts[2] {
        Quartile::Q3
    } else {
        Quartile::Q4
    })
}

/// Rank-based class assignment for a full sample: matches [`assign_class`]
/// whenever the errors are distinct, and keeps every class within 1 of N/4
/// even under ties (ties broken by input position).
fn assign_balanced(epsilons: &[f64]) -> Vec<Quartile> {
    let n = epsilons.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        epsilons[a]
            .partial_cmp(&epsilons[b])
            .expect("finite")
            .then(a.cmp(&b))
    });
    let t1 = n.div_ceil(4);
    let t2 = (2 * n).div_ceil(4);
    let t3 = (3 * n).div_ceil(4);
    let mut classes = vec![Quartile::Q1; n];
    for (rank, &i) in order.iter().enumerate() {
        classes[i] = if rank < t1 {
            Quartile::Q1
        } else if rank < t2 {
            Quartile::Q2
        } else if rank < t3 {
            Quartile::Q3
        } else {
            Quartile::Q4
        };
    }
    classes
}

/// Pads a stencil's coordinates to `target_size` by appending copies of the
/// central node (the origin). The original coordinates are left untouched;
/// a global max over per-point features cannot change under this padding.
pub fn pad_stencil(stencil: &Stencil, target_size: usize) -> Result<Vec<Point2>> {
    let s = stencil.size_s();
    if target_size < s {
        return Err(Error::Contract(format!(
            "cannot pad a size-{s} stencil down to {target_size}"
        )));
    }
    let mut coords = stencil.coords().to_vec();
    coords.resize(target_size, Point2::new(0.0, 0.0));
    Ok(coords)
}

/// Permutes the quartile labels among records of the same size. Used as a
/// null-model control: a classifier trained on shuffled labels must not beat
/// chance on held-out data.
pub fn shuffle_labels(dataset: &mut Dataset, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        by_size.entry(r.size_s).or_default().push(i);
    }
    for idx in by_size.values() {
        let mut labels: Vec<Option<Quartile>> =
            idx.iter().map(|&i| dataset.records[i].quartile).collect();
        for i in (1..labels.len()).rev() {
            let j = rng.random_range(0..=i);
            labels.swap(i, j);
        }
        for (&i, q) in idx.iter().zip(labels) {
            dataset.records[i].quartile = q;
        }
    }
}

/// Per-sample RNG stream: independent of everything else so generation is
/// reproducible no matter how samples are scheduled across threads.
fn stream_key(size_s: usize, sample_index: u64) -> u64 {
    ((size_s as u64) << 32) | sample_index
}

/// Draws sample `index` for one size and labels all of its re-centered
/// variants. `None` drops the whole sample (degenerate geometry somewhere in
/// its variants); the caller compensates by drawing further indices.
fn label_sample(cloud: &NodeCloud, config: &GenConfig, index: u64) -> Option<Vec<(Stencil, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream_key(config.stencil_size_s, index));
    let sample = sample_stencil(cloud, config, &mut rng).ok()?;
    let mut batch = Vec::with_capacity(sample.nodes.len());
    for variant in recenter_variants(&sample) {
        let st = normalize(&variant).ok()?;
        let eps = error_measure(&st).ok()?;
        batch.push((st, eps));
    }
    Some(batch)
}

/// Generates exactly `count` labeled stencils of one size, in waves of
/// index-keyed parallel work so the result does not depend on thread count.
fn generate_size(
    cloud: &NodeCloud,
    config: &GenConfig,
    count: usize,
) -> Result<Vec<(Stencil, f64)>> {
    const WAVE: u64 = 256;
    let s = config.stencil_size_s;
    let attempt_limit = (count.div_ceil(s) as u64) * 100 + 10_000;
    let mut out = Vec::with_capacity(count + s);
    let mut next = 0u64;
    while out.len() < count {
        if next >= attempt_limit {
            return Err(Error::InsufficientData(format!(
                "size {s}: generation keeps producing degenerate stencils \
                 ({next} samples tried for {count} records)"
            )));
        }
        let wave: Vec<Option<Vec<(Stencil, f64)>>> = (next..next + WAVE)
            .into_par_iter()
            .map(|j| label_sample(cloud, config, j))
            .collect();
        next += WAVE;
        for batch in wave.into_iter().flatten() {
            out.extend(batch);
        }
    }
    out.truncate(count);
    Ok(out)
}

/// Builds a labeled multi-size dataset: one node cloud, then per size the
/// pipeline sample -> recenter -> normalize -> error measure -> borders ->
/// class assignment. Samples whose variants fail the weight solve are
/// discarded and replaced. Deterministic for a fixed configuration.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let cloud = fill_nodes(config.domain, config.spacing_h, config.seed)?;

    let count_per_size = config.count_per_size;
    let mut records = Vec::with_capacity(config.sizes.len() * count_per_size);
    let mut borders = QuartileBorders::default();
    for &s in &config.sizes {
        let pool_m = ((config.pool_factor * s as f64).round() as usize).max(s);
        if cloud.len() < pool_m {
            return Err(Error::InsufficientCandidates {
                have: cloud.len(),
                need: pool_m,
            });
        }
        let gen = GenConfig {
            seed: config.seed,
            spacing_h: config.spacing_h,
            stencil_size_s: s,
            candidate_pool_m: pool_m,
            decay_beta: config.decay_beta,
        };
        gen.validate()?;
        let labeled = generate_size(&cloud, &gen, count_per_size)?;
        let epsilons: Vec<f64> = labeled.iter().map(|(_, e)| *e).collect();
        borders.insert(s, compute_borders(&epsilons, s)?);
        let classes = assign_balanced(&epsilons);
        for ((stencil, epsilon), quartile) in labeled.into_iter().zip(classes) {
            records.push(LabeledStencil {
                stencil,
                epsilon,
                size_s: s,
                quartile: Some(quartile),
            });
        }
    }

    Ok(Dataset {
        records,
        max_size: *config.sizes.iter().max().expect("non-empty"),
        borders,
        meta: DatasetMeta {
            seed: config.seed,
            domain: config.domain,
            spacing_h: config.spacing_h,
            sizes: config.sizes.clone(),
            count_per_size,
            pool_factor: config.pool_factor,
            decay_beta: config.decay_beta,
            fields: default_fields(),
        },
    })
}
