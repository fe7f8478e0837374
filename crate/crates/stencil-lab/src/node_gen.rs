//! Candidate node clouds and randomized stencil sampling.
//!
//! A [`NodeCloud`] is a quasi-uniform fill of a rectangle produced by an
//! advancing-front Poisson-disc algorithm. Stencils are drawn from the cloud
//! by picking a uniformly random central node and sampling its neighborhood
//! with a radially decreasing probability, then brought into a canonical
//! coordinate form: origin at the central node, scaled so the farthest node
//! sits at distance one.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use std::collections::VecDeque;
use std::f64::consts::TAU;

/// Number of evenly spaced candidate directions tried around each front node.
const FRONT_CANDIDATES: usize = 15;

/// Relative slack on the minimum-spacing test so that candidates placed at
/// exactly the spacing radius are not rejected by rounding.
const SPACING_SLACK: f64 = 1e-9;

/// Tolerance on the unit-radius invariant of a normalized stencil.
pub const NORM_TOL: f64 = 1e-9;

/// A point in the 2-D plane, in dimensionless domain units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned rectangle given by its min and max corners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Rect { min, max }
    }

    /// The unit square [0,1] x [0,1].
    pub fn unit() -> Self {
        Rect::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Quasi-uniform candidate node set with a guaranteed minimum spacing.
#[derive(Clone, Debug)]
pub struct NodeCloud {
    points: Vec<Point2>,
    spacing_h: f64,
    domain: Rect,
}

impl NodeCloud {
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing_h(&self) -> f64 {
        self.spacing_h
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    /// Brute-force minimum pairwise distance; O(n^2), intended for
    /// small-cloud verification.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min(a.dist(*b));
            }
        }
        best
    }
}

/// A stencil in cloud coordinates: `s` distinct nodes, one of which is
/// designated the center.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilSample {
    pub nodes: Vec<Point2>,
    pub center_index: usize,
}

/// A stencil in canonical coordinates: the central node first and exactly at
/// the origin, remaining nodes scaled so the farthest lies at distance one.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    coords: Vec<Point2>,
}

impl Stencil {
    /// Validates the canonical-form invariants and wraps the coordinates.
    pub fn new(coords: Vec<Point2>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Contract("a stencil needs at least two nodes".into()));
        }
        if !(coords[0].x == 0.0 && coords[0].y == 0.0) {
            return Err(Error::Contract(
                "stencil not in canonical form: first node must be the origin".into(),
            ));
        }
        let mut max_r: f64 = 0.0;
        for p in &coords {
            if !p.is_finite() {
                return Err(Error::Contract("non-finite stencil coordinate".into()));
            }
            max_r = max_r.max(p.norm());
        }
        if (max_r - 1.0).abs() > NORM_TOL {
            return Err(Error::Contract(
                "stencil not in canonical form: farthest node must lie at distance 1".into(),
            ));
        }
        Ok(Stencil { coords })
    }

    pub fn coords(&self) -> &[Point2] {
        &self.coords
    }

    pub fn size_s(&self) -> usize {
        self.coords.len()
    }
}

/// Knobs for stencil sampling.
///
/// `candidate_pool_m` counts the nearest neighbors of the central node that
/// form the sampling pool, the central node itself included; it must be at
/// least the stencil size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub spacing_h: f64,
    pub stencil_size_s: usize,
    pub candidate_pool_m: usize,
    pub decay_beta: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            spacing_h: 0.02,
            stencil_size_s: 15,
            candidate_pool_m: 45,
            decay_beta: 1.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stencil_size_s < 1 {
            return Err(Error::Contract("stencil size must be at least 1".into()));
        }
        if self.candidate_pool_m < self.stencil_size_s {
            return Err(Error::Contract(format!(
                "candidate pool ({}) smaller than stencil size ({})",
                self.candidate_pool_m, self.stencil_size_s
            )));
        }
        if !(self.spacing_h > 0.0 && self.spacing_h.is_finite()) {
            return Err(Error::Contract("spacing must be positive".into()));
        }
        if !(self.decay_beta >= 0.0 && self.decay_beta.is_finite()) {
            return Err(Error::Contract(
                "decay exponent must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Fills `domain` with quasi-uniformly spaced nodes at target spacing
/// `spacing_h` using an advancing-front Poisson-disc fill.
///
/// Every pair of returned nodes is at least `spacing_h` apart (up to a
/// relative slack of 1e-9), and the node count lands near
/// `domain.area() / spacing_h^2`. The result is a pure function of the
/// arguments.
pub fn fill_nodes(domain: Rect, spacing_h: f64, seed: u64) -> Result<NodeCloud> {
    if domain.area() <= 0.0 || !domain.min.is_finite() || !domain.max.is_finite() {
        return Err(Error::InvalidDomain(format!(
            "domain must have positive area, got {:?}",
            domain
        )));
    }
    let min_side = domain.width().min(domain.height());
    if !(spacing_h > 0.0 && spacing_h.is_finite()) || spacing_h >= min_side {
        return Err(Error::InvalidDomain(format!(
            "spacing {} must be positive and smaller than the domain's shortest side {}",
            spacing_h, min_side
        )));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = spacing_h;
    let h2_min = h * h * (1.0 - SPACING_SLACK);

    // Uniform grid with cell size h: conflicts are confined to the 3x3 cell
    // neighborhood because nodes two cells apart are farther than h.
    let ncx = (domain.width() / h).ceil().max(1.0) as usize;
    let ncy = (domain.height() / h).ceil().max(1.0) as usize;
    let cell_of = |p: Point2| -> usize {
        let ix = (((p.x - domain.min.x) / h) as usize).min(ncx - 1);
        let iy = (((p.y - domain.min.y) / h) as usize).min(ncy - 1);
        iy * ncx + ix
    };
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); ncx * ncy];
    let mut points: Vec<Point2> = Vec::new();

    let conflicts = |points: &[Point2], cells: &[Vec<u32>], p: Point2| -> bool {
        let ix = (((p.x - domain.min.x) / h) as isize).clamp(0, ncx as isize - 1);
        let iy = (((p.y - domain.min.y) / h) as isize).clamp(0, ncy as isize - 1);
        for cy in (iy - 1).max(0)..=(iy + 1).min(ncy as isize - 1) {
            for cx in (ix - 1).max(0)..=(ix + 1).min(ncx as isize - 1) {
                for &j in &cells[cy as usize * ncx + cx as usize] {
                    if points[j as usize].dist2(p) < h2_min {
                        return true;
                    }
                }
            }
        }
        false
    };

    let seed_point = Point2::new(
        domain.min.x + rng.random::<f64>() * domain.width(),
        domain.min.y + rng.random::<f64>() * domain.height(),
    );
    points.push(seed_point);
    cells[cell_of(seed_point)].push(0);
    let mut front: VecDeque<u32> = VecDeque::new();
    front.push_back(0);

    while let Some(i) = front.pop_front() {
        let base = points[i as usize];
        let phase = rng.random::<f64>() * TAU;
        for k in 0..FRONT_CANDIDATES {
            let theta = phase + k as f64 * TAU / FRONT_CANDIDATES as f64;
            let cand = Point2::new(base.x + h * theta.cos(), base.y + h * theta.sin());
            if !domain.contains(cand) || conflicts(&points, &cells, cand) {
                continue;
            }
            let idx = points.len() as u32;
            points.push(cand);
            cells[cell_of(cand)].push(idx);
            front.push_back(idx);
        }
    }

    Ok(NodeCloud {
        points,
        spacing_h,
        domain,
    })
}

/// Indices of the `m` nodes nearest to `points[center]`, the center itself
/// included, ordered by ascending distance with index ties broken upward.
fn nearest_pool(points: &[Point2], center: usize, m: usize) -> Vec<u32> {
    let c = points[center];
    let mut keyed: Vec<(f64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (c.dist2(*p), i as u32))
        .collect();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    };
    if m < keyed.len() {
        keyed.select_nth_unstable_by(m - 1, cmp);
        keyed.truncate(m);
    }
    keyed.sort_by(cmp);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Draws one stencil from the cloud: a uniformly random central node plus
/// `s - 1` distinct neighbors sampled from the `candidate_pool_m` nearest
/// nodes with probability proportional to `(1 + r/h)^-beta`, where `r` is
/// the distance to the center.
///
/// The returned sample lists the central node first (`center_index == 0`).
pub fn sample_stencil<R: Rng>(
    cloud: &NodeCloud,
    config: &GenConfig,
    rng: &mut R,
) -> Result<StencilSample> {
    config.validate()?;
    let s = config.stencil_size_s;
    let m = config.candidate_pool_m;
    if cloud.len() < m {
        return Err(Error::InsufficientCandidates {
            have: cloud.len(),
            need: m,
        });
    }

    let center = rng.random_range(0..cloud.len());
    let pool = nearest_pool(&cloud.points, center, m);
    let c = cloud.points[center];
    let h = cloud.spacing_h;

    // The pool always contains the center at distance zero; the draws cover
    // the remaining pool members.
    let mut cands: Vec<(u32, f64)> = pool
        .into_iter()
        .filter(|&i| i as usize != center)
        .map(|i| {
            let r = c.dist(cloud.points[i as usize]);
            (i, (1.0 + r / h).powf(-config.decay_beta))
        })
        .collect();

    let mut nodes = Vec::with_capacity(s);
    nodes.push(c);
    for _ in 0..s - 1 {
        let total: f64 = cands.iter().map(|&(_, w)| w).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = cands.len() - 1;
        for (i, &(_, w)) in cands.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        let (idx, _) = cands.remove(pick);
        nodes.push(cloud.points[idx as usize]);
    }

    Ok(StencilSample {
        nodes,
        center_index: 0,
    })
}

/// All `s` re-centerings of a sample: the same node set with each node in
/// turn taking the center role. Off-center variants are generally
/// non-symmetric, which enriches generated datasets.
pub fn recenter_variants(sample: &StencilSample) -> Vec<StencilSample> {
    (0..sample.nodes.len())
        .map(|k| StencilSample {
            nodes: sample.nodes.clone(),
            center_index: k,
        })
        .collect()
}

/// Canonicalizes a sample: translates the center to the origin, moves it to
/// the front (remaining nodes keep their relative order), and scales by the
/// distance to the farthest node.
pub fn normalize(sample: &StencilSample) -> Result<Stencil> {
    let s = sample.nodes.len();
    if sample.center_index >= s {
        return Err(Error::Contract("center index out of range".into()));
    }
    let c = sample.nodes[sample.center_index];
    let mut rel = Vec::with_capacity(s);
    rel.push(Point2::new(0.0, 0.0));
    for (i, p) in sample.nodes.iter().enumerate() {
        if i != sample.center_index {
            rel.push(Point2::new(p.x - c.x, p.y - c.y));
        }
    }
    let r_max = rel.iter().map(Point2::norm).fold(0.0, f64::max);
    if r_max <= 0.0 || !r_max.is_finite() {
        return Err(Error::ZeroRadius);
    }
    // An already-normalized input may recompute its max radius one ulp off
    // 1.0; skipping the division there makes normalization exactly
    // idempotent without weakening the unit-radius invariant.
    if (r_max - 1.0).abs() > 16.0 * f64::EPSILON {
        for p in &mut rel[1..] {
            p.x /= r_max;
            p.y /= r_max;
        }
    }
    Stencil::new(rel)
}
