//! Score stencil quality with the error measure and split a batch into
//! quartile classes.
//!
//! The measure sums, over three analytic test fields, the absolute
//! difference between the stencil's approximation and the exact dx, dy, and
//! Laplacian at the central node. Low means trustworthy geometry; the
//! quartile borders turn the continuous score into four balanced classes.
//!
//!     cargo run --example error_labels

use stencil_lab::labeling::{assign_class, compute_borders, error_measure, QuartileBorders};
use stencil_lab::node_gen::{fill_nodes, normalize, sample_stencil};
use stencil_lab::{GenConfig, Point2, Rect, StencilSample};

fn ring_stencil(n: usize) -> stencil_lab::Result<stencil_lab::Stencil> {
    let mut nodes = vec![Point2::new(0.0, 0.0)];
    for k in 0..n {
        let theta = std::f64::consts::TAU * k as f64 / n as f64;
        nodes.push(Point2::new(theta.cos(), theta.sin()));
    }
    normalize(&StencilSample {
        nodes,
        center_index: 0,
    })
}

fn near_collinear_stencil(n: usize) -> stencil_lab::Result<stencil_lab::Stencil> {
    // Nodes strung along a line with small uneven offsets. Without
    // symmetry to cancel the odd truncation terms, the thin direction is
    // poorly resolved and the derivative errors grow.
    let mut nodes = vec![Point2::new(0.0, 0.0)];
    for k in 0..n {
        let t = -1.0 + 2.0 * k as f64 / (n - 1) as f64;
        let off = 0.02 * if k % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + 0.3 * k as f64);
        nodes.push(Point2::new(t, off));
    }
    normalize(&StencilSample {
        nodes,
        center_index: 0,
    })
}

fn main() -> stencil_lab::Result<()> {
    let good = ring_stencil(8)?;
    let bad = near_collinear_stencil(8)?;
    println!("epsilon, symmetric ring = {:.4}", error_measure(&good)?);
    println!("epsilon, near-collinear = {:.4}", error_measure(&bad)?);

    // Score a batch of sampled stencils and derive the quartile borders.
    let config = GenConfig {
        spacing_h: 0.05,
        stencil_size_s: 9,
        candidate_pool_m: 27,
        ..GenConfig::default()
    };
    let cloud = fill_nodes(Rect::unit(), config.spacing_h, config.seed)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
    let mut epsilons = Vec::new();
    while epsilons.len() < 200 {
        let stencil = normalize(&sample_stencil(&cloud, &config, &mut rng)?)?;
        if let Ok(eps) = error_measure(&stencil) {
            epsilons.push(eps);
        }
    }

    let cuts = compute_borders(&epsilons, 9)?;
    let mut borders = QuartileBorders::default();
    borders.insert(9, cuts);
    println!("batch of {}: borders = {:.4?}", epsilons.len(), cuts);

    let mut counts = [0usize; 4];
    for &eps in &epsilons {
        counts[assign_class(eps, 9, &borders)?.index()] += 1;
    }
    println!("class counts Q1..Q4    = {counts:?} (balanced by construction)");
    Ok(())
}
