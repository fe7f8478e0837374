//! Train a model, then classify individual stencils it has never seen.
//!
//! The classifier sees only normalized geometry: center first and at the
//! origin, farthest node at distance 1 (`normalize` produces this form from
//! any sample). The demonstration picks the cleanest and the worst held-out
//! stencil by error measure and checks the model's view of both.
//!
//!     cargo run --release --example classify_stencil

use stencil_lab::labeling::build_dataset;
use stencil_lab::model::net::predict;
use stencil_lab::model::train::{evaluate_split, train, TrainConfig};
use stencil_lab::{DatasetConfig, ModelConfig};

fn main() -> stencil_lab::Result<()> {
    let dataset = build_dataset(&DatasetConfig {
        seed: 3,
        spacing_h: 0.05,
        sizes: vec![9],
        count_per_size: 2000,
        ..DatasetConfig::default()
    })?;
    let mut model = ModelConfig::with_input_size(dataset.max_size);
    model.point_widths = vec![64, 64, 128];
    model.dense_widths = vec![128];
    let config = TrainConfig {
        epochs: 20,
        batch_size: 64,
        ..TrainConfig::default()
    };
    println!(
        "training a reduced-width model on {} records",
        dataset.records.len()
    );
    let outcome = train(&dataset, &model, &config, |_| {})?;
    let (_, acc) = evaluate_split(&outcome.params, &dataset, &outcome.split.test)?;
    println!("held-out accuracy {acc:.3} (chance = 0.25)\n");

    // The best and worst held-out stencils by error measure, plus the one
    // closest to the median border: unseen during training.
    let by = |pick: fn(f64, f64) -> bool| {
        outcome
            .split
            .test
            .iter()
            .copied()
            .reduce(|a, b| {
                if pick(dataset.records[a].epsilon, dataset.records[b].epsilon) {
                    a
                } else {
                    b
                }
            })
            .expect("non-empty test split")
    };
    let median = dataset.borders.median(9).expect("borders for size 9");
    let nearest_median = outcome
        .split
        .test
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = (dataset.records[a].epsilon - median).abs();
            let db = (dataset.records[b].epsilon - median).abs();
            da.partial_cmp(&db).expect("finite")
        })
        .expect("non-empty test split");

    for (name, idx) in [
        ("cleanest held-out stencil", by(|a, b| a < b)),
        ("borderline held-out stencil", nearest_median),
        ("worst held-out stencil", by(|a, b| a > b)),
    ] {
        let record = &dataset.records[idx];
        let (class, probs) = predict(&outcome.params, &record.stencil)?;
        println!(
            "{name}: epsilon = {:.4}, true {}, predicted {} with p = {:?}",
            record.epsilon,
            record.quartile.expect("labeled").label(),
            class.label(),
            probs.map(|p| (p * 1000.0).round() / 1000.0)
        );
    }
    Ok(())
}
